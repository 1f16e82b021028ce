//! Low-level dense kernels behind the graph ops.
//!
//! Every kernel is a plain loop over row-major buffers. Outputs are written
//! element-by-element in a fixed order, so results are bit-identical across
//! runs regardless of how callers schedule them.

use crate::scalar::Scalar;

/// y += w * x, the only fused primitive the convolutions need.
#[inline(always)]
fn axpy<F: Scalar>(w: F, xs: &[F], ys: &mut [F]) {
    for (y, &x) in ys.iter_mut().zip(xs) {
        *y += w * x;
    }
}

/// Valid output-column range for which `ox * stride + kx - pad` lands in `[0, w)`.
#[inline]
fn ox_range(w: usize, wo: usize, stride: usize, kx: usize, pad: usize) -> (usize, usize) {
    // smallest ox with ox*stride + kx >= pad
    let lo = if kx >= pad {
        0
    } else {
        (pad - kx).div_ceil(stride)
    };
    // largest ox with ox*stride + kx - pad <= w - 1
    let hi = if w + pad > kx {
        ((w + pad - kx - 1) / stride + 1).min(wo)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// 2-D cross-correlation: input [n, ci, h, w] * kernel [co, ci, kh, kw] -> [n, co, ho, wo].
#[allow(clippy::too_many_arguments)]
pub fn correlate2d<F: Scalar>(
    input: &[F],
    kernel: &[F],
    out: &mut [F],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) {
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    for b in 0..n {
        for oc in 0..co {
            let out_base = (b * co + oc) * ho * wo;
            for ic in 0..ci {
                let in_base = (b * ci + ic) * h * w;
                let k_base = (oc * ci + ic) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wgt = kernel[k_base + ky * kw + kx];
                        let (lo, hi) = ox_range(w, wo, stride, kx, pad);
                        if lo >= hi {
                            continue;
                        }
                        for oy in 0..ho {
                            let iy = oy * stride + ky;
                            if iy < pad || iy - pad >= h {
                                continue;
                            }
                            let in_row = in_base + (iy - pad) * w;
                            let out_row = out_base + oy * wo;
                            if stride == 1 {
                                let off = in_row + lo + kx - pad;
                                axpy(
                                    wgt,
                                    &input[off..off + (hi - lo)],
                                    &mut out[out_row + lo..out_row + hi],
                                );
                            } else {
                                for ox in lo..hi {
                                    let ix = ox * stride + kx - pad;
                                    out[out_row + ox] += wgt * input[in_row + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradient of [`correlate2d`] w.r.t. its input.
#[allow(clippy::too_many_arguments)]
pub fn correlate2d_grad_input<F: Scalar>(
    grad_out: &[F],
    kernel: &[F],
    grad_in: &mut [F],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) {
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    for b in 0..n {
        for oc in 0..co {
            let out_base = (b * co + oc) * ho * wo;
            for ic in 0..ci {
                let in_base = (b * ci + ic) * h * w;
                let k_base = (oc * ci + ic) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wgt = kernel[k_base + ky * kw + kx];
                        let (lo, hi) = ox_range(w, wo, stride, kx, pad);
                        if lo >= hi {
                            continue;
                        }
                        for oy in 0..ho {
                            let iy = oy * stride + ky;
                            if iy < pad || iy - pad >= h {
                                continue;
                            }
                            let in_row = in_base + (iy - pad) * w;
                            let out_row = out_base + oy * wo;
                            if stride == 1 {
                                let off = in_row + lo + kx - pad;
                                axpy(
                                    wgt,
                                    &grad_out[out_row + lo..out_row + hi],
                                    &mut grad_in[off..off + (hi - lo)],
                                );
                            } else {
                                for ox in lo..hi {
                                    let ix = ox * stride + kx - pad;
                                    grad_in[in_row + ix] += wgt * grad_out[out_row + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradient of [`correlate2d`] w.r.t. its kernel.
#[allow(clippy::too_many_arguments)]
pub fn correlate2d_grad_kernel<F: Scalar>(
    grad_out: &[F],
    input: &[F],
    grad_kernel: &mut [F],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) {
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    for b in 0..n {
        for oc in 0..co {
            let out_base = (b * co + oc) * ho * wo;
            for ic in 0..ci {
                let in_base = (b * ci + ic) * h * w;
                let k_base = (oc * ci + ic) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let (lo, hi) = ox_range(w, wo, stride, kx, pad);
                        if lo >= hi {
                            continue;
                        }
                        let mut acc = F::zero();
                        for oy in 0..ho {
                            let iy = oy * stride + ky;
                            if iy < pad || iy - pad >= h {
                                continue;
                            }
                            let in_row = in_base + (iy - pad) * w;
                            let out_row = out_base + oy * wo;
                            for ox in lo..hi {
                                let ix = ox * stride + kx - pad;
                                acc += grad_out[out_row + ox] * input[in_row + ix];
                            }
                        }
                        grad_kernel[k_base + ky * kw + kx] += acc;
                    }
                }
            }
        }
    }
}

/// Transposed 2-D correlation: input [n, ci, h, w] * kernel [ci, co, kh, kw]
/// -> [n, co, (h-1)*stride - 2*pad + kh, ...]. Scatter form of the adjoint.
#[allow(clippy::too_many_arguments)]
pub fn transposed_correlate2d<F: Scalar>(
    input: &[F],
    kernel: &[F],
    out: &mut [F],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) {
    let ho = (h - 1) * stride + kh - 2 * pad;
    let wo = (w - 1) * stride + kw - 2 * pad;
    for b in 0..n {
        for ic in 0..ci {
            let in_base = (b * ci + ic) * h * w;
            for oc in 0..co {
                let out_base = (b * co + oc) * ho * wo;
                let k_base = (ic * co + oc) * kh * kw;
                for iy in 0..h {
                    for ix in 0..w {
                        let v = input[in_base + iy * w + ix];
                        for ky in 0..kh {
                            let oy = iy * stride + ky;
                            if oy < pad || oy - pad >= ho {
                                continue;
                            }
                            let out_row = out_base + (oy - pad) * wo;
                            for kx in 0..kw {
                                let ox = ix * stride + kx;
                                if ox < pad || ox - pad >= wo {
                                    continue;
                                }
                                out[out_row + ox - pad] += v * kernel[k_base + ky * kw + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Matrix product a[m,k] * b[k,n] -> out[m,n].
pub fn matmul<F: Scalar>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(a[i * k + p], &b[p * n..(p + 1) * n], out_row);
        }
    }
}

/// Bilinear lookup of `img[h, w]` at continuous coordinates, border-clamped.
///
/// Integer coordinates reproduce the stored pixel bit-exactly.
#[inline]
pub fn bilinear_sample_clamped<F: Scalar>(img: &[F], h: usize, w: usize, y: F, x: F) -> F {
    let (y0, y1, wy) = clamp_axis(y, h);
    let (x0, x1, wx) = clamp_axis(x, w);
    let one = F::one();
    let v00 = img[y0 * w + x0];
    let v01 = img[y0 * w + x1];
    let v10 = img[y1 * w + x0];
    let v11 = img[y1 * w + x1];
    (one - wy) * ((one - wx) * v00 + wx * v01) + wy * ((one - wx) * v10 + wx * v11)
}

/// Splits a clamped continuous coordinate into (floor cell, next cell, fraction).
#[inline]
pub fn clamp_axis<F: Scalar>(v: F, len: usize) -> (usize, usize, F) {
    let max = F::from_f64_c((len - 1) as f64);
    let v = v.max(F::zero()).min(max);
    let f = v.floor();
    let i0 = f.to_usize().unwrap_or(0).min(len - 1);
    if i0 + 1 >= len {
        (len - 1, len - 1, F::zero())
    } else {
        (i0, i0 + 1, v - f)
    }
}
