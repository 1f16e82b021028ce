//! Linear-intensity to log-intensity conversion.

use evhand_tensor::Scalar;

use crate::grid::Image;

/// Offset inside the log so zero intensity stays finite.
pub const LOG_EPSILON: f64 = 0.01;

/// ITU-R BT.601 luminance weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// `L = ln(I + 0.01)` for linear intensity `I` in `[0, 1]`.
pub fn linear_to_log<F: Scalar>(linear: &Image<F>) -> Image<F> {
    let eps = F::from_f64_c(LOG_EPSILON);
    linear.map(|v| (v + eps).ln())
}

/// Collapses interleaved `[y][x][rgb]` values to luminance.
pub fn rgb_to_grayscale<F: Scalar>(height: usize, width: usize, rgb: &[F]) -> Image<F> {
    debug_assert_eq!(rgb.len(), height * width * 3);
    let w = LUMA_WEIGHTS.map(F::from_f64_c);
    let mut out = Image::zeros(height, width);
    for i in 0..height * width {
        let v = w[0] * rgb[3 * i] + w[1] * rgb[3 * i + 1] + w[2] * rgb[3 * i + 2];
        out.data_mut()[i] = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_of_zero_is_finite() {
        let img = Image::<f64>::zeros(2, 2);
        let log = linear_to_log(&img);
        assert!(log.data().iter().all(|v| v.is_finite()));
        assert!((log.get(0, 0) - 0.01f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn grayscale_weights() {
        let rgb = vec![1.0f64, 0.0, 0.0];
        let g = rgb_to_grayscale(1, 1, &rgb);
        assert!((g.get(0, 0) - 0.299).abs() < 1e-12);
    }
}
