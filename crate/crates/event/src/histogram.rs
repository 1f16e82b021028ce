//! Per-pixel, per-polarity event counts and the intensity-change quantizer.

use evhand_tensor::{Scalar, Tensor};

use crate::error::{EventError, Result};
use crate::grid::Image;

/// H x W x 2 nonnegative event counts, stored `[y][x][polarity]`.
/// Channel 0 counts positive (brightening) events, channel 1 negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventHistogram {
    height: usize,
    width: usize,
    counts: Vec<u32>,
}

/// Polarity channel indices.
pub const POSITIVE: usize = 0;
pub const NEGATIVE: usize = 1;

impl EventHistogram {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            counts: vec![0; height * width * 2],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, polarity: usize) -> u32 {
        self.counts[(y * self.width + x) * 2 + polarity]
    }

    #[inline]
    pub fn add(&mut self, y: usize, x: usize, polarity: usize, n: u32) {
        self.counts[(y * self.width + x) * 2 + polarity] += n;
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Channels 0 and 1 exchanged. Involutive.
    pub fn polarity_swap(&self) -> Self {
        let mut out = self.clone();
        for px in out.counts.chunks_exact_mut(2) {
            px.swap(0, 1);
        }
        out
    }

    /// Sum of absolute per-cell count differences, both channels.
    pub fn l1_distance(&self, other: &Self) -> u64 {
        debug_assert!(self.same_shape(other));
        self.counts
            .iter()
            .zip(&other.counts)
            .map(|(&a, &b)| (a as i64 - b as i64).unsigned_abs())
            .sum()
    }

    /// Planar `[2, H, W]` tensor of the counts for the encoders.
    pub fn to_tensor<F: Scalar>(&self) -> Tensor<F> {
        let hw = self.height * self.width;
        let mut data = vec![F::zero(); 2 * hw];
        for i in 0..hw {
            data[i] = F::from_f64_c(self.counts[2 * i] as f64);
            data[hw + i] = F::from_f64_c(self.counts[2 * i + 1] as f64);
        }
        Tensor::new(&[2, self.height, self.width], data).expect("consistent shape")
    }

    /// Inverse of [`to_tensor`]: nonnegative `[2, H, W]` values, rounded.
    pub fn from_tensor<F: Scalar>(t: &Tensor<F>) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[0] != 2 {
            return Err(EventError::ShapeMismatch(format!(
                "expected [2, H, W] tensor, got {s:?}"
            )));
        }
        let (h, w) = (s[1], s[2]);
        let hw = h * w;
        let mut out = Self::zeros(h, w);
        for i in 0..hw {
            let pos = t.data()[i].to_f64_c();
            let neg = t.data()[hw + i].to_f64_c();
            out.counts[2 * i] = pos.round().max(0.0) as u32;
            out.counts[2 * i + 1] = neg.round().max(0.0) as u32;
        }
        Ok(out)
    }
}

/// Quantizes a signed per-pixel log-intensity change map into event counts:
/// per pixel, `floor(|delta| / c)` events on the channel matching the sign.
pub fn quantize_change_map<F: Scalar>(delta: &Image<F>, c: F) -> Result<EventHistogram> {
    if c <= F::zero() {
        return Err(EventError::NonpositiveThreshold(c.to_f64_c()));
    }
    let mut out = EventHistogram::zeros(delta.height(), delta.width());
    for y in 0..delta.height() {
        for x in 0..delta.width() {
            let d = delta.get(y, x);
            if d == F::zero() {
                continue;
            }
            let n = (d.abs() / c).floor().to_f64_c() as u32;
            if n > 0 {
                let ch = if d > F::zero() { POSITIVE } else { NEGATIVE };
                out.add(y, x, ch, n);
            }
        }
    }
    Ok(out)
}

/// Elementwise sum of histograms sharing one shape.
pub fn accumulate_histograms(frames: &[EventHistogram]) -> Result<EventHistogram> {
    let first = frames.first().ok_or(EventError::EmptyList)?;
    let mut out = first.clone();
    for f in &frames[1..] {
        if !f.same_shape(first) {
            return Err(EventError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                f.height(),
                f.width(),
                first.height(),
                first.width()
            )));
        }
        for (o, &v) in out.counts.iter_mut().zip(&f.counts) {
            *o += v;
        }
    }
    Ok(out)
}
