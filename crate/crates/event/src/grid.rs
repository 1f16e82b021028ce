//! Scalar and two-channel pixel grids shared by the rendering, event and
//! construction code.

use evhand_tensor::Scalar;

use crate::error::{EventError, Result};

/// H x W scalar field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<F: Scalar> {
    height: usize,
    width: usize,
    data: Vec<F>,
}

impl<F: Scalar> Image<F> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![F::zero(); height * width],
        }
    }

    pub fn full(height: usize, width: usize, v: F) -> Self {
        Self {
            height,
            width,
            data: vec![v; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != height * width {
            return Err(EventError::ShapeMismatch(format!(
                "image {height}x{width} given {} values",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> F {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: F) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// H x W two-channel field stored channel-interleaved (`[y][x][2]`), channel
/// 0 horizontal / x, channel 1 vertical / y. Flow fields and spatial
/// gradients both use this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<F: Scalar> {
    height: usize,
    width: usize,
    data: Vec<F>,
}

impl<F: Scalar> VectorField<F> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![F::zero(); height * width * 2],
        }
    }

    pub fn uniform(height: usize, width: usize, u: F, v: F) -> Self {
        let mut data = Vec::with_capacity(height * width * 2);
        for _ in 0..height * width {
            data.push(u);
            data.push(v);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != height * width * 2 {
            return Err(EventError::ShapeMismatch(format!(
                "field {height}x{width}x2 given {} values",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> (F, F) {
        let i = (y * self.width + x) * 2;
        (self.data[i], self.data[i + 1])
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, u: F, v: F) {
        let i = (y * self.width + x) * 2;
        self.data[i] = u;
        self.data[i + 1] = v;
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn negated(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| -v).collect(),
        }
    }

    /// Largest per-pixel Euclidean magnitude.
    pub fn max_magnitude(&self) -> F {
        let mut best = F::zero();
        for i in 0..self.height * self.width {
            let u = self.data[2 * i];
            let v = self.data[2 * i + 1];
            let m = (u * u + v * v).sqrt();
            if m > best {
                best = m;
            }
        }
        best
    }

    /// Clamps each pixel's Euclidean magnitude to `cap`.
    pub fn clamp_magnitude(&mut self, cap: F) {
        for i in 0..self.height * self.width {
            let u = self.data[2 * i];
            let v = self.data[2 * i + 1];
            let m = (u * u + v * v).sqrt();
            if m > cap {
                let s = cap / m;
                self.data[2 * i] = u * s;
                self.data[2 * i + 1] = v * s;
            }
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }
}
