//! Dense row-major 2D grids of real values, the working representation for
//! images, modes and residuals.

use serde::{Deserialize, Serialize};

/// A width × height grid of `f64` stored row-major (`data[y * width + x]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid2 {
    /// Creates a zero-filled grid. Panics if either dimension is zero.
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be nonzero");
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Wraps an existing row-major buffer. Panics on length mismatch.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            width * height,
            "buffer length must be width*height"
        );
        assert!(width > 0 && height > 0, "grid dimensions must be nonzero");
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_vec(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Sum of squared values.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Euclidean norm of the flattened grid.
    pub fn norm(&self) -> f64 {
        self.energy().sqrt()
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise `self - other`. Panics on shape mismatch.
    pub fn sub(&self, other: &Grid2) -> Grid2 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Grid2 {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Element-wise in-place accumulation. Panics on shape mismatch.
    pub fn add_assign(&mut self, other: &Grid2) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, c: f64) -> Grid2 {
        let data = self.data.iter().map(|v| v * c).collect();
        Grid2 {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Bilinear resampling to `side × side` with pixel-center alignment.
    /// Border samples clamp to the source edge.
    pub fn resample_bilinear(&self, side: usize) -> Grid2 {
        assert!(side > 0);
        let sx = self.width as f64 / side as f64;
        let sy = self.height as f64 / side as f64;
        Grid2::from_fn(side, side, |tx, ty| {
            let fx = ((tx as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
            let fy = ((ty as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let x0 = fx.floor() as usize;
            let y0 = fy.floor() as usize;
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let ax = fx - x0 as f64;
            let ay = fy - y0 as f64;
            let top = self.get(x0, y0) * (1.0 - ax) + self.get(x1, y0) * ax;
            let bot = self.get(x0, y1) * (1.0 - ax) + self.get(x1, y1) * ax;
            top * (1.0 - ay) + bot * ay
        })
    }
}

/// SplitMix64 bit mixer, used to derive independent sub-seeds from one
/// experiment seed.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pearson correlation between two equally sized value slices.
/// Returns 0 when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}
