//! Two-dimensional discrete Fourier transforms over real grids.
//!
//! Spectra are kept in standard (unshifted) FFT bin order; the signed
//! normalized frequency of bin `k` on an axis of length `n` lies in
//! [-0.5, 0.5) cycles/pixel. The forward transform is unnormalized, the
//! inverse carries the 1/(width*height) factor, so a round trip is the
//! identity up to floating-point rounding. Arbitrary (including odd)
//! dimensions are handled by the mixed-radix planner.

use crate::grid::Grid2;
use num_complex::Complex;
use rustfft::FftPlanner;

/// Complex spectrum of a `width × height` real grid, row-major, unshifted.
#[derive(Debug, Clone)]
pub struct Spectrum2D {
    width: usize,
    height: usize,
    coeffs: Vec<Complex<f64>>,
}

impl Spectrum2D {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coefficients(&self) -> &[Complex<f64>] {
        &self.coeffs
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex<f64>] {
        &mut self.coeffs
    }

    pub fn from_coefficients(width: usize, height: usize, coeffs: Vec<Complex<f64>>) -> Self {
        assert_eq!(coeffs.len(), width * height);
        Self {
            width,
            height,
            coeffs,
        }
    }

    #[inline]
    pub fn at(&self, kx: usize, ky: usize) -> Complex<f64> {
        self.coeffs[ky * self.width + kx]
    }

    /// Total spectral energy Σ|X|².
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Signed normalized frequency of bin `k` on an axis of `n` bins, in
/// [-0.5, 0.5) cycles/pixel.
#[inline]
pub fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= (n - 1) / 2 {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Index of the conjugate-mirror bin of `k` on an axis of `n` bins.
#[inline]
pub fn mirror_index(k: usize, n: usize) -> usize {
    (n - k) % n
}

fn transpose(buf: &[Complex<f64>], width: usize, height: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); buf.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = buf[y * width + x];
        }
    }
    out
}

fn fft2_in_layout(
    mut buf: Vec<Complex<f64>>,
    width: usize,
    height: usize,
    forward: bool,
) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::new();
    let row_fft = if forward {
        planner.plan_fft_forward(width)
    } else {
        planner.plan_fft_inverse(width)
    };
    row_fft.process(&mut buf);
    let mut cols = transpose(&buf, width, height);
    let col_fft = if forward {
        planner.plan_fft_forward(height)
    } else {
        planner.plan_fft_inverse(height)
    };
    col_fft.process(&mut cols);
    transpose(&cols, height, width)
}

/// Unnormalized forward 2D DFT of a real grid. Both dimensions must be ≥ 2.
pub fn forward_dft2(image: &Grid2) -> Spectrum2D {
    let (w, h) = (image.width(), image.height());
    assert!(w >= 2 && h >= 2, "spectral transforms need dimensions >= 2");
    let buf: Vec<Complex<f64>> = image
        .values()
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    let coeffs = fft2_in_layout(buf, w, h, true);
    Spectrum2D {
        width: w,
        height: h,
        coeffs,
    }
}

/// Inverse 2D DFT; returns the real part of the normalized inverse transform.
pub fn inverse_dft2(spectrum: &Spectrum2D) -> Grid2 {
    let (w, h) = (spectrum.width, spectrum.height);
    let coeffs = fft2_in_layout(spectrum.coeffs.clone(), w, h, false);
    let scale = 1.0 / (w * h) as f64;
    Grid2::from_vec(w, h, coeffs.into_iter().map(|c| c.re * scale).collect())
}
