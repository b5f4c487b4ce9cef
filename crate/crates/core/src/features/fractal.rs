//! Fractal dimension of the intensity surface by differential box counting.
//!
//! Intensities are min-max rescaled to the 256 gray levels, the grid is
//! partitioned into s×s blocks for dyadic scales s ∈ {2, 4, …, N/2}, and each
//! block contributes `⌈max/h⌉ − ⌈min/h⌉ + 1` boxes of height `h = s·256/N`.
//! The dimension is the least-squares slope of log N_s against log(N/s);
//! a flat surface gives exactly 2, rough surfaces approach 3.

use super::{quantize_256, FeatureError};
use crate::grid::Grid2;

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Differential box-counting fractal dimension of a square grid with side
/// at least 8 (two usable scales).
pub fn fractal_dimension(grid: &Grid2) -> Result<f64, FeatureError> {
    let n = grid.width();
    if grid.height() != n {
        return Err(FeatureError::ShapeMismatch {
            expected: n,
            got_w: grid.width(),
            got_h: grid.height(),
        });
    }
    if n < 8 {
        return Err(FeatureError::DegenerateImage { side: n });
    }
    let levels = quantize_256(grid);

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut s = 2usize;
    while s <= n / 2 {
        let h = s as f64 * 256.0 / n as f64;
        let mut boxes = 0.0f64;
        let mut by = 0;
        while by < n {
            let y_end = (by + s).min(n);
            let mut bx = 0;
            while bx < n {
                let x_end = (bx + s).min(n);
                let mut lo = u8::MAX;
                let mut hi = u8::MIN;
                for y in by..y_end {
                    let row = &levels[y * n + bx..y * n + x_end];
                    for &v in row {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                boxes += (hi as f64 / h).ceil() - (lo as f64 / h).ceil() + 1.0;
                bx += s;
            }
            by += s;
        }
        xs.push((n as f64 / s as f64).log2());
        ys.push(boxes.log2());
        s *= 2;
    }
    Ok(least_squares_slope(&xs, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_surface_has_dimension_exactly_two() {
        let g = Grid2::from_fn(128, 128, |_, _| 0.25);
        assert_eq!(fractal_dimension(&g).unwrap(), 2.0);
        let g64 = Grid2::from_fn(64, 64, |_, _| -3.0);
        assert_eq!(fractal_dimension(&g64).unwrap(), 2.0);
    }

    #[test]
    fn planar_ramp_stays_near_two() {
        let n = 128;
        let g = Grid2::from_fn(n, n, |x, _| x as f64 / n as f64);
        let fd = fractal_dimension(&g).unwrap();
        assert!((1.95..=2.10).contains(&fd), "ramp FD {fd}");
    }

    #[test]
    fn uniform_noise_is_rough() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = Grid2::from_fn(128, 128, |_, _| rng.random_range(0.0..1.0));
        let fd = fractal_dimension(&g).unwrap();
        assert!((2.4..=3.0).contains(&fd), "noise FD {fd}");
    }

    #[test]
    fn noise_is_rougher_than_ramp() {
        let n = 128;
        let ramp = Grid2::from_fn(n, n, |x, _| x as f64 / n as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Grid2::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
        assert!(fractal_dimension(&noise).unwrap() > fractal_dimension(&ramp).unwrap());
    }

    #[test]
    fn affine_intensity_rescaling_is_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Grid2::from_fn(64, 64, |_, _| rng.random_range(0.0..1.0));
        let scaled = Grid2::from_vec(64, 64, g.values().iter().map(|v| 3.0 * v - 1.2).collect());
        let a = fractal_dimension(&g).unwrap();
        let b = fractal_dimension(&scaled).unwrap();
        assert_eq!(a, b, "min-max normalization precedes counting");
    }

    #[test]
    fn tiny_grids_are_rejected() {
        let g = Grid2::zeros(4, 4);
        assert!(matches!(
            fractal_dimension(&g),
            Err(FeatureError::DegenerateImage { .. })
        ));
        let rect = Grid2::zeros(16, 8);
        assert!(matches!(
            fractal_dimension(&rect),
            Err(FeatureError::ShapeMismatch { .. })
        ));
    }
}
