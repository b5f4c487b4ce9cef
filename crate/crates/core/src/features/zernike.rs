//! Zernike moment magnitudes on the inscribed square grid.
//!
//! The image is mapped into the unit disk with
//! `x_i = (2i + 1 - N) / (N√2)`, `y_k = (2k + 1 - N) / (N√2)`, which places
//! every pixel strictly inside the disk. Moments use the zeroth-order
//! discrete approximation `Z_pq = 2(p+1)/(πN²) Σ f·R_pq(r)·e^{-jqθ}`;
//! magnitudes are rotation invariant, so only q ≥ 0 is emitted
//! (|Z_{p,q}| = |Z_{p,-q}|).

use super::{FeatureError, ZernikeSpec};
use crate::grid::Grid2;
use num_complex::Complex;
use std::f64::consts::PI;

/// The emitted (p, q) lattice: 0 ≤ q ≤ p ≤ max_order with p − q even, in
/// ascending (p, q) order.
pub fn moment_orders(max_order: u32) -> Vec<(u32, u32)> {
    let mut orders = Vec::new();
    for p in 0..=max_order {
        let mut q = p % 2;
        while q <= p {
            orders.push((p, q));
            q += 2;
        }
    }
    orders
}

/// Exact binomial coefficient, small enough to stay exact in f64 for p ≤ 20.
fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Integer coefficients of `R_pq`: term `s` multiplies `r^(p-2s)` by
/// `(-1)^s (p-s)! / (s! ((p+q)/2 - s)! ((p-q)/2 - s)!)`, expressed as the
/// exact product of two binomials.
fn radial_coefficients(p: u32, q: u32) -> Vec<(f64, u32)> {
    let s_max = (p - q) / 2;
    (0..=s_max)
        .map(|s| {
            let magnitude = binomial(p - s, s) * binomial(p - 2 * s, (p - q) / 2 - s);
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            (sign * magnitude as f64, p - 2 * s)
        })
        .collect()
}

fn check_order(p: u32, q: u32) -> Result<(), FeatureError> {
    if q > p {
        return Err(FeatureError::BadOrder(format!(
            "repetition q = {q} exceeds order p = {p}"
        )));
    }
    if !(p - q).is_multiple_of(2) {
        return Err(FeatureError::BadOrder(format!(
            "p - q must be even, got ({p}, {q})"
        )));
    }
    if p > 20 {
        return Err(FeatureError::BadOrder(
            "order above 20 overflows exact factorials".into(),
        ));
    }
    Ok(())
}

/// Evaluates the radial polynomial `R_pq(r)` for `0 ≤ r ≤ 1`.
pub fn radial_polynomial(p: u32, q: u32, r: f64) -> Result<f64, FeatureError> {
    check_order(p, q)?;
    if !(0.0..=1.0).contains(&r) {
        return Err(FeatureError::BadOrder(format!("radius {r} outside [0, 1]")));
    }
    let value = radial_coefficients(p, q)
        .iter()
        .map(|&(c, power)| c * r.powi(power as i32))
        .sum();
    Ok(value)
}

/// Computes |Z_pq| for every order in [`moment_orders`] over an `N × N` grid
/// matching `spec.grid_side`. Output order matches [`moment_orders`].
pub fn zernike_magnitudes(grid: &Grid2, spec: &ZernikeSpec) -> Result<Vec<f64>, FeatureError> {
    let n = spec.grid_side;
    if grid.width() != n || grid.height() != n {
        return Err(FeatureError::ShapeMismatch {
            expected: n,
            got_w: grid.width(),
            got_h: grid.height(),
        });
    }
    let p_max = spec.max_order as usize;
    let orders = moment_orders(spec.max_order);
    let coeff_tables: Vec<Vec<(f64, u32)>> = orders
        .iter()
        .map(|&(p, q)| radial_coefficients(p, q))
        .collect();

    let scale = 1.0 / (n as f64 * std::f64::consts::SQRT_2);
    let coords: Vec<f64> = (0..n)
        .map(|i| (2 * i + 1) as f64 - n as f64)
        .map(|m| m * scale)
        .collect();

    let mut acc = vec![Complex::new(0.0, 0.0); orders.len()];
    let mut r_pow = vec![0.0f64; p_max + 1];
    let mut e_pow = vec![Complex::new(0.0, 0.0); p_max + 1];
    for (k, &y) in coords.iter().enumerate() {
        for (i, &x) in coords.iter().enumerate() {
            let f = grid.get(i, k);
            if f == 0.0 {
                continue;
            }
            let r = (x * x + y * y).sqrt();
            // The numerator 2i+1-N is odd, so r is never zero.
            let e = Complex::new(x / r, -y / r);
            r_pow[0] = 1.0;
            e_pow[0] = Complex::new(1.0, 0.0);
            for t in 1..=p_max {
                r_pow[t] = r_pow[t - 1] * r;
                e_pow[t] = e_pow[t - 1] * e;
            }
            for (slot, ((_, q), table)) in acc.iter_mut().zip(orders.iter().zip(&coeff_tables)) {
                let mut radial = 0.0;
                for &(c, power) in table {
                    radial += c * r_pow[power as usize];
                }
                *slot += e_pow[*q as usize] * (f * radial);
            }
        }
    }

    let n2 = (n * n) as f64;
    Ok(orders
        .iter()
        .zip(acc)
        .map(|(&(p, _), z)| (2.0 * (p as f64 + 1.0) / (PI * n2) * z).norm())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_size_is_36_for_order_10() {
        assert_eq!(moment_orders(10).len(), 36);
        assert_eq!(moment_orders(0), vec![(0, 0)]);
        assert_eq!(moment_orders(2), vec![(0, 0), (1, 1), (2, 0), (2, 2)]);
    }

    #[test]
    fn radial_polynomial_base_cases() {
        assert_eq!(radial_polynomial(0, 0, 0.3).unwrap(), 1.0);
        assert!((radial_polynomial(2, 0, 0.5).unwrap() - (-0.5)).abs() < 1e-15);
        assert!((radial_polynomial(4, 2, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn radial_polynomial_r_pp_identity() {
        for p in 0..=10u32 {
            for &r in &[0.0, 0.2, 0.5, 0.9, 1.0] {
                let lhs = radial_polynomial(p, p, r).unwrap();
                assert!((lhs - r.powi(p as i32)).abs() < 1e-12, "p={p} r={r}");
            }
        }
    }

    #[test]
    fn radial_polynomial_rejects_bad_orders() {
        assert!(radial_polynomial(1, 2, 0.5).is_err());
        assert!(radial_polynomial(3, 2, 0.5).is_err());
        assert!(radial_polynomial(2, 0, 1.5).is_err());
    }

    fn spec(order: u32, side: usize) -> ZernikeSpec {
        ZernikeSpec {
            max_order: order,
            grid_side: side,
        }
    }

    #[test]
    fn constant_image_z00_is_two_over_pi() {
        for n in [16usize, 33, 64] {
            let g = Grid2::from_fn(n, n, |_, _| 1.0);
            let mags = zernike_magnitudes(&g, &spec(2, n)).unwrap();
            assert!((mags[0] - 2.0 / PI).abs() < 1e-9, "n={n}: {}", mags[0]);
        }
    }

    #[test]
    fn constant_image_z11_cancels() {
        let n = 32;
        let g = Grid2::from_fn(n, n, |_, _| 1.0);
        let mags = zernike_magnitudes(&g, &spec(2, n)).unwrap();
        // Index 1 is (1,1).
        assert!(mags[1] <= 1e-10, "|Z_11| = {}", mags[1]);
    }

    fn rotate90(g: &Grid2) -> Grid2 {
        let n = g.width();
        Grid2::from_fn(n, n, |x, y| g.get(y, n - 1 - x))
    }

    #[test]
    fn magnitudes_are_invariant_under_quarter_turns() {
        use rand::{Rng, SeedableRng};
        let n = 64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let g = Grid2::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
        let r = rotate90(&g);
        let a = zernike_magnitudes(&g, &spec(8, n)).unwrap();
        let b = zernike_magnitudes(&r, &spec(8, n)).unwrap();
        for (i, (&(p, q), (ma, mb))) in moment_orders(8).iter().zip(a.iter().zip(&b)).enumerate() {
            let scale = ma.abs().max(1e-12);
            assert!(
                (ma - mb).abs() / scale <= 0.02,
                "order ({p},{q}) idx {i}: {ma} vs {mb}"
            );
        }
    }

    #[test]
    fn q0_magnitudes_are_mirror_invariant() {
        use rand::{Rng, SeedableRng};
        let n = 32;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = Grid2::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
        let mirrored = Grid2::from_fn(n, n, |x, y| g.get(n - 1 - x, y));
        let a = zernike_magnitudes(&g, &spec(6, n)).unwrap();
        let b = zernike_magnitudes(&mirrored, &spec(6, n)).unwrap();
        for (&(_, q), (ma, mb)) in moment_orders(6).iter().zip(a.iter().zip(&b)) {
            if q == 0 {
                assert!((ma - mb).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_detected() {
        let g = Grid2::zeros(16, 8);
        assert!(matches!(
            zernike_magnitudes(&g, &spec(4, 16)),
            Err(FeatureError::ShapeMismatch { .. })
        ));
    }
}
