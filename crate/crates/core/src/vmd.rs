//! Two-dimensional variational mode decomposition and the repetitive
//! five-level scheme that yields ten band-limited components.
//!
//! The ADMM iteration follows Dragomiretskiy & Zosso's spectral-domain
//! construction (Variational Mode Decomposition, IEEE TSP 2014, and its 2D
//! extension, 2015): each mode's spectrum is a Wiener-filtered residual
//! supported on the analytic half-plane, center frequencies move to the
//! spectral center of gravity, and a Lagrangian multiplier optionally
//! enforces reconstruction. Modes are updated Gauss-Seidel style within a
//! sweep.

use crate::fsutil::write_atomic;
use crate::grid::Grid2;
use crate::spectral::{forward_dft2, inverse_dft2, mirror_index, signed_freq, Spectrum2D};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Energy threshold under which a level's input is considered degenerate and
/// the decomposition tree truncates.
pub const DEGENERATE_ENERGY: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum VmdError {
    #[error("invalid VMD parameters: {0}")]
    BadParams(String),
    #[error("non-finite iterate at iteration {iteration}; check alpha/tau")]
    NonFinite { iteration: usize },
}

/// Center-frequency initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Deterministic diagonal spread: mode k starts at
    /// (0.5·k/K, 0.5·k/K); for K = 2 this is (0,0) and (0.25, 0.25).
    Spread,
    /// Seeded uniform draws on the analytic half-plane.
    Random,
}

/// Parameters of one `vmd2d` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmdParams {
    /// Number of modes K.
    pub modes: usize,
    /// Bandwidth penalty weight; larger values narrow the modes.
    pub alpha: f64,
    /// Multiplier ascent step; 0 relaxes exact reconstruction (noise-robust).
    pub tau: f64,
    /// Convergence tolerance on the summed relative mode change.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub init: InitScheme,
    /// Seed for `InitScheme::Random`; unused by `Spread`.
    pub seed: u64,
}

impl Default for VmdParams {
    fn default() -> Self {
        Self {
            modes: 2,
            alpha: 5000.0,
            tau: 0.0,
            epsilon: 1e-6,
            max_iterations: 300,
            init: InitScheme::Spread,
            seed: 0,
        }
    }
}

impl VmdParams {
    pub fn validate(&self) -> Result<(), VmdError> {
        if self.modes < 1 {
            return Err(VmdError::BadParams("modes must be >= 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(VmdError::BadParams("alpha must be > 0".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(VmdError::BadParams("tau must be >= 0".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(VmdError::BadParams("epsilon must be > 0".into()));
        }
        if self.max_iterations < 1 {
            return Err(VmdError::BadParams("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// One band-limited spatial mode with its center frequency in normalized
/// cycles/pixel. The center always lies on the analytic half-plane
/// {wx > 0} ∪ {wx = 0, wy >= 0}.
#[derive(Debug, Clone)]
pub struct Mode2D {
    pub spatial: Grid2,
    pub center_frequency: (f64, f64),
}

impl Mode2D {
    fn zero(width: usize, height: usize) -> Self {
        Self {
            spatial: Grid2::zeros(width, height),
            center_frequency: (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VmdDiagnostics {
    /// ADMM sweeps actually performed.
    pub iterations: usize,
    /// Last value of the convergence criterion Σ_k ‖Δp_k‖²/‖p_k‖².
    pub final_change: f64,
    /// Criterion value after each sweep.
    pub change_history: Vec<f64>,
    /// Relative reconstruction residual ‖input − Σ modes‖ / ‖input‖.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct VmdOutput {
    pub modes: Vec<Mode2D>,
    pub diagnostics: VmdDiagnostics,
}

#[inline]
fn in_half_plane(wx: f64, wy: f64) -> bool {
    wx > 0.0 || (wx == 0.0 && wy >= 0.0)
}

fn initial_centers(params: &VmdParams) -> Vec<(f64, f64)> {
    match params.init {
        InitScheme::Spread => (0..params.modes)
            .map(|k| {
                let w = 0.5 * k as f64 / params.modes as f64;
                (w, w)
            })
            .collect(),
        InitScheme::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            (0..params.modes)
                .map(|_| (rng.random_range(1e-3..0.5), rng.random_range(-0.5..0.5)))
                .collect()
        }
    }
}

/// Decomposes a real grid into `params.modes` band-limited modes by ADMM in
/// the spectral domain.
///
/// Per sweep, each mode spectrum is updated on the analytic half-plane as
/// `(f̂ - Σ_{j≠k} p̂_j + μ̂/2) / (1 + 2α|ω - ω_k|²)`, its center frequency
/// moves to the spectral center of gravity, and afterwards the multiplier
/// ascends by `τ·(f̂ - Σ_k p̂_k)`. Iteration stops when the summed relative
/// change of the mode spectra drops below `epsilon`.
pub fn vmd2d(image: &Grid2, params: &VmdParams) -> Result<VmdOutput, VmdError> {
    params.validate()?;
    if !image.is_finite() {
        return Err(VmdError::BadParams(
            "input grid contains non-finite values".into(),
        ));
    }

    let (w, h) = (image.width(), image.height());
    let bins = w * h;
    let k_modes = params.modes;

    let f_hat = forward_dft2(image);
    let f_hat = f_hat.coefficients();

    // Per-bin signed frequencies and half-plane membership.
    let fx: Vec<f64> = (0..w).map(|k| signed_freq(k, w)).collect();
    let fy: Vec<f64> = (0..h).map(|k| signed_freq(k, h)).collect();
    let mut half_bins: Vec<usize> = Vec::with_capacity(bins / 2 + 1);
    for (ky, &wy) in fy.iter().enumerate() {
        for (kx, &wx) in fx.iter().enumerate() {
            if in_half_plane(wx, wy) {
                half_bins.push(ky * w + kx);
            }
        }
    }

    let zero = Complex::new(0.0, 0.0);
    let mut mode_hat: Vec<Vec<Complex<f64>>> = vec![vec![zero; bins]; k_modes];
    let mut sum_modes: Vec<Complex<f64>> = vec![zero; bins];
    let mut mu_hat: Vec<Complex<f64>> = vec![zero; bins];
    let mut omega = initial_centers(params);

    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut change_history = Vec::new();

    for iter in 0..params.max_iterations {
        change = 0.0;
        for k in 0..k_modes {
            let (wcx, wcy) = omega[k];
            let spectrum = &mut mode_hat[k];
            let mut delta = 0.0;
            let mut prev_norm = 0.0;
            let mut cg_x = 0.0;
            let mut cg_y = 0.0;
            let mut cg_mass = 0.0;
            for &idx in &half_bins {
                let wx = fx[idx % w];
                let wy = fy[idx / w];
                let old = spectrum[idx];
                let others = sum_modes[idx] - old;
                let numerator = f_hat[idx] - others + 0.5 * mu_hat[idx];
                let dx = wx - wcx;
                let dy = wy - wcy;
                let denom = 1.0 + 2.0 * params.alpha * (dx * dx + dy * dy);
                let new = numerator / denom;
                let diff = new - old;
                delta += diff.norm_sqr();
                prev_norm += old.norm_sqr();
                let power = new.norm_sqr();
                cg_x += wx * power;
                cg_y += wy * power;
                cg_mass += power;
                sum_modes[idx] += diff;
                spectrum[idx] = new;
            }
            if !delta.is_finite() || !cg_mass.is_finite() {
                return Err(VmdError::NonFinite {
                    iteration: iter + 1,
                });
            }
            if cg_mass > 0.0 {
                omega[k] = (cg_x / cg_mass, cg_y / cg_mass);
            }
            change += if prev_norm > 0.0 {
                delta / prev_norm
            } else if delta > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
        }
        if params.tau > 0.0 {
            for &idx in &half_bins {
                mu_hat[idx] += params.tau * (f_hat[idx] - sum_modes[idx]);
            }
        }
        iterations = iter + 1;
        change_history.push(change);
        if change < params.epsilon {
            break;
        }
    }

    // Hermitian completion of each half-plane spectrum, then back to space.
    let mut modes = Vec::with_capacity(k_modes);
    let mut reconstruction = Grid2::zeros(w, h);
    for (k, spectrum) in mode_hat.into_iter().enumerate() {
        let mut full = vec![zero; bins];
        for &idx in &half_bins {
            let kx = idx % w;
            let ky = idx / w;
            let v = spectrum[idx];
            full[idx] = v;
            let mx = mirror_index(kx, w);
            let my = mirror_index(ky, h);
            let midx = my * w + mx;
            if midx != idx {
                full[midx] = v.conj();
            }
        }
        let spatial = inverse_dft2(&Spectrum2D::from_coefficients(w, h, full));
        if !spatial.is_finite() {
            return Err(VmdError::NonFinite {
                iteration: iterations,
            });
        }
        reconstruction.add_assign(&spatial);
        modes.push(Mode2D {
            spatial,
            center_frequency: omega[k],
        });
    }

    let input_norm = image.norm();
    let residual = if input_norm > 0.0 {
        image.sub(&reconstruction).norm() / input_norm
    } else {
        0.0
    };

    Ok(VmdOutput {
        modes,
        diagnostics: VmdDiagnostics {
            iterations,
            final_change: change,
            change_history,
            residual,
        },
    })
}

/// One repetition of the iterative scheme: the input split into a
/// lower- and a higher-center-frequency mode.
#[derive(Debug, Clone)]
pub struct TreeLevel {
    pub low: Mode2D,
    pub high: Mode2D,
    pub diagnostics: VmdDiagnostics,
}

/// Result of the repetitive decomposition: `levels.len()` repetitions, two
/// modes each, where repetition ℓ+1 decomposed the high mode of repetition ℓ.
#[derive(Debug, Clone)]
pub struct DecompositionTree {
    pub levels: Vec<TreeLevel>,
    /// Set when a repetition's input energy fell below [`DEGENERATE_ENERGY`];
    /// that repetition and all later ones hold zero modes.
    pub truncated_at: Option<usize>,
}

impl DecompositionTree {
    /// Flattened component order: (L1-low, L1-high, L2-low, L2-high, ...).
    pub fn components(&self) -> Vec<&Mode2D> {
        self.levels.iter().flat_map(|l| [&l.low, &l.high]).collect()
    }

    pub fn component_count(&self) -> usize {
        2 * self.levels.len()
    }
}

/// Runs the repetitive two-mode decomposition for `levels` repetitions.
/// Requires `params.modes == 2`.
pub fn iterative_vmd(
    image: &Grid2,
    levels: usize,
    params: &VmdParams,
) -> Result<DecompositionTree, VmdError> {
    if levels < 1 {
        return Err(VmdError::BadParams("levels must be >= 1".into()));
    }
    if params.modes != 2 {
        return Err(VmdError::BadParams(
            "the repetitive scheme uses exactly 2 modes per repetition".into(),
        ));
    }
    let (w, h) = (image.width(), image.height());
    let mut tree = DecompositionTree {
        levels: Vec::with_capacity(levels),
        truncated_at: None,
    };
    let mut current = image.clone();
    for level in 0..levels {
        if current.energy() < DEGENERATE_ENERGY {
            tree.truncated_at = Some(level);
            break;
        }
        let out = vmd2d(&current, params)?;
        let mut it = out.modes.into_iter();
        let a = it.next().expect("two modes");
        let b = it.next().expect("two modes");
        let norm = |m: &Mode2D| {
            let (x, y) = m.center_frequency;
            x * x + y * y
        };
        // Higher |ω| wins; ties resolve to the later mode index.
        let (low, high) = if norm(&b) >= norm(&a) { (a, b) } else { (b, a) };
        current = high.spatial.clone();
        tree.levels.push(TreeLevel {
            low,
            high,
            diagnostics: out.diagnostics,
        });
    }
    while tree.levels.len() < levels {
        tree.levels.push(TreeLevel {
            low: Mode2D::zero(w, h),
            high: Mode2D::zero(w, h),
            diagnostics: VmdDiagnostics {
                iterations: 0,
                final_change: 0.0,
                change_history: Vec::new(),
                residual: 0.0,
            },
        });
    }
    Ok(tree)
}

/// JSON sidecar accompanying each dumped component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentSidecar {
    pub width: usize,
    pub height: usize,
    /// 1-based repetition index.
    pub level: usize,
    /// "low" or "high".
    pub which: String,
    pub center_frequency: [f64; 2],
    /// Reconstruction residual of the repetition that produced this mode.
    pub residual: f64,
}

/// Writes every component of `tree` under `dir` as a raw little-endian f32
/// file (`{stem}_l{level}_{low|high}.f32`, row-major) plus a JSON sidecar.
/// Returns the paths of the `.f32` files in component order.
pub fn dump_components(
    tree: &DecompositionTree,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, std::io::Error> {
    let mut written = Vec::new();
    for (i, level) in tree.levels.iter().enumerate() {
        for (mode, which) in [(&level.low, "low"), (&level.high, "high")] {
            let base = format!("{stem}_l{}_{which}", i + 1);
            let raw_path = dir.join(format!("{base}.f32"));
            let mut bytes = Vec::with_capacity(mode.spatial.len() * 4);
            for &v in mode.spatial.values() {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
            write_atomic(&raw_path, &bytes)?;
            let sidecar = ComponentSidecar {
                width: mode.spatial.width(),
                height: mode.spatial.height(),
                level: i + 1,
                which: which.to_string(),
                center_frequency: [mode.center_frequency.0, mode.center_frequency.1],
                residual: level.diagnostics.residual,
            };
            let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
            write_atomic(&dir.join(format!("{base}.json")), &json)?;
            written.push(raw_path);
        }
    }
    Ok(written)
}
