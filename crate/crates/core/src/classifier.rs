//! Least-squares SVM with an RBF kernel (Suykens & Vandewalle 1999).
//!
//! Training solves the (n+1)×(n+1) saddle-point system
//!
//! ```text
//! [ 0   yᵀ      ] [ b ]   [ 0 ]
//! [ y   Ω + I/γ ] [ α ] = [ 1 ]
//! ```
//!
//! with Ω_ij = y_i y_j K(x_i, x_j), by one dense factorization. The decision
//! function is `sign(Σ α_i y_i K(x_i, x) + b)`; a score of exactly zero
//! resolves to the positive (malignant) class.

use crate::selection::NormStats;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum admissible relative residual of the KKT solve.
pub const KKT_RESIDUAL_LIMIT: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("KKT system ill-conditioned: relative residual {residual:e}")]
    IllConditioned { residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameters: {0}")]
    BadHyperparameters(String),
    #[error("every grid cell failed to train")]
    GridExhausted,
}

/// RBF kernel width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma: f64,
}

/// `exp(-‖x - z‖² / (2σ²))`.
pub fn rbf_kernel(x: &[f64], z: &[f64], sigma: f64) -> Result<f64, ClassifierError> {
    if x.len() != z.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: x.len(),
            got: z.len(),
        });
    }
    if !(sigma > 0.0) {
        return Err(ClassifierError::BadHyperparameters(format!(
            "sigma = {sigma} must be > 0"
        )));
    }
    let dist2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-dist2 / (2.0 * sigma * sigma)).exp())
}

/// Positive/negative class names carried with a trained model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    pub positive: String,
    pub negative: String,
}

impl Default for ClassMap {
    fn default() -> Self {
        Self {
            positive: "malignant".into(),
            negative: "benign".into(),
        }
    }
}

/// A trained LS-SVM, self-contained for prediction: dual coefficients plus
/// the feature mask and normalization statistics used before the kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LsSvmModel {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub support_inputs: Vec<Vec<f64>>,
    pub support_labels: Vec<f64>,
    /// Full-length column mask; empty means identity.
    pub feature_mask: Vec<bool>,
    pub norm_stats: Option<NormStats>,
    pub class_map: ClassMap,
    /// Relative residual of the training solve (diagnostic, not persisted).
    #[serde(skip)]
    pub kkt_residual: f64,
}

/// Trains on rows with ±1 labels. `gamma` is the regularization weight,
/// `sigma` the RBF width. The returned model carries an identity feature
/// mask; attach selection/normalization with [`LsSvmModel::with_preprocessing`].
pub fn train_lssvm(
    inputs: &[Vec<f64>],
    labels: &[f64],
    gamma: f64,
    sigma: f64,
) -> Result<LsSvmModel, ClassifierError> {
    if inputs.len() != labels.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: inputs.len(),
            got: labels.len(),
        });
    }
    if !(gamma > 0.0) {
        return Err(ClassifierError::BadHyperparameters(format!(
            "gamma = {gamma} must be > 0"
        )));
    }
    if !(sigma > 0.0) {
        return Err(ClassifierError::BadHyperparameters(format!(
            "sigma = {sigma} must be > 0"
        )));
    }
    let n = inputs.len();
    if n < 2 || !labels.iter().any(|&y| y > 0.0) || !labels.iter().any(|&y| y < 0.0) {
        return Err(ClassifierError::SingleClass);
    }
    let dim = inputs[0].len();
    if let Some(bad) = inputs.iter().find(|r| r.len() != dim) {
        return Err(ClassifierError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }

    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        a[(0, i + 1)] = labels[i];
        a[(i + 1, 0)] = labels[i];
        for j in i..n {
            let k = rbf_kernel(&inputs[i], &inputs[j], sigma)?;
            let mut v = labels[i] * labels[j] * k;
            if i == j {
                v += 1.0 / gamma;
            }
            a[(i + 1, j + 1)] = v;
            a[(j + 1, i + 1)] = v;
        }
    }
    let mut rhs = DVector::<f64>::from_element(n + 1, 1.0);
    rhs[0] = 0.0;

    let solution = a
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(ClassifierError::IllConditioned {
            residual: f64::INFINITY,
        })?;
    let residual = (&a * &solution - &rhs).norm() / rhs.norm();
    if !(residual <= KKT_RESIDUAL_LIMIT) {
        return Err(ClassifierError::IllConditioned { residual });
    }

    Ok(LsSvmModel {
        alphas: solution.as_slice()[1..].to_vec(),
        bias: solution[0],
        gamma,
        sigma,
        support_inputs: inputs.to_vec(),
        support_labels: labels.to_vec(),
        feature_mask: Vec::new(),
        norm_stats: None,
        class_map: ClassMap::default(),
        kkt_residual: residual,
    })
}

impl LsSvmModel {
    pub fn kernel(&self) -> KernelParams {
        KernelParams { sigma: self.sigma }
    }

    /// Attaches the selection mask and normalization fitted upstream so the
    /// model can score raw, full-length feature rows.
    pub fn with_preprocessing(mut self, feature_mask: Vec<bool>, norm_stats: NormStats) -> Self {
        self.feature_mask = feature_mask;
        self.norm_stats = Some(norm_stats);
        self
    }

    /// Raw decision value `Σ α_i y_i K(x_i, x) + b` for an already
    /// masked/normalized row.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        let expected = self.support_inputs.first().map_or(0, Vec::len);
        if x.len() != expected {
            return Err(ClassifierError::DimensionMismatch {
                expected,
                got: x.len(),
            });
        }
        let mut score = self.bias;
        for ((xi, &yi), &ai) in self
            .support_inputs
            .iter()
            .zip(&self.support_labels)
            .zip(&self.alphas)
        {
            score += ai * yi * rbf_kernel(xi, x, self.sigma)?;
        }
        Ok(score)
    }

    /// Predicts a ±1 label and the raw score; zero scores go positive.
    pub fn predict(&self, x: &[f64]) -> Result<(i8, f64), ClassifierError> {
        let score = self.decision_value(x)?;
        Ok((if score >= 0.0 { 1 } else { -1 }, score))
    }

    /// Applies the embedded mask and normalization to a full-length feature
    /// row, then predicts.
    pub fn predict_sample(&self, full_row: &[f64]) -> Result<(i8, f64), ClassifierError> {
        let masked: Vec<f64> = if self.feature_mask.is_empty() {
            full_row.to_vec()
        } else {
            if full_row.len() != self.feature_mask.len() {
                return Err(ClassifierError::DimensionMismatch {
                    expected: self.feature_mask.len(),
                    got: full_row.len(),
                });
            }
            full_row
                .iter()
                .zip(&self.feature_mask)
                .filter(|(_, &keep)| keep)
                .map(|(&v, _)| v)
                .collect()
        };
        let prepared = match &self.norm_stats {
            Some(stats) => stats.apply_row(&masked),
            None => masked,
        };
        self.predict(&prepared)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub gamma: f64,
    pub sigma: f64,
    pub fold_accuracies: Vec<Option<f64>>,
    pub mean_accuracy: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_gamma: f64,
    pub best_sigma: f64,
    pub table: Vec<GridCell>,
}

/// Seeded stratified fold assignment: indices of each class are shuffled and
/// dealt round-robin, so every fold sees both classes whenever possible.
fn stratified_folds(labels: &[f64], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] > 0.0).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] <= 0.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignment = vec![Vec::new(); folds];
    for (slot, idx) in pos.into_iter().chain(neg).enumerate() {
        assignment[slot % folds].push(idx);
    }
    assignment
}

/// Exhaustive (γ, σ) search by stratified inner cross-validation over the
/// training set only. The winning cell maximizes mean inner accuracy; ties
/// break toward smaller γ, then smaller σ. Failing cells are recorded, not
/// fatal.
pub fn grid_search(
    inputs: &[Vec<f64>],
    labels: &[f64],
    gamma_grid: &[f64],
    sigma_grid: &[f64],
    inner_folds: usize,
    seed: u64,
) -> Result<GridSearchResult, ClassifierError> {
    if gamma_grid.is_empty() || sigma_grid.is_empty() {
        return Err(ClassifierError::BadHyperparameters("empty grid".into()));
    }
    if inner_folds < 2 {
        return Err(ClassifierError::BadHyperparameters(
            "inner_folds must be >= 2".into(),
        ));
    }
    let folds = stratified_folds(labels, inner_folds.min(inputs.len()), seed);
    let mut table = Vec::with_capacity(gamma_grid.len() * sigma_grid.len());
    for &gamma in gamma_grid {
        for &sigma in sigma_grid {
            let mut fold_accuracies = Vec::with_capacity(folds.len());
            let mut failed = false;
            for test_idx in &folds {
                if test_idx.is_empty() {
                    fold_accuracies.push(None);
                    continue;
                }
                let in_test: std::collections::BTreeSet<usize> = test_idx.iter().copied().collect();
                let train_rows: Vec<Vec<f64>> = (0..inputs.len())
                    .filter(|i| !in_test.contains(i))
                    .map(|i| inputs[i].clone())
                    .collect();
                let train_labels: Vec<f64> = (0..labels.len())
                    .filter(|i| !in_test.contains(i))
                    .map(|i| labels[i])
                    .collect();
                match train_lssvm(&train_rows, &train_labels, gamma, sigma) {
                    Ok(model) => {
                        let mut correct = 0usize;
                        for &i in test_idx {
                            let (pred, _) = model.predict(&inputs[i])?;
                            if (pred as f64) * labels[i] > 0.0 {
                                correct += 1;
                            }
                        }
                        fold_accuracies.push(Some(correct as f64 / test_idx.len() as f64));
                    }
                    Err(_) => {
                        failed = true;
                        fold_accuracies.push(None);
                    }
                }
            }
            let defined: Vec<f64> = fold_accuracies.iter().flatten().copied().collect();
            let mean_accuracy = if failed || defined.is_empty() {
                None
            } else {
                Some(defined.iter().sum::<f64>() / defined.len() as f64)
            };
            table.push(GridCell {
                gamma,
                sigma,
                fold_accuracies,
                mean_accuracy,
                failed,
            });
        }
    }

    let mut best: Option<(f64, f64, f64)> = None;
    for cell in &table {
        if let Some(acc) = cell.mean_accuracy {
            let better = match best {
                None => true,
                Some((b_acc, b_g, b_s)) => {
                    acc > b_acc || (acc == b_acc && (cell.gamma, cell.sigma) < (b_g, b_s))
                }
            };
            if better {
                best = Some((acc, cell.gamma, cell.sigma));
            }
        }
    }
    let (_, best_gamma, best_sigma) = best.ok_or(ClassifierError::GridExhausted)?;
    Ok(GridSearchResult {
        best_gamma,
        best_sigma,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_identities() {
        let x = vec![0.3, -0.7, 2.0];
        assert!((rbf_kernel(&x, &x, 1.3).unwrap() - 1.0).abs() < 1e-15);
        // ‖x-z‖² = 2σ² → e^{-1}.
        let sigma: f64 = 0.9;
        let z = vec![0.3 + sigma * std::f64::consts::SQRT_2, -0.7, 2.0];
        assert!((rbf_kernel(&x, &z, sigma).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        let y = vec![1.0, 0.0, -1.0];
        assert_eq!(
            rbf_kernel(&x, &y, 2.0).unwrap(),
            rbf_kernel(&y, &x, 2.0).unwrap()
        );
        assert!(rbf_kernel(&x, &y[..2], 1.0).is_err());
    }

    /// Plain Gaussian elimination with partial pivoting, used as the
    /// independent oracle for the KKT solve.
    #[allow(clippy::needless_range_loop)]
    fn brute_force_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = b[row];
            for k in row + 1..n {
                acc -= a[row][k] * x[k];
            }
            x[row] = acc / a[row][row];
        }
        x
    }

    #[test]
    fn two_point_fixture_matches_brute_force() {
        let inputs = vec![vec![-1.0], vec![1.0]];
        let labels = vec![-1.0, 1.0];
        let model = train_lssvm(&inputs, &labels, 10.0, 1.0).unwrap();

        let k = rbf_kernel(&inputs[0], &inputs[1], 1.0).unwrap();
        let a = vec![
            vec![0.0, -1.0, 1.0],
            vec![-1.0, 1.0 + 0.1, -k],
            vec![1.0, -k, 1.0 + 0.1],
        ];
        let oracle = brute_force_solve(a, vec![0.0, 1.0, 1.0]);
        assert!((model.bias - oracle[0]).abs() < 1e-10);
        assert!((model.alphas[0] - oracle[1]).abs() < 1e-10);
        assert!((model.alphas[1] - oracle[2]).abs() < 1e-10);

        assert!(model.bias.abs() < 1e-10, "symmetry forces b = 0");
        assert!(model.decision_value(&[0.0]).unwrap().abs() < 1e-10);
        assert_eq!(model.predict(&[0.9]).unwrap().0, 1);
        assert_eq!(model.predict(&[-0.9]).unwrap().0, -1);
        assert!(model.kkt_residual <= KKT_RESIDUAL_LIMIT);
    }

    fn blobs(seed: u64, per_class: usize, dims: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = move || {
            // Box-Muller
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * per_class {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            inputs.push((0..dims).map(|_| 3.0 * sign + gauss()).collect());
            labels.push(sign);
        }
        (inputs, labels)
    }

    #[test]
    fn gaussian_blobs_reach_high_heldout_accuracy() {
        let (train_x, train_y) = blobs(1, 100, 10);
        let (test_x, test_y) = blobs(2, 50, 10);
        let model = train_lssvm(&train_x, &train_y, 10.0, 4.0).unwrap();
        let correct = test_x
            .iter()
            .zip(&test_y)
            .filter(|(x, &y)| (model.predict(x).unwrap().0 as f64) * y > 0.0)
            .count();
        let acc = correct as f64 / test_y.len() as f64;
        assert!(acc >= 0.99, "held-out accuracy {acc}");
        // Training points classify as their own labels.
        for (x, &y) in train_x.iter().take(20).zip(&train_y) {
            assert_eq!(model.predict(x).unwrap().0 as f64, y);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let inputs = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            train_lssvm(&inputs, &[1.0, 1.0], 1.0, 1.0),
            Err(ClassifierError::SingleClass)
        ));
    }

    #[test]
    fn exact_zero_score_resolves_positive() {
        // A degenerate model whose decision value is exactly 0 everywhere.
        let model = LsSvmModel {
            alphas: vec![0.0, 0.0],
            bias: 0.0,
            gamma: 1.0,
            sigma: 1.0,
            support_inputs: vec![vec![0.0], vec![1.0]],
            support_labels: vec![-1.0, 1.0],
            feature_mask: Vec::new(),
            norm_stats: None,
            class_map: ClassMap::default(),
            kkt_residual: 0.0,
        };
        let (label, score) = model.predict(&[0.3]).unwrap();
        assert_eq!(score, 0.0);
        assert_eq!(label, 1, "zero score must resolve to the positive class");
    }

    #[test]
    fn serialization_round_trip_preserves_scores() {
        let (x, y) = blobs(3, 20, 4);
        let model = train_lssvm(&x, &y, 5.0, 2.0).unwrap();
        let json = model.to_json().unwrap();
        let back = LsSvmModel::from_json(&json).unwrap();
        for probe in x.iter().take(10) {
            let s1 = model.decision_value(probe).unwrap();
            let s2 = back.decision_value(probe).unwrap();
            assert!((s1 - s2).abs() <= 1e-12);
        }
    }

    #[test]
    fn kernel_matrix_is_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let k =
            DMatrix::<f64>::from_fn(50, 50, |i, j| rbf_kernel(&rows[i], &rows[j], 1.5).unwrap());
        let eig = k.symmetric_eigenvalues();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > -1e-8, "min eigenvalue {min}");
    }

    #[test]
    fn prediction_invariant_under_row_permutation() {
        let (x, y) = blobs(5, 30, 3);
        let model_a = train_lssvm(&x, &y, 10.0, 2.0).unwrap();
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.reverse();
        let xp: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let model_b = train_lssvm(&xp, &yp, 10.0, 2.0).unwrap();
        for probe in x.iter().take(10) {
            let sa = model_a.decision_value(probe).unwrap();
            let sb = model_b.decision_value(probe).unwrap();
            assert!((sa - sb).abs() < 1e-10);
        }
    }

    #[test]
    fn larger_gamma_drives_training_error_down() {
        let inputs = vec![vec![-1.0], vec![1.0]];
        let labels = vec![-1.0, 1.0];
        let mut prev_err = f64::INFINITY;
        for gamma in [0.1, 1.0, 10.0, 100.0, 1000.0] {
            let model = train_lssvm(&inputs, &labels, gamma, 1.0).unwrap();
            let err: f64 = inputs
                .iter()
                .zip(&labels)
                .map(|(x, &y)| (model.decision_value(x).unwrap() - y).abs())
                .sum();
            assert!(err <= prev_err + 1e-12, "gamma {gamma}: {err} > {prev_err}");
            prev_err = err;
        }
        assert!(prev_err < 0.05);
    }

    #[test]
    fn grid_search_selects_a_working_cell() {
        let (x, y) = blobs(7, 50, 5);
        let result = grid_search(&x, &y, &[0.1, 10.0], &[0.5, 5.0], 5, 3).unwrap();
        let best = result
            .table
            .iter()
            .find(|c| c.gamma == result.best_gamma && c.sigma == result.best_sigma)
            .unwrap();
        assert!(best.mean_accuracy.unwrap() >= 0.99);
        assert_eq!(result.table.len(), 4);

        let single = grid_search(&x, &y, &[1.0], &[2.0], 3, 0).unwrap();
        assert_eq!((single.best_gamma, single.best_sigma), (1.0, 2.0));

        let again = grid_search(&x, &y, &[0.1, 10.0], &[0.5, 5.0], 5, 3).unwrap();
        for (a, b) in result.table.iter().zip(&again.table) {
            assert_eq!(a.mean_accuracy, b.mean_accuracy);
        }

        // Ties resolve toward smaller gamma, then smaller sigma.
        let best_acc = result
            .table
            .iter()
            .filter_map(|c| c.mean_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        let expected = result
            .table
            .iter()
            .filter(|c| c.mean_accuracy == Some(best_acc))
            .map(|c| (c.gamma, c.sigma))
            .fold((f64::INFINITY, f64::INFINITY), |acc, pair| {
                if pair < acc {
                    pair
                } else {
                    acc
                }
            });
        assert_eq!((result.best_gamma, result.best_sigma), expected);
    }

    #[test]
    fn predict_sample_applies_mask_and_normalization() {
        use crate::selection::NormStats;
        let (x, y) = blobs(9, 20, 2);
        let model = train_lssvm(&x, &y, 10.0, 2.0).unwrap().with_preprocessing(
            vec![true, false, true, false],
            NormStats {
                means: vec![0.0, 0.0],
                stds: vec![1.0, 1.0],
            },
        );
        // Full row of 4 entries; columns 1 and 3 are dropped.
        let full = vec![x[0][0], 99.0, x[0][1], -99.0];
        let (label, score) = model.predict_sample(&full).unwrap();
        let (l2, s2) = model.predict(&x[0]).unwrap();
        assert_eq!(label, l2);
        assert!((score - s2).abs() < 1e-12);
        assert!(model.predict_sample(&[1.0, 2.0]).is_err());
    }
}
