//! Feature ranking and filtering: ReliefF weights, Welch-test significance,
//! and train-statistics normalization.
//!
//! All functions take the training matrix only; test rows never influence
//! ranking, filtering or normalization statistics.

use crate::dataset::ClassLabel;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("need at least two classes, found one")]
    SingleClass,
    #[error("k_neighbors = {k} out of range (smallest class has {class_size} rows)")]
    BadK { k: usize, class_size: usize },
    #[error("invalid feature matrix: {0}")]
    BadMatrix(String),
}

/// Per-column summary statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Labeled sample-by-feature matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    labels: Vec<ClassLabel>,
    data: Vec<f64>,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(
        names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<ClassLabel>,
    ) -> Result<Self, SelectionError> {
        let n_cols = names.len();
        if rows.len() != labels.len() {
            return Err(SelectionError::BadMatrix("row/label count mismatch".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(SelectionError::BadMatrix(format!(
                    "duplicate column name {n:?}"
                )));
            }
        }
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in &rows {
            if row.len() != n_cols {
                return Err(SelectionError::BadMatrix("ragged row".into()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(SelectionError::BadMatrix("non-finite entry".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            names,
            labels,
            data,
            n_cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows()).map(move |i| self.data[i * self.n_cols + j])
    }

    pub fn column_stats(&self) -> Vec<ColumnStats> {
        let n = self.n_rows() as f64;
        (0..self.n_cols)
            .map(|j| {
                let mut sum = 0.0;
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for v in self.column(j) {
                    sum += v;
                    min = min.min(v);
                    max = max.max(v);
                }
                let mean = sum / n;
                let var = self.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                ColumnStats {
                    mean,
                    std: var.sqrt(),
                    min,
                    max,
                }
            })
            .collect()
    }

    /// Keeps only the columns where `mask` is true.
    pub fn select_columns(&self, mask: &[bool]) -> FeatureMatrix {
        assert_eq!(mask.len(), self.n_cols);
        let keep: Vec<usize> = (0..self.n_cols).filter(|&j| mask[j]).collect();
        let names = keep.iter().map(|&j| self.names[j].clone()).collect();
        let mut data = Vec::with_capacity(self.n_rows() * keep.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            data.extend(keep.iter().map(|&j| row[j]));
        }
        FeatureMatrix {
            names,
            labels: self.labels.clone(),
            data,
            n_cols: keep.len(),
        }
    }
}

/// ReliefF output: per-feature weights in [-1, 1], the descending-weight
/// permutation, and the current selection mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeatures {
    pub weights: Vec<f64>,
    pub order: Vec<usize>,
    pub selected_mask: Vec<bool>,
}

fn descending_order(weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].partial_cmp(&weights[a]).unwrap().then(a.cmp(&b)));
    order
}

/// Standard ReliefF over every training instance: per instance, the k
/// nearest same-class hits subtract their per-feature differences and the k
/// nearest other-class misses add theirs (prior-weighted), everything
/// pre-scaled to [0, 1] by column range. Neighbor-distance ties break by row
/// index, so the result is deterministic; `seed` is accepted for interface
/// stability but unused while all instances are sampled.
pub fn relieff(
    matrix: &FeatureMatrix,
    k_neighbors: usize,
    seed: u64,
) -> Result<RankedFeatures, SelectionError> {
    let _ = seed;
    let m = matrix.n_rows();
    let f = matrix.n_cols();
    let labels = matrix.labels();

    let mut class_counts = std::collections::BTreeMap::new();
    for &l in labels {
        *class_counts.entry(l).or_insert(0usize) += 1;
    }
    if class_counts.len() < 2 {
        return Err(SelectionError::SingleClass);
    }
    let smallest = *class_counts.values().min().unwrap();
    if k_neighbors < 1 || k_neighbors >= smallest {
        return Err(SelectionError::BadK {
            k: k_neighbors,
            class_size: smallest,
        });
    }

    // Range pre-scaling; zero-range columns contribute zero difference.
    let stats = matrix.column_stats();
    let inv_range: Vec<f64> = stats
        .iter()
        .map(|s| {
            let r = s.max - s.min;
            if r > 0.0 {
                1.0 / r
            } else {
                0.0
            }
        })
        .collect();

    let diff = |a: &[f64], b: &[f64], j: usize| ((a[j] - b[j]) * inv_range[j]).abs();
    let distance = |a: &[f64], b: &[f64]| -> f64 { (0..f).map(|j| diff(a, b, j)).sum() };

    let priors: std::collections::BTreeMap<ClassLabel, f64> = class_counts
        .iter()
        .map(|(&c, &n)| (c, n as f64 / m as f64))
        .collect();

    let mut weights = vec![0.0f64; f];
    let norm = 1.0 / (m as f64 * k_neighbors as f64);
    for i in 0..m {
        let target = matrix.row(i);
        let own = labels[i];
        // (distance, row) per class, ties by row index.
        let mut by_class: std::collections::BTreeMap<ClassLabel, Vec<(f64, usize)>> =
            Default::default();
        for (j, &label) in labels.iter().enumerate() {
            if j == i {
                continue;
            }
            by_class
                .entry(label)
                .or_default()
                .push((distance(target, matrix.row(j)), j));
        }
        for list in by_class.values_mut() {
            list.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        }
        for (class, list) in &by_class {
            let neighbors = &list[..k_neighbors.min(list.len())];
            if *class == own {
                for &(_, j) in neighbors {
                    let other = matrix.row(j);
                    for (w, col) in weights.iter_mut().zip(0..f) {
                        *w -= diff(target, other, col) * norm;
                    }
                }
            } else {
                let prior_weight = priors[class] / (1.0 - priors[&own]);
                for &(_, j) in neighbors {
                    let other = matrix.row(j);
                    for (w, col) in weights.iter_mut().zip(0..f) {
                        *w += prior_weight * diff(target, other, col) * norm;
                    }
                }
            }
        }
    }

    let order = descending_order(&weights);
    Ok(RankedFeatures {
        weights,
        order,
        selected_mask: vec![true; f],
    })
}

/// Welch two-sample p-value for the difference of means. Degenerate inputs
/// (no variance on both sides) collapse to p = 1 when the means agree and
/// p = 0 when they differ.
pub fn welch_p_value(xs: &[f64], ys: &[f64]) -> f64 {
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    if n1 < 2.0 || n2 < 2.0 {
        return 1.0;
    }
    let m1 = xs.iter().sum::<f64>() / n1;
    let m2 = ys.iter().sum::<f64>() / n2;
    let v1 = xs.iter().map(|x| (x - m1) * (x - m1)).sum::<f64>() / (n1 - 1.0);
    let v2 = ys.iter().map(|y| (y - m2) * (y - m2)).sum::<f64>() / (n2 - 1.0);
    let se2 = v1 / n1 + v2 / n2;
    if se2 <= f64::MIN_POSITIVE {
        return if (m1 - m2).abs() <= f64::EPSILON * m1.abs().max(m2.abs()).max(1.0) {
            1.0
        } else {
            0.0
        };
    }
    let t = (m1 - m2) / se2.sqrt();
    let df = se2 * se2 / ((v1 / n1).powi(2) / (n1 - 1.0) + (v2 / n2).powi(2) / (n2 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df.max(1.0)).expect("valid t distribution");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Outcome of the significance filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub ranked: RankedFeatures,
    pub p_values: Vec<f64>,
    /// True when no feature passed and the top 25 by weight were kept instead.
    pub fallback: bool,
}

/// Keeps features with Welch p < `p_threshold` and a positive ReliefF weight;
/// when that intersection is empty, falls back to the 25 best weights.
pub fn significance_filter(
    matrix: &FeatureMatrix,
    ranked: &RankedFeatures,
    p_threshold: f64,
) -> Result<SelectionOutcome, SelectionError> {
    let labels = matrix.labels();
    let classes: std::collections::BTreeSet<ClassLabel> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(SelectionError::SingleClass);
    }
    let first_class = *classes.iter().next().unwrap();
    let p_values: Vec<f64> = (0..matrix.n_cols())
        .map(|j| {
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (i, v) in matrix.column(j).enumerate() {
                if labels[i] == first_class {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
            welch_p_value(&xs, &ys)
        })
        .collect();

    let mut mask: Vec<bool> = p_values
        .iter()
        .zip(&ranked.weights)
        .map(|(&p, &w)| p < p_threshold && w > 0.0)
        .collect();
    let fallback = !mask.iter().any(|&b| b);
    if fallback {
        mask.iter_mut().for_each(|b| *b = false);
        for &j in ranked.order.iter().take(25) {
            mask[j] = true;
        }
    }
    let ranked = RankedFeatures {
        weights: ranked.weights.clone(),
        order: ranked.order.clone(),
        selected_mask: mask,
    };
    Ok(SelectionOutcome {
        ranked,
        p_values,
        fallback,
    })
}

/// Serializable selection report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub weights: Vec<f64>,
    pub selected: Vec<String>,
    pub p_values: Vec<f64>,
    pub fallback: bool,
}

impl SelectionReport {
    pub fn new(names: &[String], outcome: &SelectionOutcome) -> Self {
        let selected = outcome
            .ranked
            .selected_mask
            .iter()
            .zip(names)
            .filter(|(&keep, _)| keep)
            .map(|(_, n)| n.clone())
            .collect();
        Self {
            weights: outcome.ranked.weights.clone(),
            selected,
            p_values: outcome.p_values.clone(),
            fallback: outcome.fallback,
        }
    }
}

/// Per-column mean/std fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Fits z-score statistics on the (training) matrix.
pub fn zscore_fit(matrix: &FeatureMatrix) -> NormStats {
    let stats = matrix.column_stats();
    NormStats {
        means: stats.iter().map(|s| s.mean).collect(),
        stds: stats.iter().map(|s| s.std).collect(),
    }
}

impl NormStats {
    /// `(x - mean) / std` per column; near-constant columns are centered only.
    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| if s < 1e-12 { v - m } else { (v - m) / s })
            .collect()
    }
}

/// Applies train-fitted statistics to an arbitrary matrix.
pub fn zscore_apply(stats: &NormStats, matrix: &FeatureMatrix) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = (0..matrix.n_rows())
        .map(|i| stats.apply_row(matrix.row(i)))
        .collect();
    FeatureMatrix::new(matrix.names().to_vec(), rows, matrix.labels().to_vec())
        .expect("normalized matrix stays valid")
}
