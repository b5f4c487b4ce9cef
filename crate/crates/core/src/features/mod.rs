//! Per-mode textural signatures: Zernike moment magnitudes, non-Shannon
//! entropies, and a box-counting fractal dimension.
//!
//! Every mode is bilinearly resampled onto a fixed square grid before the
//! descriptors run, so feature scales stay comparable across input sizes and
//! magnifications.

pub mod entropy;
pub mod fractal;
pub mod zernike;

use crate::dataset::ClassLabel;
use crate::grid::Grid2;
use crate::vmd::DecompositionTree;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

pub use entropy::{
    intensity_histogram, kapur_entropy, renyi_entropy, yager_entropy, Histogram, BIN_COUNT,
};
pub use fractal::fractal_dimension;
pub use zernike::{moment_orders, radial_polynomial, zernike_magnitudes};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("bad order: {0}")]
    BadOrder(String),
    #[error("grid side {side} too small for box counting (need >= 8)")]
    DegenerateImage { side: usize },
    #[error("expected a {expected}x{expected} grid, got {got_w}x{got_h}")]
    ShapeMismatch {
        expected: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("non-finite value in feature {name}")]
    NonFinite { name: String },
}

/// Zernike configuration: maximum order and the square resampling target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZernikeSpec {
    pub max_order: u32,
    pub grid_side: usize,
}

impl Default for ZernikeSpec {
    fn default() -> Self {
        Self {
            max_order: 10,
            grid_side: 128,
        }
    }
}

impl ZernikeSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.max_order > 20 {
            return Err(FeatureError::BadOrder(
                "max_order above 20 overflows exact factorials".into(),
            ));
        }
        if self.grid_side < 8 {
            return Err(FeatureError::DegenerateImage {
                side: self.grid_side,
            });
        }
        Ok(())
    }
}

/// Denominator reading for the Yager entropy; the bin count is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YagerDenominator {
    Bins,
    Pixels,
}

/// Orders of the three entropies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyOrders {
    pub renyi_a: f64,
    pub kapur_a: f64,
    pub kapur_b: f64,
    pub yager_denominator: YagerDenominator,
}

impl Default for EntropyOrders {
    fn default() -> Self {
        Self {
            renyi_a: 2.0,
            kapur_a: 0.5,
            kapur_b: 2.0,
            yager_denominator: YagerDenominator::Bins,
        }
    }
}

impl EntropyOrders {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.renyi_a > 0.0) || self.renyi_a == 1.0 {
            return Err(FeatureError::BadOrder(
                "renyi order must be positive and != 1".into(),
            ));
        }
        if !(self.kapur_a > 0.0) || !(self.kapur_b > 0.0) || self.kapur_a == self.kapur_b {
            return Err(FeatureError::BadOrder(
                "kapur orders must be positive and distinct".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub zernike: ZernikeSpec,
    pub entropy: EntropyOrders,
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        self.zernike.validate()?;
        self.entropy.validate()
    }

    /// Features per mode: all (p,q) magnitudes plus KE, RE, YE, FD.
    pub fn per_mode_len(&self) -> usize {
        moment_orders(self.zernike.max_order).len() + 4
    }
}

/// Ordered, named descriptor vector for one decomposition tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub label: Option<ClassLabel>,
}

/// Quantizes a grid to 256 gray levels by min-max rescaling; a constant grid
/// maps entirely to level 0.
pub fn quantize_256(grid: &Grid2) -> Vec<u8> {
    let (lo, hi) = grid.min_max();
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0; grid.len()];
    }
    grid.values()
        .iter()
        .map(|&v| {
            let level = ((v - lo) / range * 256.0).floor();
            level.clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Feature names in extraction order:
/// `comp{level}{lo|hi}/{zern_p{p}_q{q} | KE | RE | YE | FD}`.
pub fn feature_names(levels: usize, spec: &FeatureSpec) -> Vec<String> {
    let orders = moment_orders(spec.zernike.max_order);
    let mut names = Vec::with_capacity(2 * levels * (orders.len() + 4));
    for level in 1..=levels {
        for half in ["lo", "hi"] {
            let prefix = format!("comp{level}{half}");
            for &(p, q) in &orders {
                names.push(format!("{prefix}/zern_p{p}_q{q}"));
            }
            for tail in ["KE", "RE", "YE", "FD"] {
                names.push(format!("{prefix}/{tail}"));
            }
        }
    }
    names
}

/// Computes the full descriptor vector over every component of `tree`.
/// Degenerate (truncated) modes are zero grids and therefore produce the
/// constant-image values: zero entropies, FD = 2, zero Zernike magnitudes.
pub fn extract_features(
    tree: &DecompositionTree,
    spec: &FeatureSpec,
) -> Result<FeatureVector, FeatureError> {
    spec.validate()?;
    let names = feature_names(tree.levels.len(), spec);
    let mut values = Vec::with_capacity(names.len());
    for mode in tree.components() {
        let resampled = mode.spatial.resample_bilinear(spec.zernike.grid_side);
        values.extend(zernike_magnitudes(&resampled, &spec.zernike)?);
        let hist = intensity_histogram(&resampled);
        values.push(kapur_entropy(
            &hist,
            spec.entropy.kapur_a,
            spec.entropy.kapur_b,
        )?);
        values.push(renyi_entropy(&hist, spec.entropy.renyi_a)?);
        values.push(yager_entropy(&hist, spec.entropy.yager_denominator));
        values.push(fractal_dimension(&resampled)?);
    }
    debug_assert_eq!(values.len(), names.len());
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite {
            name: names[i].clone(),
        });
    }
    Ok(FeatureVector {
        names,
        values,
        label: None,
    })
}

/// One row of the feature CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub sample_id: String,
    pub patient_id: String,
    pub magnification: u32,
    pub label: ClassLabel,
    pub values: Vec<f64>,
}

/// Writes the feature CSV (`sample_id,patient_id,magnification,label,<names…>`)
/// with values at 9 significant digits.
pub fn write_feature_csv<'a, W: Write>(
    writer: W,
    names: &[String],
    rows: impl IntoIterator<Item = &'a FeatureRow>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "sample_id".to_string(),
        "patient_id".into(),
        "magnification".into(),
        "label".into(),
    ];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for row in rows {
        let mut record = vec![
            row.sample_id.clone(),
            row.patient_id.clone(),
            row.magnification.to_string(),
            row.label.to_string(),
        ];
        record.extend(row.values.iter().map(|v| format!("{v:.8e}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a feature CSV back into names and rows.
pub fn read_feature_csv<R: Read>(
    reader: R,
) -> Result<(Vec<String>, Vec<FeatureRow>), FeatureError> {
    let mut r = csv::Reader::from_reader(reader);
    let bad = |m: &str| FeatureError::BadOrder(format!("feature csv: {m}"));
    let headers = r.headers().map_err(|e| bad(&e.to_string()))?.clone();
    if headers.len() < 5 {
        return Err(bad("missing feature columns"));
    }
    let names: Vec<String> = headers.iter().skip(4).map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| bad(&e.to_string()))?;
        let label =
            ClassLabel::parse(record.get(3).unwrap_or("")).ok_or_else(|| bad("bad label"))?;
        let values: Result<Vec<f64>, _> = record.iter().skip(4).map(|v| v.parse::<f64>()).collect();
        rows.push(FeatureRow {
            sample_id: record.get(0).unwrap_or("").to_string(),
            patient_id: record.get(1).unwrap_or("").to_string(),
            magnification: record
                .get(2)
                .unwrap_or("0")
                .parse()
                .map_err(|_| bad("bad magnification"))?,
            label,
            values: values.map_err(|_| bad("bad value"))?,
        });
    }
    Ok((names, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vmd::{iterative_vmd, VmdParams};

    #[test]
    fn default_spec_yields_400_features_over_five_levels() {
        let spec = FeatureSpec::default();
        assert_eq!(spec.per_mode_len(), 40);
        let names = feature_names(5, &spec);
        assert_eq!(names.len(), 400);
        assert_eq!(names[0], "comp1lo/zern_p0_q0");
        assert_eq!(names[36], "comp1lo/KE");
        assert_eq!(names[39], "comp1lo/FD");
        assert_eq!(names[399], "comp5hi/FD");
    }

    #[test]
    fn quantize_constant_maps_to_bin_zero() {
        let g = Grid2::from_fn(4, 4, |_, _| 0.7);
        assert!(quantize_256(&g).iter().all(|&b| b == 0));
    }

    #[test]
    fn quantize_two_level_hits_extremes() {
        let g = Grid2::from_fn(4, 2, |x, _| if x % 2 == 0 { -1.0 } else { 3.0 });
        let q = quantize_256(&g);
        assert!(q.contains(&0) && q.contains(&255));
    }

    #[test]
    fn identical_trees_give_identical_features() {
        let img = Grid2::from_fn(32, 32, |x, y| {
            0.5 + 0.3 * ((x as f64 * 0.7).sin() * (y as f64 * 0.3).cos())
        });
        let params = VmdParams {
            max_iterations: 30,
            ..Default::default()
        };
        let t1 = iterative_vmd(&img, 2, &params).unwrap();
        let t2 = iterative_vmd(&img, 2, &params).unwrap();
        let spec = FeatureSpec {
            zernike: ZernikeSpec {
                max_order: 4,
                grid_side: 32,
            },
            ..Default::default()
        };
        let f1 = extract_features(&t1, &spec).unwrap();
        let f2 = extract_features(&t2, &spec).unwrap();
        assert_eq!(f1.values, f2.values);
        assert_eq!(f1.values.len(), feature_names(2, &spec).len());
    }

    #[test]
    fn truncated_tree_produces_constant_image_values() {
        let img = Grid2::zeros(16, 16);
        let tree = iterative_vmd(&img, 5, &VmdParams::default()).unwrap();
        assert_eq!(tree.truncated_at, Some(0));
        let spec = FeatureSpec {
            zernike: ZernikeSpec {
                max_order: 2,
                grid_side: 16,
            },
            ..Default::default()
        };
        let fv = extract_features(&tree, &spec).unwrap();
        let per_mode = spec.per_mode_len();
        for mode in 0..10 {
            let chunk = &fv.values[mode * per_mode..(mode + 1) * per_mode];
            // Zernike magnitudes of the zero image vanish.
            for &z in &chunk[..per_mode - 4] {
                assert_eq!(z, 0.0);
            }
            let (ke, re, ye, fd) = (
                chunk[per_mode - 4],
                chunk[per_mode - 3],
                chunk[per_mode - 2],
                chunk[per_mode - 1],
            );
            assert_eq!(ke, 0.0);
            assert_eq!(re, 0.0);
            assert_eq!(ye, 0.0);
            assert_eq!(fd, 2.0);
        }
    }

    #[test]
    fn feature_csv_round_trips() {
        let names = vec!["a".to_string(), "b".to_string()];
        let rows = vec![FeatureRow {
            sample_id: "s1".into(),
            patient_id: "p1".into(),
            magnification: 40,
            label: ClassLabel::Malignant,
            values: vec![1.234567891e-3, 42.0],
        }];
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &names, &rows).unwrap();
        let (names2, rows2) = read_feature_csv(&buf[..]).unwrap();
        assert_eq!(names2, names);
        assert_eq!(rows2[0].patient_id, "p1");
        assert_eq!(rows2[0].label, ClassLabel::Malignant);
        assert!((rows2[0].values[0] - 1.234567891e-3).abs() < 1e-12);
    }
}
