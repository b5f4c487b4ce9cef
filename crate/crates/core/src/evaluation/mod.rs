//! Confusion-matrix metrics, patient-level scoring, and the experiment
//! runner.

mod cache;
mod experiment;

pub use cache::FeatureCache;
pub use experiment::{
    compute_features, run_experiment, AggregateMetrics, DatasetSource, ExperimentConfig,
    ExperimentMode, ExperimentReport, FoldReport, GridSpec, GroupReport, MagFilter, MeanStd,
    SelectionParams,
};

use crate::dataset::ClassLabel;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions and labels differ in length ({predictions} vs {labels})")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("result references unknown patient {patient_id}")]
    UnknownPatient { patient_id: String },
    #[error("fold {fold} of group {group} failed: {source}")]
    FoldFailed {
        group: String,
        fold: usize,
        source: Box<crate::Error>,
    },
}

/// Confusion counts with malignant as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.true_neg += other.true_neg;
        self.false_neg += other.false_neg;
    }
}

/// Tallies predictions against ground truth.
pub fn confusion(
    predictions: &[ClassLabel],
    labels: &[ClassLabel],
) -> Result<ConfusionCounts, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(labels) {
        match (p, t) {
            (ClassLabel::Malignant, ClassLabel::Malignant) => c.true_pos += 1,
            (ClassLabel::Malignant, ClassLabel::Benign) => c.false_pos += 1,
            (ClassLabel::Benign, ClassLabel::Benign) => c.true_neg += 1,
            (ClassLabel::Benign, ClassLabel::Malignant) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Image-level rates; ratios with a zero denominator are `None` ("undefined"),
/// never 0 or NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn image_metrics(c: &ConfusionCounts) -> Result<ImageMetrics, EvalError> {
    if c.total() == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    Ok(ImageMetrics {
        accuracy: ratio(c.true_pos + c.true_neg, c.total()),
        sensitivity: ratio(c.true_pos, c.true_pos + c.false_neg),
        specificity: ratio(c.true_neg, c.true_neg + c.false_pos),
        ppv: ratio(c.true_pos, c.true_pos + c.false_pos),
        npv: ratio(c.true_neg, c.true_neg + c.false_neg),
    })
}

/// Per-patient recognition score PS = N_rec / N_p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientScore {
    pub patient_id: String,
    /// Images of this patient that were evaluated (N_p).
    pub images: u64,
    /// Correctly classified images (N_rec).
    pub correct: u64,
    pub score: f64,
}

/// One evaluated image: its patient and whether the prediction was right.
#[derive(Debug, Clone)]
pub struct PredictionRecord {
    pub patient_id: String,
    pub correct: bool,
}

/// Computes per-patient scores and their unweighted mean, the patient
/// recognition rate. Every record's patient must belong to `known_patients`.
pub fn patient_recognition_rate(
    records: &[PredictionRecord],
    known_patients: &BTreeSet<String>,
) -> Result<(f64, Vec<PatientScore>), EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut per_patient: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in records {
        if !known_patients.contains(&r.patient_id) {
            return Err(EvalError::UnknownPatient {
                patient_id: r.patient_id.clone(),
            });
        }
        let entry = per_patient.entry(&r.patient_id).or_insert((0, 0));
        entry.0 += 1;
        entry.1 += u64::from(r.correct);
    }
    let scores: Vec<PatientScore> = per_patient
        .into_iter()
        .map(|(id, (images, correct))| PatientScore {
            patient_id: id.to_string(),
            images,
            correct,
            score: correct as f64 / images as f64,
        })
        .collect();
    let prr = scores.iter().map(|s| s.score).sum::<f64>() / scores.len() as f64;
    Ok((prr, scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: u64, fn_: u64, tn: u64, fp: u64) -> ConfusionCounts {
        ConfusionCounts {
            true_pos: tp,
            false_neg: fn_,
            true_neg: tn,
            false_pos: fp,
        }
    }

    #[test]
    fn confusion_tallies_by_construction() {
        use ClassLabel::{Benign as B, Malignant as M};
        let truth = [vec![M; 50], vec![B; 50]].concat();
        let mut preds = Vec::new();
        preds.extend(vec![M; 40]);
        preds.extend(vec![B; 10]);
        preds.extend(vec![B; 45]);
        preds.extend(vec![M; 5]);
        let c = confusion(&preds, &truth).unwrap();
        assert_eq!(c, counts(40, 10, 45, 5));
        assert_eq!(c.total(), 100);
    }

    #[test]
    fn perfect_predictions_have_no_errors() {
        use ClassLabel::{Benign as B, Malignant as M};
        let truth = vec![M, B, M, B];
        let c = confusion(&truth, &truth).unwrap();
        assert_eq!(c.false_pos, 0);
        assert_eq!(c.false_neg, 0);
        let m = image_metrics(&c).unwrap();
        for v in [m.accuracy, m.sensitivity, m.specificity, m.ppv, m.npv] {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn all_malignant_on_benign_truth() {
        use ClassLabel::{Benign as B, Malignant as M};
        let truth = vec![B; 7];
        let preds = vec![M; 7];
        let c = confusion(&preds, &truth).unwrap();
        assert_eq!(c, counts(0, 0, 0, 7));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        use ClassLabel::Malignant as M;
        assert!(matches!(
            confusion(&[M], &[M, M]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn metric_fixture_reproduces_rates() {
        let m = image_metrics(&counts(40, 10, 45, 5)).unwrap();
        assert!((m.accuracy.unwrap() - 0.85).abs() < 5e-5);
        assert!((m.sensitivity.unwrap() - 0.80).abs() < 5e-5);
        assert!((m.specificity.unwrap() - 0.90).abs() < 5e-5);
        assert!((m.ppv.unwrap() - 0.8889).abs() < 5e-5);
        assert!((m.npv.unwrap() - 0.8182).abs() < 5e-5);
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let m = image_metrics(&counts(0, 0, 3, 0)).unwrap();
        assert_eq!(m.ppv, None);
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.accuracy, Some(1.0));
        assert!(matches!(
            image_metrics(&counts(0, 0, 0, 0)),
            Err(EvalError::EmptyEvaluation)
        ));
    }

    #[test]
    fn accuracy_is_prevalence_weighted_mix() {
        let c = counts(13, 7, 23, 11);
        let m = image_metrics(&c).unwrap();
        let prevalence = (c.true_pos + c.false_neg) as f64 / c.total() as f64;
        let mix = prevalence * m.sensitivity.unwrap() + (1.0 - prevalence) * m.specificity.unwrap();
        assert!((m.accuracy.unwrap() - mix).abs() < 1e-12);
    }

    fn known(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn prr_two_patient_fixture() {
        let mut records = Vec::new();
        for i in 0..5 {
            records.push(PredictionRecord {
                patient_id: "A".into(),
                correct: i < 4,
            });
            records.push(PredictionRecord {
                patient_id: "B".into(),
                correct: i < 3,
            });
        }
        let (prr, scores) = patient_recognition_rate(&records, &known(&["A", "B"])).unwrap();
        assert!((prr - 0.7).abs() < 1e-15);
        assert_eq!(scores.len(), 2);
        assert!((scores[0].score - 0.8).abs() < 1e-15);
        assert!((scores[1].score - 0.6).abs() < 1e-15);
    }

    #[test]
    fn single_patient_all_correct() {
        let records = vec![
            PredictionRecord {
                patient_id: "A".into(),
                correct: true
            };
            3
        ];
        let (prr, _) = patient_recognition_rate(&records, &known(&["A"])).unwrap();
        assert_eq!(prr, 1.0);
    }

    #[test]
    fn duplicating_a_patients_images_leaves_prr_unchanged() {
        let base = vec![
            PredictionRecord {
                patient_id: "A".into(),
                correct: true,
            },
            PredictionRecord {
                patient_id: "A".into(),
                correct: false,
            },
            PredictionRecord {
                patient_id: "B".into(),
                correct: true,
            },
        ];
        let (prr1, _) = patient_recognition_rate(&base, &known(&["A", "B"])).unwrap();
        let mut doubled = base.clone();
        doubled.push(base[0].clone());
        doubled.push(base[1].clone());
        let (prr2, _) = patient_recognition_rate(&doubled, &known(&["A", "B"])).unwrap();
        assert!((prr1 - prr2).abs() < 1e-15);
    }

    #[test]
    fn prr_equals_image_accuracy_for_balanced_patients() {
        // Three patients with three images each: PRR must equal the plain
        // fraction of correct images.
        let mut records = Vec::new();
        let pattern = [true, true, false, true, false, false, true, true, true];
        for (i, &correct) in pattern.iter().enumerate() {
            records.push(PredictionRecord {
                patient_id: format!("P{}", i / 3),
                correct,
            });
        }
        let ids: BTreeSet<String> = (0..3).map(|i| format!("P{i}")).collect();
        let (prr, _) = patient_recognition_rate(&records, &ids).unwrap();
        let accuracy = pattern.iter().filter(|&&c| c).count() as f64 / pattern.len() as f64;
        assert!((prr - accuracy).abs() < 1e-15);
    }

    #[test]
    fn unknown_patient_is_rejected() {
        let records = vec![PredictionRecord {
            patient_id: "ghost".into(),
            correct: true,
        }];
        assert!(matches!(
            patient_recognition_rate(&records, &known(&["A"])),
            Err(EvalError::UnknownPatient { .. })
        ));
    }
}
