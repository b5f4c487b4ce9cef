//! The experiment runner: patient-wise splits or folds, per-fold selection
//! and training, per-group reports.
//!
//! Feature extraction is per-image and fold-independent, so it runs once up
//! front (optionally across a worker pool and backed by the disk cache);
//! everything that can leak — ReliefF, the significance filter, z-score
//! statistics, the hyperparameter search — is fitted inside each fold on the
//! training rows only.

use super::cache::FeatureCache;
use super::{
    confusion, image_metrics, patient_recognition_rate, ConfusionCounts, EvalError, ImageMetrics,
    PatientScore, PredictionRecord,
};
use crate::classifier::{grid_search, train_lssvm};
use crate::dataset::{
    patient_folds, patient_split, ClassLabel, GrayImage, GrayscaleMode, Manifest, SampleMeta,
};
use crate::error::Error;
use crate::features::{extract_features, feature_names, FeatureSpec};
use crate::grid::splitmix64;
use crate::selection::{relieff, significance_filter, zscore_fit, FeatureMatrix};
use crate::synthetic::{synthetic_image, synthetic_manifest, SyntheticSpec};
use crate::vmd::{iterative_vmd, VmdParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::PathBuf;

/// Which Table-style rows to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MagFilter {
    /// One row per magnification present, plus the full-dataset row.
    All,
    /// A single row over every sample.
    Full,
    /// A single row over one magnification.
    Mag(u32),
}

impl From<MagFilter> for String {
    fn from(m: MagFilter) -> String {
        match m {
            MagFilter::All => "all".into(),
            MagFilter::Full => "full".into(),
            MagFilter::Mag(v) => v.to_string(),
        }
    }
}

impl TryFrom<String> for MagFilter {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        match s.as_str() {
            "all" => Ok(MagFilter::All),
            "full" => Ok(MagFilter::Full),
            other => match other.parse::<u32>() {
                Ok(v) if crate::dataset::MAGNIFICATIONS.contains(&v) => Ok(MagFilter::Mag(v)),
                _ => Err(format!(
                    "bad magnification filter {s:?} (expected 40/100/200/400/all/full)"
                )),
            },
        }
    }
}

/// Split protocol: repeated holdout or patient-wise k-fold CV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    Holdout { train_fraction: f64, repeats: usize },
    KFold { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub k_neighbors: usize,
    pub p_threshold: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            k_neighbors: 10,
            p_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gamma: Vec<f64>,
    pub sigma: Vec<f64>,
    pub inner_folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            gamma: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            sigma: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            inner_folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: ExperimentMode,
    pub magnification: MagFilter,
    pub grayscale: GrayscaleMode,
    pub levels: usize,
    pub vmd: VmdParams,
    pub features: FeatureSpec,
    pub selection: SelectionParams,
    pub grid: GridSpec,
    /// Worker pool size for feature extraction: 1 = sequential, 0 = all cores.
    pub jobs: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            mode: ExperimentMode::Holdout {
                train_fraction: 0.7,
                repeats: 5,
            },
            magnification: MagFilter::All,
            grayscale: GrayscaleMode::Green,
            levels: 5,
            vmd: VmdParams::default(),
            features: FeatureSpec::default(),
            selection: SelectionParams::default(),
            grid: GridSpec::default(),
            jobs: 1,
            cache_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.vmd.validate()?;
        self.features.validate()?;
        match self.mode {
            ExperimentMode::Holdout {
                train_fraction,
                repeats,
            } => {
                if !(train_fraction > 0.0 && train_fraction < 1.0) || repeats < 1 {
                    return Err(crate::vmd::VmdError::BadParams(
                        "holdout needs 0 < train_fraction < 1 and repeats >= 1".into(),
                    )
                    .into());
                }
            }
            ExperimentMode::KFold { k } => {
                if k < 2 {
                    return Err(
                        crate::vmd::VmdError::BadParams("k-fold needs k >= 2".into()).into(),
                    );
                }
            }
        }
        Ok(())
    }
}

/// Where samples come from: a directory tree or the procedural fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Root(PathBuf),
    Synthetic(SyntheticSpec),
}

impl DatasetSource {
    pub fn manifest(&self) -> Result<Manifest, Error> {
        match self {
            DatasetSource::Root(root) => Ok(Manifest::build(root)?),
            DatasetSource::Synthetic(spec) => Ok(synthetic_manifest(spec)),
        }
    }

    pub fn load(&self, meta: &SampleMeta, grayscale: GrayscaleMode) -> Result<GrayImage, Error> {
        match self {
            DatasetSource::Root(_) => Ok(crate::dataset::load_grayscale(&meta.path, grayscale)?),
            DatasetSource::Synthetic(spec) => Ok(synthetic_image(spec, meta)),
        }
    }

    /// Stable identity of a sample's pixel content, for cache keying.
    pub fn content_key(&self, meta: &SampleMeta) -> Result<String, Error> {
        match self {
            DatasetSource::Root(_) => {
                let bytes = std::fs::read(&meta.path)?;
                Ok(hex_digest(&bytes))
            }
            DatasetSource::Synthetic(spec) => Ok(format!(
                "synthetic:{}:{}:{}:{}x{}:{}",
                meta.class_label,
                meta.patient_id,
                meta.sequence,
                spec.width,
                spec.height,
                spec.seed
            )),
        }
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Number of folds with a defined value.
    pub n: usize,
}

fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd {
            mean: None,
            std: None,
            n: 0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean: Some(mean),
        std: Some(var.sqrt()),
        n: values.len(),
    }
}

fn mean_std_opt(values: impl Iterator<Item = Option<f64>>) -> MeanStd {
    let defined: Vec<f64> = values.flatten().collect();
    mean_std(&defined)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_patients: Vec<String>,
    pub test_patients: Vec<String>,
    pub selected_features: usize,
    pub selection_fallback: bool,
    pub gamma: f64,
    pub sigma: f64,
    pub confusion: ConfusionCounts,
    pub metrics: ImageMetrics,
    pub prr: f64,
    pub patient_scores: Vec<PatientScore>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy: MeanStd,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub ppv: MeanStd,
    pub npv: MeanStd,
    pub prr: MeanStd,
    pub pooled_confusion: ConfusionCounts,
    pub pooled_metrics: ImageMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub samples: usize,
    pub patients: usize,
    pub folds: Vec<FoldReport>,
    pub aggregate: AggregateMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub rows: Vec<GroupReport>,
}

impl ExperimentReport {
    pub fn to_json_vec(&self) -> serde_json::Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json_slice(bytes: &[u8]) -> serde_json::Result<Self> {
        serde_json::from_slice(bytes)
    }

    /// CSV summary with one row per group, columns in the order
    /// accuracy, sensitivity, specificity, PPV, NPV (percent, fold means).
    pub fn summary_csv(&self) -> String {
        let cell = |m: &MeanStd| match m.mean {
            Some(v) => format!("{:.2}", 100.0 * v),
            None => "undefined".to_string(),
        };
        let mut out = String::from(
            "zoom_factor,accuracy_pct,sensitivity_pct,specificity_pct,ppv_pct,npv_pct,prr_pct\n",
        );
        for row in &self.rows {
            let a = &row.aggregate;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.group,
                cell(&a.accuracy),
                cell(&a.sensitivity),
                cell(&a.specificity),
                cell(&a.ppv),
                cell(&a.npv),
                cell(&a.prr),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Mag(u32),
    Full,
}

impl Group {
    fn name(self) -> String {
        match self {
            Group::Mag(m) => format!("{m}X"),
            Group::Full => "Full Dataset".to_string(),
        }
    }

    fn contains(self, meta: &SampleMeta) -> bool {
        match self {
            Group::Mag(m) => meta.magnification == m,
            Group::Full => true,
        }
    }
}

fn resolve_groups(manifest: &Manifest, filter: MagFilter) -> Vec<Group> {
    match filter {
        MagFilter::Mag(m) => vec![Group::Mag(m)],
        MagFilter::Full => vec![Group::Full],
        MagFilter::All => {
            let mut groups: Vec<Group> = crate::dataset::MAGNIFICATIONS
                .iter()
                .filter(|&&m| manifest.count_by(Some(m), None) > 0)
                .map(|&m| Group::Mag(m))
                .collect();
            groups.push(Group::Full);
            groups
        }
    }
}

/// Extracts (or fetches from cache) the feature vector of every sample, in
/// manifest order. Work items are independent and pure, so the result is
/// identical for any worker pool size.
pub fn compute_features(
    source: &DatasetSource,
    samples: &[SampleMeta],
    cfg: &ExperimentConfig,
) -> Result<Vec<Vec<f64>>, Error> {
    let cache = match &cfg.cache_dir {
        Some(dir) => Some(FeatureCache::new(dir.clone())?),
        None => None,
    };
    let params_key = serde_json::to_string(&(&cfg.vmd, &cfg.features, cfg.levels, cfg.grayscale))
        .expect("params serialize");
    let expected_len = feature_names(cfg.levels, &cfg.features).len();

    let work = |meta: &SampleMeta| -> Result<Vec<f64>, Error> {
        let key = match &cache {
            Some(_) => {
                let content = source.content_key(meta)?;
                Some(hex_digest(format!("{content}|{params_key}").as_bytes()))
            }
            None => None,
        };
        if let (Some(c), Some(k)) = (&cache, &key) {
            if let Some(values) = c.get(k) {
                if values.len() == expected_len {
                    return Ok(values);
                }
            }
        }
        let image = source.load(meta, cfg.grayscale)?;
        let tree = iterative_vmd(image.as_grid(), cfg.levels, &cfg.vmd)?;
        let fv = extract_features(&tree, &cfg.features)?;
        if let (Some(c), Some(k)) = (&cache, &key) {
            c.put(k, &fv.values)?;
        }
        Ok(fv.values)
    };

    if cfg.jobs == 1 {
        samples.iter().map(work).collect()
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if cfg.jobs > 1 {
            builder = builder.num_threads(cfg.jobs);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        pool.install(|| samples.par_iter().map(work).collect())
    }
}

struct FoldOutcome {
    report: FoldReport,
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    fold_index: usize,
    samples: &[SampleMeta],
    features: &[Vec<f64>],
    group_indices: &[usize],
    train_patients: &BTreeSet<String>,
    test_patients: &BTreeSet<String>,
    names: &[String],
    cfg: &ExperimentConfig,
    fold_seed: u64,
) -> Result<FoldOutcome, Error> {
    let train_idx: Vec<usize> = group_indices
        .iter()
        .copied()
        .filter(|&i| train_patients.contains(&samples[i].patient_id))
        .collect();
    let test_idx: Vec<usize> = group_indices
        .iter()
        .copied()
        .filter(|&i| test_patients.contains(&samples[i].patient_id))
        .collect();

    let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| features[i].clone()).collect();
    let train_labels: Vec<ClassLabel> = train_idx.iter().map(|&i| samples[i].class_label).collect();
    let train_matrix = FeatureMatrix::new(names.to_vec(), train_rows, train_labels.clone())?;

    let ranked = relieff(&train_matrix, cfg.selection.k_neighbors, fold_seed)?;
    let outcome = significance_filter(&train_matrix, &ranked, cfg.selection.p_threshold)?;
    let mask = outcome.ranked.selected_mask.clone();
    let selected = train_matrix.select_columns(&mask);
    let stats = zscore_fit(&selected);

    let normalized_rows: Vec<Vec<f64>> = (0..selected.n_rows())
        .map(|i| stats.apply_row(selected.row(i)))
        .collect();
    let signs: Vec<f64> = train_labels.iter().map(|l| l.sign()).collect();
    let gs = grid_search(
        &normalized_rows,
        &signs,
        &cfg.grid.gamma,
        &cfg.grid.sigma,
        cfg.grid.inner_folds,
        fold_seed,
    )?;
    let model = train_lssvm(&normalized_rows, &signs, gs.best_gamma, gs.best_sigma)?
        .with_preprocessing(mask.clone(), stats);

    let mut predictions = Vec::with_capacity(test_idx.len());
    let mut truths = Vec::with_capacity(test_idx.len());
    let mut records = Vec::with_capacity(test_idx.len());
    for &i in &test_idx {
        let (sign, _) = model.predict_sample(&features[i])?;
        let predicted = ClassLabel::from_sign(sign as f64);
        let truth = samples[i].class_label;
        predictions.push(predicted);
        truths.push(truth);
        records.push(PredictionRecord {
            patient_id: samples[i].patient_id.clone(),
            correct: predicted == truth,
        });
    }
    let conf = confusion(&predictions, &truths)?;
    let metrics = image_metrics(&conf)?;
    let (prr, patient_scores) = patient_recognition_rate(&records, test_patients)?;

    Ok(FoldOutcome {
        report: FoldReport {
            fold: fold_index,
            train_patients: train_patients.iter().cloned().collect(),
            test_patients: test_patients.iter().cloned().collect(),
            selected_features: mask.iter().filter(|&&b| b).count(),
            selection_fallback: outcome.fallback,
            gamma: gs.best_gamma,
            sigma: gs.best_sigma,
            confusion: conf,
            metrics,
            prr,
            patient_scores,
        },
    })
}

fn aggregate(folds: &[FoldReport]) -> Result<AggregateMetrics, Error> {
    let mut pooled = ConfusionCounts::default();
    for f in folds {
        pooled.add(&f.confusion);
    }
    Ok(AggregateMetrics {
        accuracy: mean_std_opt(folds.iter().map(|f| f.metrics.accuracy)),
        sensitivity: mean_std_opt(folds.iter().map(|f| f.metrics.sensitivity)),
        specificity: mean_std_opt(folds.iter().map(|f| f.metrics.specificity)),
        ppv: mean_std_opt(folds.iter().map(|f| f.metrics.ppv)),
        npv: mean_std_opt(folds.iter().map(|f| f.metrics.npv)),
        prr: mean_std(&folds.iter().map(|f| f.prr).collect::<Vec<_>>()),
        pooled_metrics: image_metrics(&pooled)?,
        pooled_confusion: pooled,
    })
}

fn mix_seed(seed: u64, group: usize, fold: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((group as u64) << 32) ^ fold as u64))
}

/// Runs the configured experiment end to end: per group, split patients,
/// fit selection + normalization + hyperparameters on the training side,
/// train, evaluate, and aggregate across folds. Deterministic per seed.
pub fn run_experiment(
    source: &DatasetSource,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, Error> {
    cfg.validate()?;
    let manifest = source.manifest()?;
    let samples = manifest.samples();
    let names = feature_names(cfg.levels, &cfg.features);
    let groups = resolve_groups(&manifest, cfg.magnification);

    // Only decompose what some group will actually evaluate (a single
    // magnification filter skips the rest of the corpus).
    let needed: Vec<usize> = (0..samples.len())
        .filter(|&i| groups.iter().any(|g| g.contains(&samples[i])))
        .collect();
    let needed_metas: Vec<SampleMeta> = needed.iter().map(|&i| samples[i].clone()).collect();
    let computed = compute_features(source, &needed_metas, cfg)?;
    let mut features: Vec<Vec<f64>> = vec![Vec::new(); samples.len()];
    for (&slot, values) in needed.iter().zip(computed) {
        features[slot] = values;
    }

    let mut rows = Vec::with_capacity(groups.len());
    for (gi, group) in groups.iter().enumerate() {
        let group_indices: Vec<usize> = (0..samples.len())
            .filter(|&i| group.contains(&samples[i]))
            .collect();
        let sub = match group {
            Group::Mag(m) => manifest.filter_magnification(*m),
            Group::Full => manifest.clone(),
        };
        let plans: Vec<(BTreeSet<String>, BTreeSet<String>)> = match cfg.mode {
            ExperimentMode::Holdout {
                train_fraction,
                repeats,
            } => (0..repeats)
                .map(|r| {
                    let plan = patient_split(&sub, train_fraction, mix_seed(cfg.seed, gi, r))?;
                    Ok((plan.train_patients, plan.test_patients))
                })
                .collect::<Result<_, Error>>()?,
            ExperimentMode::KFold { k } => {
                let folds = patient_folds(&sub, k, mix_seed(cfg.seed, gi, 0))?;
                let all: BTreeSet<String> = folds.iter().flatten().cloned().collect();
                folds
                    .iter()
                    .map(|test| (all.difference(test).cloned().collect(), test.clone()))
                    .collect()
            }
        };

        let mut folds = Vec::with_capacity(plans.len());
        for (fi, (train_p, test_p)) in plans.iter().enumerate() {
            let outcome = run_fold(
                fi,
                samples,
                &features,
                &group_indices,
                train_p,
                test_p,
                &names,
                cfg,
                mix_seed(cfg.seed, gi, fi),
            )
            .map_err(|e| EvalError::FoldFailed {
                group: group.name(),
                fold: fi,
                source: Box::new(e),
            })?;
            folds.push(outcome.report);
        }
        rows.push(GroupReport {
            group: group.name(),
            samples: group_indices.len(),
            patients: sub.patient_count(),
            aggregate: aggregate(&folds)?,
            folds,
        });
    }

    Ok(ExperimentReport {
        config: cfg.clone(),
        seed: cfg.seed,
        feature_names: names,
        rows,
    })
}
