//! TOML pipeline configuration.
//!
//! Every parameter the pipeline consumes lives here with its default; unknown
//! keys are rejected so typos fail loudly instead of silently falling back.

use serde::Deserialize;
use std::path::{Path, PathBuf};
use vmdtex_core::dataset::GrayscaleMode;
use vmdtex_core::evaluation::{DatasetSource, ExperimentConfig, ExperimentMode, MagFilter};
use vmdtex_core::features::{EntropyOrders, FeatureSpec, YagerDenominator, ZernikeSpec};
use vmdtex_core::synthetic::SyntheticSpec;
use vmdtex_core::vmd::{InitScheme, VmdParams};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker pool size: 1 = sequential, 0 = all available cores.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub vmd: VmdSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum SourceKind {
    Breakhis,
    Synthetic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: SourceKind,
    /// Dataset root directory; required for the breakhis source.
    #[serde(default)]
    pub root: Option<PathBuf>,
    #[serde(default = "default_grayscale")]
    pub grayscale: String,
    #[serde(default)]
    pub synthetic: SyntheticSection,
}

fn default_grayscale() -> String {
    "green".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    #[serde(default = "default_ppc")]
    pub patients_per_class: usize,
    #[serde(default = "default_ipp")]
    pub images_per_patient: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_side")]
    pub height: usize,
}

fn default_ppc() -> usize {
    10
}
fn default_ipp() -> usize {
    5
}
fn default_side() -> usize {
    128
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            patients_per_class: default_ppc(),
            images_per_patient: default_ipp(),
            width: default_side(),
            height: default_side(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmdSection {
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_init")]
    pub init: String,
}

fn default_levels() -> usize {
    5
}
fn default_alpha() -> f64 {
    5000.0
}
fn default_epsilon() -> f64 {
    1e-6
}
fn default_max_iterations() -> usize {
    300
}
fn default_init() -> String {
    "spread".into()
}

impl Default for VmdSection {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            alpha: default_alpha(),
            tau: 0.0,
            epsilon: default_epsilon(),
            max_iterations: default_max_iterations(),
            init: default_init(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    #[serde(default = "default_zernike_order")]
    pub zernike_order: u32,
    #[serde(default = "default_grid_side")]
    pub grid_side: usize,
    #[serde(default = "default_renyi_a")]
    pub renyi_a: f64,
    #[serde(default = "default_kapur_a")]
    pub kapur_a: f64,
    #[serde(default = "default_kapur_b")]
    pub kapur_b: f64,
    #[serde(default = "default_yager")]
    pub yager_denominator: String,
}

fn default_zernike_order() -> u32 {
    10
}
fn default_grid_side() -> usize {
    128
}
fn default_renyi_a() -> f64 {
    2.0
}
fn default_kapur_a() -> f64 {
    0.5
}
fn default_kapur_b() -> f64 {
    2.0
}
fn default_yager() -> String {
    "bins".into()
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            zernike_order: default_zernike_order(),
            grid_side: default_grid_side(),
            renyi_a: default_renyi_a(),
            kapur_a: default_kapur_a(),
            kapur_b: default_kapur_b(),
            yager_denominator: default_yager(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    #[serde(default = "default_k_neighbors")]
    pub k_neighbors: usize,
    #[serde(default = "default_p_threshold")]
    pub p_threshold: f64,
}

fn default_k_neighbors() -> usize {
    10
}
fn default_p_threshold() -> f64 {
    0.05
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            k_neighbors: default_k_neighbors(),
            p_threshold: default_p_threshold(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_sigma_grid")]
    pub sigma_grid: Vec<f64>,
    #[serde(default = "default_inner_folds")]
    pub inner_folds: usize,
}

fn default_gamma_grid() -> Vec<f64> {
    vec![0.1, 1.0, 10.0, 100.0, 1000.0]
}
fn default_sigma_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
}
fn default_inner_folds() -> usize {
    5
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            gamma_grid: default_gamma_grid(),
            sigma_grid: default_sigma_grid(),
            inner_folds: default_inner_folds(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// "holdout" or "kfold".
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    /// 40 | 100 | 200 | 400 | "all" | "full".
    #[serde(default = "default_magnification")]
    pub magnification: String,
}

fn default_mode() -> String {
    "holdout".into()
}
fn default_train_fraction() -> f64 {
    0.7
}
fn default_repeats() -> usize {
    5
}
fn default_k() -> usize {
    3
}
fn default_magnification() -> String {
    "all".into()
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            train_fraction: default_train_fraction(),
            repeats: default_repeats(),
            k: default_k(),
            magnification: default_magnification(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
    }

    pub fn grayscale_mode(&self) -> Result<GrayscaleMode, String> {
        match self.dataset.grayscale.as_str() {
            "green" => Ok(GrayscaleMode::Green),
            "luma" => Ok(GrayscaleMode::Luma),
            other => Err(format!(
                "grayscale must be \"green\" or \"luma\", got {other:?}"
            )),
        }
    }

    pub fn magnification_filter(&self) -> Result<MagFilter, String> {
        MagFilter::try_from(self.experiment.magnification.clone())
    }

    pub fn dataset_source(&self) -> Result<DatasetSource, String> {
        match self.dataset.source {
            SourceKind::Breakhis => {
                let root = self.dataset.root.clone().ok_or_else(|| {
                    "dataset.root is required when source = \"breakhis\"".to_string()
                })?;
                Ok(DatasetSource::Root(root))
            }
            SourceKind::Synthetic => {
                let s = &self.dataset.synthetic;
                Ok(DatasetSource::Synthetic(SyntheticSpec {
                    patients_per_class: s.patients_per_class,
                    images_per_patient: s.images_per_patient,
                    width: s.width,
                    height: s.height,
                    seed: self.seed,
                }))
            }
        }
    }

    pub fn vmd_params(&self) -> Result<VmdParams, String> {
        let init = match self.vmd.init.as_str() {
            "spread" => InitScheme::Spread,
            "random" => InitScheme::Random,
            other => {
                return Err(format!(
                    "vmd.init must be \"spread\" or \"random\", got {other:?}"
                ))
            }
        };
        Ok(VmdParams {
            modes: 2,
            alpha: self.vmd.alpha,
            tau: self.vmd.tau,
            epsilon: self.vmd.epsilon,
            max_iterations: self.vmd.max_iterations,
            init,
            seed: self.seed,
        })
    }

    pub fn feature_spec(&self) -> Result<FeatureSpec, String> {
        let yager = match self.features.yager_denominator.as_str() {
            "bins" => YagerDenominator::Bins,
            "pixels" => YagerDenominator::Pixels,
            other => {
                return Err(format!(
                    "yager_denominator must be \"bins\" or \"pixels\", got {other:?}"
                ))
            }
        };
        Ok(FeatureSpec {
            zernike: ZernikeSpec {
                max_order: self.features.zernike_order,
                grid_side: self.features.grid_side,
            },
            entropy: EntropyOrders {
                renyi_a: self.features.renyi_a,
                kapur_a: self.features.kapur_a,
                kapur_b: self.features.kapur_b,
                yager_denominator: yager,
            },
        })
    }

    pub fn experiment_mode(&self) -> Result<ExperimentMode, String> {
        match self.experiment.mode.as_str() {
            "holdout" => Ok(ExperimentMode::Holdout {
                train_fraction: self.experiment.train_fraction,
                repeats: self.experiment.repeats,
            }),
            "kfold" => Ok(ExperimentMode::KFold {
                k: self.experiment.k,
            }),
            other => Err(format!(
                "experiment.mode must be \"holdout\" or \"kfold\", got {other:?}"
            )),
        }
    }

    /// Assembles the full core experiment configuration.
    pub fn experiment_config(&self) -> Result<ExperimentConfig, String> {
        Ok(ExperimentConfig {
            seed: self.seed,
            mode: self.experiment_mode()?,
            magnification: self.magnification_filter()?,
            grayscale: self.grayscale_mode()?,
            levels: self.vmd.levels,
            vmd: self.vmd_params()?,
            features: self.feature_spec()?,
            selection: vmdtex_core::evaluation::SelectionParams {
                k_neighbors: self.selection.k_neighbors,
                p_threshold: self.selection.p_threshold,
            },
            grid: vmdtex_core::evaluation::GridSpec {
                gamma: self.classifier.gamma_grid.clone(),
                sigma: self.classifier.sigma_grid.clone(),
                inner_folds: self.classifier.inner_folds,
            },
            jobs: self.jobs,
            cache_dir: self.cache_dir.clone(),
        })
    }
}
