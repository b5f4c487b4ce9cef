//! `vmdtex` — command-line pipeline for VMD-based texture classification.
//!
//! Subcommands mirror the pipeline stages: `index` scans the dataset,
//! `decompose` dumps band-limited components, `extract` writes the feature
//! CSV, `select`/`train` fit the feature filter and classifier on the
//! training split, `evaluate` runs the configured experiment end to end, and
//! `report` pretty-prints a report file. All outputs are written atomically
//! and are byte-reproducible for a fixed config and seed.

mod config;

use clap::{Args, Parser, Subcommand};
use config::PipelineConfig;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vmdtex_core::dataset::{load_grayscale, ClassLabel, Manifest, SampleMeta};
use vmdtex_core::error::Error as CoreError;
use vmdtex_core::evaluation::{compute_features, run_experiment, ExperimentReport};
use vmdtex_core::features::{feature_names, read_feature_csv, write_feature_csv, FeatureRow};
use vmdtex_core::fsutil::write_atomic;
use vmdtex_core::selection::{
    relieff, significance_filter, zscore_fit, FeatureMatrix, SelectionReport,
};
use vmdtex_core::synthetic::is_synthetic_path;
use vmdtex_core::vmd::{dump_components, iterative_vmd};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "vmdtex",
    version,
    about = "Iterative 2D-VMD texture classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed; echoed in every output artifact.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the magnification filter: 40|100|200|400|all|full.
    #[arg(long)]
    mag: Option<String>,
    /// Override the worker pool size (1 = sequential, 0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan the dataset and write the manifest CSV.
    Index {
        #[command(flatten)]
        common: Common,
        /// Output path (default: <output_dir>/manifest.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decompose samples and dump component files plus JSON sidecars.
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Sample paths (filesystem paths or synthetic:// URIs).
        #[arg(required = true)]
        samples: Vec<String>,
    },
    /// Compute the feature CSV for every indexed sample.
    Extract {
        #[command(flatten)]
        common: Common,
    },
    /// Rank and filter features on the training split; write selection.json.
    Select {
        #[command(flatten)]
        common: Common,
    },
    /// Train the classifier on the training split; write model.json.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured experiment; write report.json and report.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Print the summary table of an existing report.
    Report {
        /// Path to a report.json produced by `evaluate`.
        report: PathBuf,
    },
}

struct CliError {
    exit: u8,
    category: &'static str,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            exit: EXIT_CONFIG,
            category: "config",
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            exit: EXIT_DATA,
            category: "data",
            message: message.into(),
        }
    }
}

fn categorize(err: &CoreError) -> (u8, &'static str) {
    use vmdtex_core::classifier::ClassifierError as C;
    use vmdtex_core::dataset::DatasetError as D;
    use vmdtex_core::features::FeatureError as F;
    use vmdtex_core::selection::SelectionError as S;
    use vmdtex_core::vmd::VmdError as V;
    match err {
        CoreError::Dataset(D::TooFewPatients { .. } | D::BadK { .. }) => (EXIT_CONFIG, "config"),
        CoreError::Dataset(_) | CoreError::Io(_) | CoreError::Csv(_) | CoreError::Json(_) => {
            (EXIT_DATA, "data")
        }
        CoreError::Vmd(V::BadParams(_)) => (EXIT_CONFIG, "config"),
        CoreError::Vmd(V::NonFinite { .. }) => (EXIT_NUMERICAL, "numerical"),
        CoreError::Feature(F::BadOrder(_)) => (EXIT_CONFIG, "config"),
        CoreError::Feature(_) => (EXIT_NUMERICAL, "numerical"),
        CoreError::Selection(S::SingleClass) => (EXIT_DATA, "data"),
        CoreError::Selection(S::BadK { .. }) => (EXIT_CONFIG, "config"),
        CoreError::Selection(S::BadMatrix(_)) => (EXIT_NUMERICAL, "numerical"),
        CoreError::Classifier(C::BadHyperparameters(_)) => (EXIT_CONFIG, "config"),
        CoreError::Classifier(C::SingleClass) => (EXIT_DATA, "data"),
        CoreError::Classifier(_) => (EXIT_NUMERICAL, "numerical"),
        CoreError::Evaluation(vmdtex_core::evaluation::EvalError::FoldFailed {
            source, ..
        }) => categorize(source),
        CoreError::Evaluation(_) => (EXIT_DATA, "data"),
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let (exit, category) = categorize(&err);
        Self {
            exit,
            category,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self::data(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({
                    "error": { "category": e.category, "exit_code": e.exit, "message": e.message }
                })
            );
            ExitCode::from(e.exit)
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(&common.config).map_err(CliError::config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(mag) = &common.mag {
        cfg.experiment.magnification = mag.clone();
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    // Validate the derived pieces up front so bad parameters exit 2.
    let exp = cfg.experiment_config().map_err(CliError::config)?;
    exp.validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    cfg.dataset_source().map_err(CliError::config)?;
    Ok(cfg)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Index { common, out } => cmd_index(&common, out),
        Command::Decompose { common, samples } => cmd_decompose(&common, &samples),
        Command::Extract { common } => cmd_extract(&common),
        Command::Select { common } => cmd_select(&common),
        Command::Train { common } => cmd_train(&common),
        Command::Evaluate { common } => cmd_evaluate(&common),
        Command::Report { report } => cmd_report(&report),
    }
}

fn manifest_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("manifest.csv")
}

fn features_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("features.csv")
}

fn cmd_index(common: &Common, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let source = cfg.dataset_source().map_err(CliError::config)?;
    let manifest = source.manifest()?;
    let out = out.unwrap_or_else(|| manifest_path(&cfg));
    write_atomic(&out, &manifest.to_csv_bytes().map_err(CoreError::from)?)?;
    println!(
        "indexed {} samples from {} patients -> {} (seed {})",
        manifest.len(),
        manifest.patient_count(),
        out.display(),
        cfg.seed
    );
    for mag in vmdtex_core::dataset::MAGNIFICATIONS {
        let total = manifest.count_by(Some(mag), None);
        if total > 0 {
            println!(
                "  {mag}X: {total} ({} benign / {} malignant)",
                manifest.count_by(Some(mag), Some(ClassLabel::Benign)),
                manifest.count_by(Some(mag), Some(ClassLabel::Malignant)),
            );
        }
    }
    Ok(())
}

fn cmd_decompose(common: &Common, samples: &[String]) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let source = cfg.dataset_source().map_err(CliError::config)?;
    let params = cfg.vmd_params().map_err(CliError::config)?;
    let grayscale = cfg.grayscale_mode().map_err(CliError::config)?;
    let by_path: BTreeMap<String, SampleMeta> =
        if samples.iter().any(|s| is_synthetic_path(Path::new(s))) {
            source
                .manifest()?
                .samples()
                .iter()
                .map(|m| (m.path.to_string_lossy().into_owned(), m.clone()))
                .collect()
        } else {
            BTreeMap::new()
        };

    for sample in samples {
        let path = Path::new(sample);
        let image = if is_synthetic_path(path) {
            let meta = by_path.get(sample).ok_or_else(|| {
                CliError::data(format!("{sample} is not in the synthetic manifest"))
            })?;
            source.load(meta, grayscale)?
        } else {
            load_grayscale(path, grayscale).map_err(CoreError::from)?
        };
        let stem: String = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sample".into())
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        let tree =
            iterative_vmd(image.as_grid(), cfg.vmd.levels, &params).map_err(CoreError::from)?;
        let dir = cfg.output_dir.join("components").join(&stem);
        let files = dump_components(&tree, &dir, &stem)?;
        println!(
            "decomposed {sample}: {} components (+{} sidecars) under {} (seed {})",
            files.len(),
            files.len(),
            dir.display(),
            cfg.seed
        );
    }
    Ok(())
}

fn cmd_extract(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let mpath = manifest_path(&cfg);
    if !mpath.exists() {
        return Err(CliError::data(format!(
            "{} not found; run `vmdtex index` first",
            mpath.display()
        )));
    }
    let manifest = Manifest::read_csv(std::fs::File::open(&mpath)?).map_err(CoreError::from)?;
    let source = cfg.dataset_source().map_err(CliError::config)?;
    let exp = cfg.experiment_config().map_err(CliError::config)?;
    let values = compute_features(&source, manifest.samples(), &exp)?;
    let names = feature_names(exp.levels, &exp.features);
    let rows: Vec<FeatureRow> = manifest
        .samples()
        .iter()
        .zip(values)
        .map(|(meta, values)| FeatureRow {
            sample_id: meta.path.to_string_lossy().into_owned(),
            patient_id: meta.patient_id.clone(),
            magnification: meta.magnification,
            label: meta.class_label,
            values,
        })
        .collect();
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &names, rows.iter()).map_err(CoreError::from)?;
    let fpath = features_path(&cfg);
    write_atomic(&fpath, &buf)?;
    println!(
        "extracted {} feature rows x {} columns -> {} (seed {})",
        rows.len(),
        names.len(),
        fpath.display(),
        cfg.seed
    );
    Ok(())
}

/// Loads the feature CSV, applies the magnification filter, and splits rows
/// patient-wise with the configured holdout fraction. Returns the training
/// matrix; `select` and `train` always fit on the training side only.
fn training_matrix(cfg: &PipelineConfig) -> Result<(Vec<String>, FeatureMatrix), CliError> {
    let fpath = features_path(cfg);
    if !fpath.exists() {
        return Err(CliError::data(format!(
            "{} not found; run `vmdtex extract` first",
            fpath.display()
        )));
    }
    let (names, rows) = read_feature_csv(std::fs::File::open(&fpath)?).map_err(CoreError::from)?;
    let filter = cfg.magnification_filter().map_err(CliError::config)?;
    let rows: Vec<FeatureRow> = rows
        .into_iter()
        .filter(|r| match filter {
            vmdtex_core::evaluation::MagFilter::Mag(m) => r.magnification == m,
            _ => true,
        })
        .collect();
    if rows.is_empty() {
        return Err(CliError::data(
            "no feature rows match the magnification filter".to_string(),
        ));
    }
    // Synthesize a manifest over the rows so the split is patient-wise.
    let metas: Vec<SampleMeta> = rows
        .iter()
        .map(|r| SampleMeta {
            path: PathBuf::from(&r.sample_id),
            patient_id: r.patient_id.clone(),
            class_label: r.label,
            subtype: String::new(),
            magnification: r.magnification,
            sequence: 0,
        })
        .collect();
    let manifest = Manifest::from_samples(metas).map_err(CoreError::from)?;
    let split =
        vmdtex_core::dataset::patient_split(&manifest, cfg.experiment.train_fraction, cfg.seed)
            .map_err(CoreError::from)?;
    let train_rows: Vec<&FeatureRow> = rows
        .iter()
        .filter(|r| split.train_patients.contains(&r.patient_id))
        .collect();
    let matrix = FeatureMatrix::new(
        names.clone(),
        train_rows.iter().map(|r| r.values.clone()).collect(),
        train_rows.iter().map(|r| r.label).collect(),
    )
    .map_err(CoreError::from)?;
    Ok((names, matrix))
}

fn cmd_select(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let (names, matrix) = training_matrix(&cfg)?;
    let ranked = relieff(&matrix, cfg.selection.k_neighbors, cfg.seed).map_err(CoreError::from)?;
    let outcome = significance_filter(&matrix, &ranked, cfg.selection.p_threshold)
        .map_err(CoreError::from)?;
    let report = SelectionReport::new(&names, &outcome);
    let path = cfg.output_dir.join("selection.json");
    let mut bytes = serde_json::to_vec_pretty(&report).map_err(CoreError::from)?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    println!(
        "selected {} of {} features (fallback: {}) -> {} (seed {})",
        report.selected.len(),
        names.len(),
        report.fallback,
        path.display(),
        cfg.seed
    );
    Ok(())
}

fn cmd_train(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let (_names, matrix) = training_matrix(&cfg)?;
    let ranked = relieff(&matrix, cfg.selection.k_neighbors, cfg.seed).map_err(CoreError::from)?;
    let outcome = significance_filter(&matrix, &ranked, cfg.selection.p_threshold)
        .map_err(CoreError::from)?;
    let mask = outcome.ranked.selected_mask.clone();
    let selected = matrix.select_columns(&mask);
    let stats = zscore_fit(&selected);
    let rows: Vec<Vec<f64>> = (0..selected.n_rows())
        .map(|i| stats.apply_row(selected.row(i)))
        .collect();
    let labels: Vec<f64> = matrix.labels().iter().map(|l| l.sign()).collect();
    let gs = vmdtex_core::classifier::grid_search(
        &rows,
        &labels,
        &cfg.classifier.gamma_grid,
        &cfg.classifier.sigma_grid,
        cfg.classifier.inner_folds,
        cfg.seed,
    )
    .map_err(CoreError::from)?;
    let model = vmdtex_core::classifier::train_lssvm(&rows, &labels, gs.best_gamma, gs.best_sigma)
        .map_err(CoreError::from)?
        .with_preprocessing(mask, stats);
    let path = cfg.output_dir.join("model.json");
    let mut bytes = model.to_json().map_err(CoreError::from)?.into_bytes();
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    println!(
        "trained LS-SVM on {} rows (gamma {}, sigma {}, kkt residual {:.2e}) -> {} (seed {})",
        rows.len(),
        gs.best_gamma,
        gs.best_sigma,
        model.kkt_residual,
        path.display(),
        cfg.seed
    );
    Ok(())
}

fn cmd_evaluate(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let source = cfg.dataset_source().map_err(CliError::config)?;
    let exp = cfg.experiment_config().map_err(CliError::config)?;
    let report = run_experiment(&source, &exp)?;
    let json_path = cfg.output_dir.join("report.json");
    write_atomic(&json_path, &report.to_json_vec().map_err(CoreError::from)?)?;
    let csv_path = cfg.output_dir.join("report.csv");
    write_atomic(&csv_path, report.summary_csv().as_bytes())?;
    println!(
        "wrote {} and {} (seed {})",
        json_path.display(),
        csv_path.display(),
        report.seed
    );
    print!("{}", report.summary_csv());
    Ok(())
}

fn cmd_report(path: &Path) -> Result<(), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let report = ExperimentReport::from_json_slice(&bytes).map_err(CoreError::from)?;
    println!("seed: {}", report.seed);
    for row in &report.rows {
        println!(
            "group {}: {} samples, {} patients, {} folds, PRR mean {}",
            row.group,
            row.samples,
            row.patients,
            row.folds.len(),
            row.aggregate
                .prr
                .mean
                .map(|v| format!("{:.4}", v))
                .unwrap_or_else(|| "undefined".into()),
        );
    }
    print!("{}", report.summary_csv());
    Ok(())
}
