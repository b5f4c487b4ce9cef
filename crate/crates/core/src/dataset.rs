//! Discovery and indexing of BreakHis-style image collections, grayscale
//! loading, and patient-wise splits.
//!
//! File names follow the public BreakHis convention
//! `PROC_C_SUBTYPE-YEAR-SLIDE-MAG-SEQ.png` (e.g. `SOB_B_TA-14-4659-40-001.png`):
//! `PROC` is the biopsy procedure, `C` the class letter (B/M), `SUBTYPE` the
//! tumor subtype code, and the procedure+year+slide triple identifies the
//! patient. One slide always carries a single diagnosis, so splits and folds
//! are formed over patients, never over individual images.

use crate::grid::Grid2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MAGNIFICATIONS: [u32; 4] = [40, 100, 200, 400];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed sample name {name:?}: {reason}")]
    MalformedName { name: String, reason: String },
    #[error("no recognizable images under {root}")]
    EmptyDataset { root: PathBuf },
    #[error("patient {patient_id} appears with both class labels")]
    ConflictingPatientClass { patient_id: String },
    #[error("class label of {path} disagrees with its directory")]
    ClassMismatch { path: PathBuf },
    #[error("cannot decode {path}: {message}")]
    DecodeError { path: PathBuf, message: String },
    #[error("invalid grayscale image: {0}")]
    BadImage(String),
    #[error("split would leave an empty side ({patients} patients, fraction {fraction})")]
    TooFewPatients { patients: usize, fraction: f64 },
    #[error("k = {k} is out of range for {patients} patients")]
    BadK { k: usize, patients: usize },
    #[error("manifest io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Diagnosis class; `Malignant` is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Benign,
    Malignant,
}

impl ClassLabel {
    /// ±1 encoding used by the classifier (+1 = malignant).
    pub fn sign(self) -> f64 {
        match self {
            ClassLabel::Malignant => 1.0,
            ClassLabel::Benign => -1.0,
        }
    }

    pub fn from_sign(score: f64) -> Self {
        if score >= 0.0 {
            ClassLabel::Malignant
        } else {
            ClassLabel::Benign
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "benign" => Some(ClassLabel::Benign),
            "malignant" => Some(ClassLabel::Malignant),
            _ => None,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassLabel::Benign => write!(f, "benign"),
            ClassLabel::Malignant => write!(f, "malignant"),
        }
    }
}

/// Parsed identity of one sample image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub path: PathBuf,
    /// Procedure+year+slide triple, e.g. `SOB-14-4659`.
    pub patient_id: String,
    pub class_label: ClassLabel,
    pub subtype: String,
    pub magnification: u32,
    pub sequence: u32,
}

const RASTER_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

fn malformed(name: &str, reason: impl Into<String>) -> DatasetError {
    DatasetError::MalformedName {
        name: name.to_string(),
        reason: reason.into(),
    }
}

/// Parses a BreakHis-style file name such as `SOB_B_TA-14-4659-40-001.png`.
pub fn parse_filename(name: &str) -> Result<SampleMeta, DatasetError> {
    let (stem, ext) = name
        .rsplit_once('.')
        .ok_or_else(|| malformed(name, "missing extension"))?;
    if !RASTER_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()) {
        return Err(malformed(name, format!("unsupported extension {ext:?}")));
    }
    let mut under = stem.split('_');
    let (procedure, class_code, rest) =
        match (under.next(), under.next(), under.next(), under.next()) {
            (Some(p), Some(c), Some(r), None) if !p.is_empty() && !r.is_empty() => (p, c, r),
            _ => return Err(malformed(name, "expected PROC_C_REST structure")),
        };
    let class_label = match class_code {
        "B" => ClassLabel::Benign,
        "M" => ClassLabel::Malignant,
        other => return Err(malformed(name, format!("unknown class code {other:?}"))),
    };
    let dashed: Vec<&str> = rest.split('-').collect();
    if dashed.len() < 5 {
        return Err(malformed(
            name,
            "expected SUBTYPE-YEAR-SLIDE-MAG-SEQ tokens",
        ));
    }
    let subtype = dashed[0];
    let year = dashed[1];
    let slide = dashed[2..dashed.len() - 2].join("-");
    if subtype.is_empty() || year.is_empty() || slide.is_empty() {
        return Err(malformed(name, "empty subtype/year/slide token"));
    }
    let magnification: u32 = dashed[dashed.len() - 2]
        .parse()
        .map_err(|_| malformed(name, "magnification is not an integer"))?;
    if !MAGNIFICATIONS.contains(&magnification) {
        return Err(malformed(
            name,
            format!("magnification {magnification} not in 40/100/200/400"),
        ));
    }
    let sequence: u32 = dashed[dashed.len() - 1]
        .parse()
        .map_err(|_| malformed(name, "sequence is not an integer"))?;
    Ok(SampleMeta {
        path: PathBuf::from(name),
        patient_id: format!("{procedure}-{year}-{slide}"),
        class_label,
        subtype: subtype.to_string(),
        magnification,
        sequence,
    })
}

/// Indexed collection: samples in stable lexicographic path order plus the
/// deduplicated patient → class table.
#[derive(Debug, Clone)]
pub struct Manifest {
    samples: Vec<SampleMeta>,
    patients: BTreeMap<String, ClassLabel>,
}

impl Manifest {
    /// Builds a manifest from parsed samples, sorting by path and checking
    /// the one-class-per-patient invariant.
    pub fn from_samples(mut samples: Vec<SampleMeta>) -> Result<Self, DatasetError> {
        samples.sort_by(|a, b| a.path.cmp(&b.path));
        let mut patients = BTreeMap::new();
        for s in &samples {
            match patients.insert(s.patient_id.clone(), s.class_label) {
                Some(prev) if prev != s.class_label => {
                    return Err(DatasetError::ConflictingPatientClass {
                        patient_id: s.patient_id.clone(),
                    })
                }
                _ => {}
            }
        }
        Ok(Self { samples, patients })
    }

    /// Walks `root`, parses every file with a supported raster extension, and
    /// indexes the result. A file whose surrounding directory names state a
    /// class that contradicts the filename is a hard error.
    pub fn build(root: &Path) -> Result<Self, DatasetError> {
        let mut samples = Vec::new();
        for entry in walkdir::WalkDir::new(root).follow_links(false) {
            let entry = entry.map_err(|e| DatasetError::Io(e.into()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let path = entry.path();
            let ext = match path.extension().and_then(|e| e.to_str()) {
                Some(e) if RASTER_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()) => e,
                _ => continue,
            };
            let _ = ext;
            let name = entry.file_name().to_string_lossy().into_owned();
            let mut meta = parse_filename(&name)?;
            if let Some(dir_class) = directory_class(root, path) {
                if dir_class != meta.class_label {
                    return Err(DatasetError::ClassMismatch {
                        path: path.to_path_buf(),
                    });
                }
            }
            meta.path = path.to_path_buf();
            samples.push(meta);
        }
        if samples.is_empty() {
            return Err(DatasetError::EmptyDataset {
                root: root.to_path_buf(),
            });
        }
        Self::from_samples(samples)
    }

    pub fn samples(&self) -> &[SampleMeta] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn patients(&self) -> &BTreeMap<String, ClassLabel> {
        &self.patients
    }

    pub fn patient_count(&self) -> usize {
        self.patients.len()
    }

    pub fn patient_ids(&self) -> Vec<String> {
        self.patients.keys().cloned().collect()
    }

    /// Number of samples matching the optional magnification/class filters.
    pub fn count_by(&self, magnification: Option<u32>, class: Option<ClassLabel>) -> usize {
        self.samples
            .iter()
            .filter(|s| magnification.is_none_or(|m| s.magnification == m))
            .filter(|s| class.is_none_or(|c| s.class_label == c))
            .count()
    }

    /// Sub-manifest containing only samples at `magnification`.
    pub fn filter_magnification(&self, magnification: u32) -> Manifest {
        let samples: Vec<SampleMeta> = self
            .samples
            .iter()
            .filter(|s| s.magnification == magnification)
            .cloned()
            .collect();
        Self::from_samples(samples).expect("subset of a valid manifest stays valid")
    }

    /// Writes the manifest CSV (`path,patient_id,class,subtype,magnification,sequence`,
    /// UTF-8, LF line endings).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "path",
            "patient_id",
            "class",
            "subtype",
            "magnification",
            "sequence",
        ])?;
        for s in &self.samples {
            w.write_record([
                s.path.to_string_lossy().as_ref(),
                &s.patient_id,
                &s.class_label.to_string(),
                &s.subtype,
                &s.magnification.to_string(),
                &s.sequence.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>, DatasetError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }

    /// Parses a manifest CSV previously produced by [`Manifest::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DatasetError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut samples = Vec::new();
        for record in r.records() {
            let record = record?;
            let get = |i: usize| record.get(i).unwrap_or("").to_string();
            let class =
                ClassLabel::parse(&get(2)).ok_or_else(|| malformed(&get(0), "bad class column"))?;
            samples.push(SampleMeta {
                path: PathBuf::from(get(0)),
                patient_id: get(1),
                class_label: class,
                subtype: get(3),
                magnification: get(4)
                    .parse()
                    .map_err(|_| malformed(&get(0), "bad magnification column"))?,
                sequence: get(5)
                    .parse()
                    .map_err(|_| malformed(&get(0), "bad sequence column"))?,
            });
        }
        Self::from_samples(samples)
    }
}

fn directory_class(root: &Path, path: &Path) -> Option<ClassLabel> {
    let rel = path.strip_prefix(root).unwrap_or(path);
    for comp in rel.components() {
        let c = comp.as_os_str().to_string_lossy().to_ascii_lowercase();
        if c == "benign" {
            return Some(ClassLabel::Benign);
        }
        if c == "malignant" {
            return Some(ClassLabel::Malignant);
        }
    }
    None
}

/// A validated grayscale image: dimensions ≥ 2 and values in [0, 1].
#[derive(Debug, Clone)]
pub struct GrayImage {
    grid: Grid2,
}

impl GrayImage {
    pub fn new(grid: Grid2) -> Result<Self, DatasetError> {
        if grid.width() < 2 || grid.height() < 2 {
            return Err(DatasetError::BadImage(format!(
                "dimensions {}x{} below the 2x2 minimum",
                grid.width(),
                grid.height()
            )));
        }
        if !grid
            .values()
            .iter()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
        {
            return Err(DatasetError::BadImage(
                "pixel values must be finite and in [0,1]".into(),
            ));
        }
        Ok(Self { grid })
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn as_grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn into_grid(self) -> Grid2 {
        self.grid
    }
}

/// Channel reduction applied to color inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrayscaleMode {
    /// Green channel only (stained tissue carries most contrast there).
    Green,
    /// Rec. 601 luminance.
    Luma,
}

/// Loads `path` and reduces it to the green channel scaled into [0, 1].
/// Grayscale inputs pass through unchanged.
pub fn load_green_channel(path: &Path) -> Result<GrayImage, DatasetError> {
    load_grayscale(path, GrayscaleMode::Green)
}

/// Loads `path` with the chosen channel reduction.
pub fn load_grayscale(path: &Path, mode: GrayscaleMode) -> Result<GrayImage, DatasetError> {
    let decoded = image::open(path).map_err(|e| DatasetError::DecodeError {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    gray_from_dynamic(&decoded, mode)
}

/// Reduces an already-decoded image. Split out so tests can exercise the
/// channel math without touching the filesystem.
pub fn gray_from_dynamic(
    img: &image::DynamicImage,
    mode: GrayscaleMode,
) -> Result<GrayImage, DatasetError> {
    use image::DynamicImage;
    let grid = match img {
        DynamicImage::ImageLuma8(g) => {
            Grid2::from_fn(g.width() as usize, g.height() as usize, |x, y| {
                g.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0
            })
        }
        other => {
            let rgb = other.to_rgb8();
            Grid2::from_fn(rgb.width() as usize, rgb.height() as usize, |x, y| {
                let p = rgb.get_pixel(x as u32, y as u32).0;
                match mode {
                    GrayscaleMode::Green => p[1] as f64 / 255.0,
                    GrayscaleMode::Luma => {
                        (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
                    }
                }
            })
        }
    };
    GrayImage::new(grid)
}

/// A patient-wise train/test assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_patients: BTreeSet<String>,
    pub test_patients: BTreeSet<String>,
    pub seed: u64,
}

fn shuffled_patients(manifest: &Manifest, seed: u64) -> Vec<String> {
    let mut ids = manifest.patient_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids
}

/// Shuffles patients with a seeded RNG and assigns the first
/// round(fraction · P) of them (round half up) to the training side.
pub fn patient_split(
    manifest: &Manifest,
    train_fraction: f64,
    seed: u64,
) -> Result<SplitPlan, DatasetError> {
    let p = manifest.patient_count();
    if !(train_fraction > 0.0 && train_fraction < 1.0) || p < 2 {
        return Err(DatasetError::TooFewPatients {
            patients: p,
            fraction: train_fraction,
        });
    }
    let n_train = (train_fraction * p as f64 + 0.5).floor() as usize;
    if n_train == 0 || n_train >= p {
        return Err(DatasetError::TooFewPatients {
            patients: p,
            fraction: train_fraction,
        });
    }
    let ids = shuffled_patients(manifest, seed);
    let train_patients: BTreeSet<String> = ids[..n_train].iter().cloned().collect();
    let test_patients: BTreeSet<String> = ids[n_train..].iter().cloned().collect();
    Ok(SplitPlan {
        train_patients,
        test_patients,
        seed,
    })
}

/// Partitions patients into `k` disjoint folds whose sizes differ by at most
/// one; the first `P mod k` folds take the extra patient.
pub fn patient_folds(
    manifest: &Manifest,
    k: usize,
    seed: u64,
) -> Result<Vec<BTreeSet<String>>, DatasetError> {
    let p = manifest.patient_count();
    if k < 2 || k > p {
        return Err(DatasetError::BadK { k, patients: p });
    }
    let ids = shuffled_patients(manifest, seed);
    let base = p / k;
    let extra = p % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        folds.push(ids[cursor..cursor + size].iter().cloned().collect());
        cursor += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(name: &str) -> SampleMeta {
        parse_filename(name).unwrap()
    }

    #[test]
    fn parses_benign_tubular_adenoma() {
        let m = meta("SOB_B_TA-14-4659-40-001.png");
        assert_eq!(m.class_label, ClassLabel::Benign);
        assert_eq!(m.subtype, "TA");
        assert_eq!(m.patient_id, "SOB-14-4659");
        assert_eq!(m.magnification, 40);
        assert_eq!(m.sequence, 1);
    }

    #[test]
    fn parses_malignant_ductal_carcinoma() {
        let m = meta("SOB_M_DC-14-2523-400-012.png");
        assert_eq!(m.class_label, ClassLabel::Malignant);
        assert_eq!(m.subtype, "DC");
        assert_eq!(m.magnification, 400);
        assert_eq!(m.sequence, 12);
    }

    #[test]
    fn parses_alphanumeric_slide_codes() {
        let m = meta("SOB_B_A-14-22549AB-40-003.png");
        assert_eq!(m.patient_id, "SOB-14-22549AB");
        assert_eq!(m.subtype, "A");
    }

    #[test]
    fn rejects_non_raster_and_garbage() {
        assert!(matches!(
            parse_filename("notes.txt"),
            Err(DatasetError::MalformedName { .. })
        ));
        assert!(matches!(
            parse_filename("SOB_B_TA-14.png"),
            Err(DatasetError::MalformedName { .. })
        ));
        assert!(matches!(
            parse_filename("SOB_X_TA-14-4659-40-001.png"),
            Err(DatasetError::MalformedName { .. })
        ));
        assert!(matches!(
            parse_filename("SOB_B_TA-14-4659-50-001.png"),
            Err(DatasetError::MalformedName { .. })
        ));
    }

    #[test]
    fn manifest_orders_by_path_and_counts() {
        let samples = vec![
            meta("SOB_M_DC-14-2523-400-012.png"),
            meta("SOB_B_TA-14-4659-40-001.png"),
            meta("SOB_B_TA-14-4659-100-002.png"),
        ];
        let m = Manifest::from_samples(samples).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.patient_count(), 2);
        assert!(m.samples().windows(2).all(|w| w[0].path <= w[1].path));
        assert_eq!(m.count_by(Some(40), None), 1);
        assert_eq!(m.count_by(None, Some(ClassLabel::Malignant)), 1);
        assert_eq!(m.count_by(None, None), 3);
    }

    #[test]
    fn conflicting_patient_class_is_rejected() {
        // Same patient triple with both class letters.
        let samples = vec![meta("SOB_B_TA-14-4659-40-001.png"), {
            let mut s = meta("SOB_M_DC-14-4659-40-002.png");
            s.patient_id = "SOB-14-4659".into();
            s
        }];
        assert!(matches!(
            Manifest::from_samples(samples),
            Err(DatasetError::ConflictingPatientClass { .. })
        ));
    }

    #[test]
    fn build_walks_directories_and_validates_class_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let benign_dir = dir.path().join("benign").join("40X");
        std::fs::create_dir_all(&benign_dir).unwrap();
        let img = image::RgbImage::from_pixel(4, 4, image::Rgb([10, 200, 30]));
        img.save(benign_dir.join("SOB_B_TA-14-4659-40-001.png"))
            .unwrap();
        let m = Manifest::build(dir.path()).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.patient_count(), 1);

        // A malignant file under the benign directory must fail the build.
        img.save(benign_dir.join("SOB_M_DC-14-2523-40-001.png"))
            .unwrap();
        assert!(matches!(
            Manifest::build(dir.path()),
            Err(DatasetError::ClassMismatch { .. })
        ));
    }

    #[test]
    fn build_on_empty_directory_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Manifest::build(dir.path()),
            Err(DatasetError::EmptyDataset { .. })
        ));
    }

    #[test]
    fn build_is_idempotent_and_order_stable() {
        let dir = tempfile::tempdir().unwrap();
        let img = image::RgbImage::from_pixel(4, 4, image::Rgb([1, 2, 3]));
        for name in [
            "SOB_M_DC-14-2523-400-012.png",
            "SOB_B_TA-14-4659-40-001.png",
            "SOB_B_TA-14-4659-40-002.png",
        ] {
            img.save(dir.path().join(name)).unwrap();
        }
        let a = Manifest::build(dir.path()).unwrap();
        let b = Manifest::build(dir.path()).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert!(a.samples().windows(2).all(|w| w[0].path < w[1].path));
    }

    #[test]
    fn loader_preserves_native_dimensions() {
        // BreakHis patches are 700x460; the loader must not resize.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("SOB_B_TA-14-4659-40-001.png");
        image::RgbImage::from_pixel(700, 460, image::Rgb([9, 120, 33]))
            .save(&path)
            .unwrap();
        let g = load_green_channel(&path).unwrap();
        assert_eq!((g.width(), g.height()), (700, 460));
        assert!((g.as_grid().get(0, 0) - 120.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_preserves_manifest() {
        let m = Manifest::from_samples(vec![
            meta("SOB_B_TA-14-4659-40-001.png"),
            meta("SOB_M_DC-14-2523-400-012.png"),
        ])
        .unwrap();
        let bytes = m.to_csv_bytes().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("path,patient_id,class,subtype,magnification,sequence\n"));
        assert!(!text.contains('\r'));
        let back = Manifest::read_csv(&bytes[..]).unwrap();
        assert_eq!(back.samples(), m.samples());
    }

    #[test]
    fn green_channel_extraction() {
        let mut img = image::RgbImage::from_pixel(3, 2, image::Rgb([0, 0, 0]));
        img.put_pixel(1, 1, image::Rgb([10, 255, 3]));
        let g =
            gray_from_dynamic(&image::DynamicImage::ImageRgb8(img), GrayscaleMode::Green).unwrap();
        assert_eq!(g.as_grid().get(1, 1), 1.0);
        assert_eq!(g.as_grid().get(0, 0), 0.0);
    }

    #[test]
    fn luma_mode_mixes_channels() {
        let img = image::RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 0]));
        let g =
            gray_from_dynamic(&image::DynamicImage::ImageRgb8(img), GrayscaleMode::Luma).unwrap();
        assert!((g.as_grid().get(0, 0) - 0.299).abs() < 1e-9);
    }

    #[test]
    fn grayscale_passthrough() {
        let img = image::GrayImage::from_pixel(2, 2, image::Luma([128]));
        let g =
            gray_from_dynamic(&image::DynamicImage::ImageLuma8(img), GrayscaleMode::Green).unwrap();
        assert!((g.as_grid().get(0, 0) - 128.0 / 255.0).abs() < 1e-12);
    }

    fn many_patients(n: usize) -> Manifest {
        let samples: Vec<SampleMeta> = (0..n)
            .map(|i| meta(&format!("SOB_B_TA-14-{:04}-40-001.png", i + 1)))
            .collect();
        Manifest::from_samples(samples).unwrap()
    }

    #[test]
    fn split_sizes_follow_round_half_up() {
        let m = many_patients(82);
        let plan = patient_split(&m, 0.7, 42).unwrap();
        assert_eq!(plan.train_patients.len(), 57);
        assert_eq!(plan.test_patients.len(), 25);
        assert!(plan.train_patients.is_disjoint(&plan.test_patients));
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let m = many_patients(10);
        let a = patient_split(&m, 0.5, 7).unwrap();
        let b = patient_split(&m, 0.5, 7).unwrap();
        assert_eq!(a, b);
        let c = patient_split(&m, 0.5, 8).unwrap();
        assert_ne!(a.train_patients, c.train_patients);
    }

    #[test]
    fn two_patient_split_is_one_and_one() {
        let m = many_patients(2);
        let plan = patient_split(&m, 0.5, 0).unwrap();
        assert_eq!(plan.train_patients.len(), 1);
        assert_eq!(plan.test_patients.len(), 1);
    }

    #[test]
    fn degenerate_splits_error() {
        let m = many_patients(3);
        assert!(matches!(
            patient_split(&m, 0.01, 0),
            Err(DatasetError::TooFewPatients { .. })
        ));
        assert!(matches!(
            patient_split(&m, 0.99, 0),
            Err(DatasetError::TooFewPatients { .. })
        ));
    }

    #[test]
    fn folds_are_balanced_and_exhaustive() {
        let m = many_patients(82);
        let folds = patient_folds(&m, 3, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![27, 27, 28]);
        let folds10 = patient_folds(&m, 10, 1).unwrap();
        let mut sizes10: Vec<usize> = folds10.iter().map(|f| f.len()).collect();
        sizes10.sort_unstable();
        assert_eq!(sizes10, vec![8, 8, 8, 8, 8, 8, 8, 8, 9, 9]);
        let all: BTreeSet<String> = folds10.iter().flatten().cloned().collect();
        assert_eq!(all.len(), 82);
        for i in 0..folds10.len() {
            for j in i + 1..folds10.len() {
                assert!(folds10[i].is_disjoint(&folds10[j]));
            }
        }
    }

    #[test]
    fn out_of_range_k_errors() {
        let m = many_patients(82);
        assert!(matches!(
            patient_folds(&m, 83, 0),
            Err(DatasetError::BadK { .. })
        ));
        assert!(matches!(
            patient_folds(&m, 1, 0),
            Err(DatasetError::BadK { .. })
        ));
    }
}
