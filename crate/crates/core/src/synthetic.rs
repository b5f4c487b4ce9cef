//! Procedural two-class texture fixture.
//!
//! Generates a small patient-structured dataset with no files on disk: the
//! benign family is dominated by a low spatial frequency, the malignant
//! family by a high one, so the decomposition separates them by design.
//! Every image is a pure function of (seed, class, patient, sequence) and is
//! regenerated on demand.

use crate::dataset::{ClassLabel, GrayImage, Manifest, SampleMeta};
use crate::grid::{splitmix64, Grid2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub patients_per_class: usize,
    pub images_per_patient: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            patients_per_class: 10,
            images_per_patient: 5,
            width: 128,
            height: 128,
            seed: 7,
        }
    }
}

pub const SYNTHETIC_SCHEME: &str = "synthetic://";

fn image_seed(spec: &SyntheticSpec, class: ClassLabel, patient: usize, sequence: u32) -> u64 {
    let class_bit = match class {
        ClassLabel::Benign => 1u64,
        ClassLabel::Malignant => 2u64,
    };
    splitmix64(
        spec.seed ^ splitmix64(class_bit ^ splitmix64((patient as u64) << 20 ^ sequence as u64)),
    )
}

fn patient_code(class: ClassLabel, patient: usize) -> String {
    let letter = match class {
        ClassLabel::Benign => 'B',
        ClassLabel::Malignant => 'M',
    };
    format!("SYN-{letter}-{patient:03}")
}

/// Manifest over the procedural dataset; paths use the `synthetic://` scheme.
pub fn synthetic_manifest(spec: &SyntheticSpec) -> Manifest {
    let mut samples = Vec::new();
    for class in [ClassLabel::Benign, ClassLabel::Malignant] {
        for patient in 0..spec.patients_per_class {
            for img in 0..spec.images_per_patient {
                let sequence = img as u32 + 1;
                let patient_id = patient_code(class, patient);
                samples.push(SampleMeta {
                    path: format!("{SYNTHETIC_SCHEME}{class}/{patient_id}/img-{sequence:03}.png")
                        .into(),
                    patient_id,
                    class_label: class,
                    subtype: "SYN".into(),
                    magnification: 40,
                    sequence,
                });
            }
        }
    }
    Manifest::from_samples(samples).expect("synthetic manifest is consistent")
}

pub fn is_synthetic_path(path: &Path) -> bool {
    path.to_string_lossy().starts_with(SYNTHETIC_SCHEME)
}

/// Regenerates the image for one synthetic sample.
pub fn synthetic_image(spec: &SyntheticSpec, meta: &SampleMeta) -> GrayImage {
    let patient: usize = meta
        .patient_id
        .rsplit('-')
        .next()
        .and_then(|s| s.parse().ok())
        .expect("synthetic patient id carries an index");
    render(spec, meta.class_label, patient, meta.sequence)
}

fn render(spec: &SyntheticSpec, class: ClassLabel, patient: usize, sequence: u32) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(spec, class, patient, sequence));
    // Patient-level base frequency (cycles across the width), image-level
    // orientation/phase jitter.
    let patient_jitter = splitmix64(spec.seed ^ (patient as u64) ^ (class as u64 + 1) << 8) % 1000;
    let base = match class {
        ClassLabel::Benign => 4.0 + 2.0 * patient_jitter as f64 / 1000.0,
        ClassLabel::Malignant => 22.0 + 6.0 * patient_jitter as f64 / 1000.0,
    };
    let freq = base * (1.0 + 0.06 * (rng.random_range(0.0..1.0) - 0.5));
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let phase: f64 = rng.random_range(0.0..TAU);
    let theta2: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let phase2: f64 = rng.random_range(0.0..TAU);
    let (w, h) = (spec.width, spec.height);
    let (ct, st) = (theta.cos(), theta.sin());
    let (ct2, st2) = (theta2.cos(), theta2.sin());
    let mut noise = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        noise.push(rng.random_range(-1.0..1.0));
    }
    let grid = Grid2::from_fn(w, h, |x, y| {
        let u = x as f64 / w as f64;
        let v = y as f64 / h as f64;
        let tone = 0.22 * (TAU * freq * (u * ct + v * st) + phase).sin();
        let harmonic = 0.08 * (TAU * 2.0 * freq * (u * ct2 + v * st2) + phase2).sin();
        let n = 0.06 * noise[y * w + x];
        (0.5 + tone + harmonic + n).clamp(0.0, 1.0)
    });
    GrayImage::new(grid).expect("synthetic pixels stay in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_has_expected_structure() {
        let spec = SyntheticSpec {
            patients_per_class: 3,
            images_per_patient: 2,
            ..Default::default()
        };
        let m = synthetic_manifest(&spec);
        assert_eq!(m.len(), 12);
        assert_eq!(m.patient_count(), 6);
        assert_eq!(m.count_by(None, Some(ClassLabel::Benign)), 6);
        assert!(is_synthetic_path(&m.samples()[0].path));
    }

    #[test]
    fn images_are_deterministic_and_in_range() {
        let spec = SyntheticSpec {
            width: 32,
            height: 32,
            ..Default::default()
        };
        let m = synthetic_manifest(&spec);
        let s = &m.samples()[0];
        let a = synthetic_image(&spec, s);
        let b = synthetic_image(&spec, s);
        assert_eq!(a.as_grid().values(), b.as_grid().values());
        assert!(a.as_grid().values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn classes_differ_in_dominant_frequency() {
        use crate::spectral::forward_dft2;
        let spec = SyntheticSpec {
            width: 64,
            height: 64,
            ..Default::default()
        };
        let m = synthetic_manifest(&spec);
        let benign = m
            .samples()
            .iter()
            .find(|s| s.class_label == ClassLabel::Benign)
            .unwrap();
        let malignant = m
            .samples()
            .iter()
            .find(|s| s.class_label == ClassLabel::Malignant)
            .unwrap();
        let dominant = |meta: &SampleMeta| {
            let img = synthetic_image(&spec, meta);
            let spec2 = forward_dft2(img.as_grid());
            let mut best = (0.0, 0.0);
            for ky in 0..64usize {
                for kx in 0..64usize {
                    if kx == 0 && ky == 0 {
                        continue;
                    }
                    let mag = spec2.at(kx, ky).norm();
                    let fx = crate::spectral::signed_freq(kx, 64);
                    let fy = crate::spectral::signed_freq(ky, 64);
                    let r = fx.hypot(fy);
                    if mag > best.0 {
                        best = (mag, r);
                    }
                }
            }
            best.1
        };
        let fb = dominant(benign);
        let fm = dominant(malignant);
        assert!(fb < 0.12, "benign dominant frequency {fb}");
        assert!(fm > 0.25, "malignant dominant frequency {fm}");
    }
}
