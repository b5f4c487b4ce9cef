//! Texture classification of microscopy images by iterative two-dimensional
//! variational mode decomposition.
//!
//! The pipeline decomposes the green channel of a stained-tissue image into
//! ten band-limited modes (five repetitions of a two-mode 2D-VMD, each
//! repetition splitting the previous high-frequency mode), extracts Zernike
//! moment magnitudes, non-Shannon entropies and a box-counting fractal
//! dimension from every mode, ranks the features with ReliefF, filters them
//! by statistical significance, and classifies with a least-squares SVM under
//! an RBF kernel. Evaluation is patient-wise: holdout splits and k-fold
//! cross-validation never place images of one patient on both sides.

// Parameter validation uses `!(x > 0.0)` on purpose: it rejects NaN, which
// `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fsutil;
pub mod grid;
pub mod selection;
pub mod spectral;
pub mod synthetic;
pub mod vmd;

pub use error::Error;
