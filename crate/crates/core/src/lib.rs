//! Graph-spectral neural networks with learned frequency selection.
//!
//! The crate builds the full pipeline from a weighted graph to a trained
//! classifier over signals on that graph:
//!
//! - [`linalg`]: dense symmetric eigendecomposition (cyclic Jacobi),
//! - [`graph`]: graph ingestion, kNN binarization, normalized Laplacian,
//! - [`spectral`]: graph Fourier transform, spectral convolution, band masks,
//! - [`model`]: GSPConv layers with hand-derived backward passes, spectral
//!   ResNet and spectral MLP architectures,
//! - [`train`]: SGD training loop with standardization, mixup and
//!   best-validation model selection,
//! - [`prune`]: selective weight decay over graph frequencies, truncation and
//!   LR-rewinding retrain, band scans and reproducibility reports,
//! - [`data`]: dataset container, on-disk formats, planted-band synthesizer,
//! - [`cli`]: the `gspnet` experiment runner.

pub mod cli;
pub mod data;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod prune;
pub mod scalar;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
