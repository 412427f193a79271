//! Crate-wide error type.
//!
//! Every variant maps to the module it originates from and a stable error
//! code; the CLI prints these as machine-readable JSON on stderr and derives
//! the process exit code from [`Error::exit_code`].

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // linalg
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({i},{j}): {upper} != {lower}")]
    NotSymmetric { i: usize, j: usize, upper: f64, lower: f64 },
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("Jacobi sweeps did not converge after {sweeps} sweeps, off-diagonal residual {residual:e}")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("invalid tolerance {tol}")]
    InvalidTolerance { tol: f64 },

    // shared shape failures, tagged with the reporting module
    #[error("{module}: dimension mismatch: {detail}")]
    DimensionMismatch { module: &'static str, detail: String },

    // graph
    #[error("graph needs at least 2 vertices, got {n}")]
    TooFewVertices { n: usize },
    #[error("negative weight {value} at ({i},{j}); rectify correlations before building a graph")]
    NegativeWeight { i: usize, j: usize, value: f64 },
    #[error("vertex {vertex} is isolated (zero degree)")]
    IsolatedVertex { vertex: usize },
    #[error("k = {k} out of range for {n} vertices (need 1 <= k < n)")]
    KOutOfRange { k: usize, n: usize },
    #[error("cannot parse graph file {path}: {detail}")]
    BadGraphFile { path: PathBuf, detail: String },

    // spectral
    #[error("eigenvalue {value} at index {index} outside the normalized-Laplacian range [0, 2]")]
    SpectrumOutOfRange { index: usize, value: f64 },
    #[error("smallest eigenvalue is {value}, not 0; input is not a normalized Laplacian")]
    MissingZeroEigenvalue { value: f64 },
    #[error("eigenvectors deviate from orthonormality by {deviation:e}")]
    NotOrthonormal { deviation: f64 },
    #[error("eigenvalues are not sorted ascending at index {index}")]
    ValuesNotSorted { index: usize },
    #[error("band offset {offset} + bandwidth {bandwidth} exceeds n = {n}")]
    BandOutOfRange { offset: usize, bandwidth: usize, n: usize },
    #[error("bandwidth must be at least 1")]
    EmptyBand,
    #[error("cannot read basis file {path}: {detail}")]
    BadBasisFile { path: PathBuf, detail: String },

    // model
    #[error("kept frequency set is invalid: {detail}")]
    BadKeptSet { detail: String },
    #[error("batch-norm running statistics are uninitialized; run at least one training step before eval")]
    BnUninitialized,
    #[error("operation requires an untruncated model (kept = all {n} frequencies, model keeps {k})")]
    TruncatedModel { n: usize, k: usize },
    #[error("model was built for basis {expected:#x}, got basis {got:#x}")]
    BasisMismatch { expected: u64, got: u64 },
    #[error("cannot read checkpoint {path}: {detail}")]
    BadCheckpoint { path: PathBuf, detail: String },

    // train
    #[error("invalid training configuration: {detail}")]
    InvalidConfig { detail: String },
    #[error("split is empty: {which}")]
    EmptySplit { which: &'static str },
    #[error("class {class} has {count} samples, fewer than the {need} required for splitting")]
    ClassTooSmall { class: u32, count: usize, need: usize },
    #[error("non-finite loss at epoch {epoch}; training diverged")]
    NonFinite { epoch: usize },

    // prune
    #[error("invalid SWD schedule: {detail}")]
    InvalidSchedule { detail: String },
    #[error("SWD step {step} out of range 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("IoU undefined: both kept sets are empty")]
    IouBothEmpty,
    #[error("kept set references frequency {index} but n = {n}")]
    InconsistentN { index: usize, n: usize },

    // data
    #[error("invalid dataset: {detail}")]
    InvalidDataset { detail: String },
    #[error("label out of range at sample {index}: {label} >= {n_classes}")]
    LabelOutOfRange { index: usize, label: u32, n_classes: u32 },
    #[error("payload size mismatch for {path}: expected {expected} bytes, got {got}")]
    PayloadSizeMismatch { path: PathBuf, expected: usize, got: usize },
    #[error("checksum mismatch for {path}")]
    ChecksumMismatch { path: PathBuf },
    #[error("missing file {path}")]
    MissingFile { path: PathBuf },
    #[error("refusing to overwrite {path} without --overwrite")]
    OverwriteRefused { path: PathBuf },

    // cli
    #[error("usage error: {detail}")]
    Usage { detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Module the error originates from, for machine-readable reports.
    pub fn module(&self) -> &'static str {
        use Error::*;
        match self {
            NotSquare { .. } | NotSymmetric { .. } | EmptyMatrix | NoConvergence { .. }
            | InvalidTolerance { .. } => "linalg",
            DimensionMismatch { module, .. } => module,
            TooFewVertices { .. } | NegativeWeight { .. } | IsolatedVertex { .. }
            | KOutOfRange { .. } | BadGraphFile { .. } => "graph",
            SpectrumOutOfRange { .. } | MissingZeroEigenvalue { .. } | NotOrthonormal { .. }
            | ValuesNotSorted { .. } | BandOutOfRange { .. } | EmptyBand
            | BadBasisFile { .. } => "spectral",
            BadKeptSet { .. } | BnUninitialized | TruncatedModel { .. } | BasisMismatch { .. }
            | BadCheckpoint { .. } => "model",
            InvalidConfig { .. } | EmptySplit { .. } | ClassTooSmall { .. }
            | NonFinite { .. } => "train",
            InvalidSchedule { .. } | StepOutOfRange { .. } | IouBothEmpty
            | InconsistentN { .. } => "prune",
            InvalidDataset { .. } | LabelOutOfRange { .. } | PayloadSizeMismatch { .. }
            | ChecksumMismatch { .. } | MissingFile { .. } | OverwriteRefused { .. } => "data",
            Usage { .. } | Io(_) | Json(_) => "cli",
        }
    }

    /// Stable error code, part of the CLI contract.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            NotSquare { .. } => "not_square",
            NotSymmetric { .. } => "not_symmetric",
            EmptyMatrix => "empty_matrix",
            NoConvergence { .. } => "jacobi_no_convergence",
            InvalidTolerance { .. } => "invalid_tolerance",
            DimensionMismatch { .. } => "dimension_mismatch",
            TooFewVertices { .. } => "too_few_vertices",
            NegativeWeight { .. } => "negative_weight",
            IsolatedVertex { .. } => "isolated_vertex",
            KOutOfRange { .. } => "k_out_of_range",
            BadGraphFile { .. } => "bad_graph_file",
            SpectrumOutOfRange { .. } => "spectrum_out_of_range",
            MissingZeroEigenvalue { .. } => "missing_zero_eigenvalue",
            NotOrthonormal { .. } => "not_orthonormal",
            ValuesNotSorted { .. } => "values_not_sorted",
            BandOutOfRange { .. } => "band_out_of_range",
            EmptyBand => "empty_band",
            BadBasisFile { .. } => "bad_basis_file",
            BadKeptSet { .. } => "bad_kept_set",
            BnUninitialized => "bn_uninitialized",
            TruncatedModel { .. } => "truncated_model",
            BasisMismatch { .. } => "basis_mismatch",
            BadCheckpoint { .. } => "bad_checkpoint",
            InvalidConfig { .. } => "invalid_config",
            EmptySplit { .. } => "empty_split",
            ClassTooSmall { .. } => "class_too_small",
            NonFinite { .. } => "non_finite_loss",
            InvalidSchedule { .. } => "invalid_schedule",
            StepOutOfRange { .. } => "step_out_of_range",
            IouBothEmpty => "iou_both_empty",
            InconsistentN { .. } => "inconsistent_n",
            InvalidDataset { .. } => "invalid_dataset",
            LabelOutOfRange { .. } => "label_out_of_range",
            PayloadSizeMismatch { .. } => "payload_size_mismatch",
            ChecksumMismatch { .. } => "checksum_mismatch",
            MissingFile { .. } => "missing_file",
            OverwriteRefused { .. } => "overwrite_refused",
            Usage { .. } => "usage",
            Io(_) => "io",
            Json(_) => "json",
        }
    }

    /// Process exit code: 1 for numerical failures, 2 for usage/IO errors.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            NoConvergence { .. }
            | SpectrumOutOfRange { .. }
            | MissingZeroEigenvalue { .. }
            | NotOrthonormal { .. }
            | NonFinite { .. } => 1,
            _ => 2,
        }
    }
}
