use thiserror::Error;

/// Error type for the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty subset")]
    EmptySubset,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("index {index} out of bounds for size {size}")]
    IndexOutOfBounds { index: usize, size: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "matrix not symmetric: |M[{i}][{j}] - M[{j}][{i}]| = {asym:e} exceeds tolerance {tol:e}"
    )]
    NotSymmetric {
        i: usize,
        j: usize,
        asym: f64,
        tol: f64,
    },

    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },

    #[error("precomputed kernel is {kernel_n}x{kernel_n} but the dataset has {data_n} points")]
    KernelSizeMismatch { kernel_n: usize, data_n: usize },

    #[error("dense heat kernel limited to n <= {max}, got n = {n}")]
    HeatKernelTooLarge { n: usize, max: usize },

    #[error("label column `{0}` not found; available columns: {1}")]
    LabelColumnMissing(String, String),

    #[error("non-numeric feature cell `{value}` at row {row}, column `{column}`")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("csv file has no feature columns")]
    NoFeatureColumns,

    #[error("bad KKM1 file: {0}")]
    BadKernelFile(String),

    #[error(
        "instance too large for exhaustive search: n = {n} (max {max_n}), k = {k} (max {max_k})"
    )]
    ExhaustiveTooLarge {
        n: usize,
        max_n: usize,
        k: usize,
        max_k: usize,
    },

    #[error("label vectors have different lengths: {0} vs {1}")]
    LabelLengthMismatch(usize, usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}
