use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("weight {value} at index ({row}, {col}) exceeds the programmable range [-1, 1]")]
    WeightOutOfRange { row: usize, col: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse {what} from {input:?}")]
    Parse { what: &'static str, input: String },

    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        height: usize,
        width: usize,
        window: usize,
    },

    #[error("training diverged at epoch {epoch}: rmse {rmse} exceeds 2x initial rmse {initial}")]
    Divergence { epoch: usize, rmse: f64, initial: f64 },

    #[error("layer of {rows}x{cols} needs {tiles} tiles but the fabric has {available}")]
    FabricExceeded {
        rows: usize,
        cols: usize,
        tiles: usize,
        available: usize,
    },

    #[error("malformed container: {0}")]
    Container(String),
}

pub type Result<T> = core::result::Result<T, Error>;
