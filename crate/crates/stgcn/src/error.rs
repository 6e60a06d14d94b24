use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("unknown layout `{0}` (expected one of: openpose18, ntu25)")]
    UnknownLayout(String),

    #[error("invalid layout `{name}`: {reason}")]
    InvalidLayout { name: String, reason: String },

    #[error("joint {joint} out of range for layout with {num_joints} joints")]
    JointOutOfRange { joint: usize, num_joints: usize },

    #[error("sequence uses layout `{sequence}` but `{expected}` was requested")]
    LayoutMismatch { sequence: String, expected: String },

    #[error("empty reference set: at least one training sequence is required")]
    EmptyReferenceSet,

    #[error("label map inconsistent with stack: {0}")]
    Consistency(String),

    #[error("strategy `{0}` requires a distance profile but none was given")]
    MissingProfile(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty dataset: nothing to train on")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("top_n {top_n} out of range for {num_classes} classes")]
    TopNOutOfRange { top_n: usize, num_classes: usize },

    #[error("keypoint record has {found} values, expected {expected}")]
    Arity { found: usize, expected: usize },

    #[error("parse error in {source_name}: {reason}")]
    Parse { source_name: String, reason: String },

    #[error("no frames found in {0}")]
    NoFrames(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("bad file format in {source_name}: {reason}")]
    Format { source_name: String, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
