use alloc::string::String;

/// Errors raised by the loss and metric routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("embedding stacks are not aligned: {0}")]
    Alignment(String),
    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },
    #[error("all adaptive weights are zero in layer {layer}")]
    DegenerateWeights { layer: usize },
    #[error("out of range: {0}")]
    Range(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("requested {requested} items but only {available} are available")]
    Capacity { requested: usize, available: usize },
    #[error("non-finite value in {0}")]
    Numeric(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
