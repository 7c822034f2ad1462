use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: left has {left} entries, right has {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("non-finite value at index {index} of {what}")]
    NonFinite { what: &'static str, index: usize },

    #[error("non-finite activation in layer {layer}")]
    NonFiniteLayer { layer: usize },

    #[error("parameter vector has {actual} entries, architecture expects {expected}")]
    WrongParamCount { expected: usize, actual: usize },

    #[error("invalid batch: {0}")]
    InvalidBatch(&'static str),

    #[error("invalid optimizer spec: {0}")]
    InvalidOptimizer(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),

    #[error("batch source exhausted: a PROFIT step needs {required} batches, got {available}")]
    BatchesExhausted { required: usize, available: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),
}
