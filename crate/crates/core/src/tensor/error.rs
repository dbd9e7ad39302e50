use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: dimensions must be non-empty and positive")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("conv2d: kernel {kernel:?} larger than input {input:?}")]
    KernelTooLarge { kernel: Vec<usize>, input: Vec<usize> },
    #[error("maxpool2d: pool size {pool:?} invalid for input {input:?}")]
    InvalidPool { pool: (usize, usize), input: Vec<usize> },
    #[error("attention: query row {row} has every key position masked")]
    FullyMaskedRow { row: usize },
    #[error("backward() requires a single-element tensor, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(f64),
    #[error("target id {id} out of range for vocabulary of size {vocab}")]
    TargetOutOfRange { id: usize, vocab: usize },
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("optimizer state sized for {expected} values, parameters hold {actual}")]
    OptimizerSize { expected: usize, actual: usize },
    #[error("{0}")]
    Invalid(String),
}
