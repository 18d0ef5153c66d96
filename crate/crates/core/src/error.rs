use thiserror::Error;

/// Errors shared by all kernel, builder and analysis entry points.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("channel range {lo}..{hi} invalid for {channels} channels")]
    ChannelRange {
        lo: usize,
        hi: usize,
        channels: usize,
    },

    #[error("{what} ({value}) is not divisible by groups ({groups})")]
    Divisibility {
        what: &'static str,
        value: usize,
        groups: usize,
    },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("degenerate output: {0}")]
    DegenerateOutput(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("benchmark contract violated: {0}")]
    BenchContract(String),
}

pub type Result<T> = std::result::Result<T, Error>;
