use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Wrong table shapes, inconsistent alphabets, or a shorthand that cannot
    /// apply to the kernel it was attached to. Never repaired.
    #[error("structural error in {kernel}: {detail}")]
    Structure { kernel: String, detail: String },

    /// The spec failed soft validation and the operation refuses to proceed.
    #[error("invalid system: {0}")]
    InvalidSpec(String),

    /// The dense trajectory table would exceed the enumeration guard.
    #[error(
        "enumeration guard exceeded: {required} trajectory entries required, guard allows {guard}"
    )]
    GuardExceeded { required: u128, guard: usize },

    #[error("selector is empty")]
    EmptySelector,

    #[error("selectors overlap on coordinate {0}")]
    OverlappingSelectors(String),

    #[error("coordinate {0} not present in distribution")]
    UnknownCoordinate(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    /// An information quantity came out below the -1e-9 bit clamp threshold,
    /// which indicates a logic error rather than floating-point noise.
    #[error("internal consistency failure: {context} evaluated to {value_bits} bits")]
    NegativeInformation { value_bits: f64, context: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample batch is empty")]
    EmptyBatch,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
