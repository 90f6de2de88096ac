use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration is not admissible: site {site} holds {occupancy} > {cap} particles")]
    Inadmissible { site: usize, occupancy: u32, cap: u32 },

    #[error("{what}: size {size} exceeds cap {cap}")]
    CapExceeded { what: &'static str, size: u128, cap: u128 },

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("occupancy ceiling {ceiling} exceeded at site {site}")]
    OccupancyCeiling { site: usize, ceiling: u32 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
}

pub type Result<T> = std::result::Result<T, Error>;
