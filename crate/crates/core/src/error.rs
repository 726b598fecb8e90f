use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("site {site} is outside {domain}")]
    SiteOutOfDomain { site: i64, domain: &'static str },

    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfUnitRange { index: usize, value: f64 },

    #[error("repeated site {0} in site tuple")]
    RepeatedSite(i64),

    #[error("state space with {sites} sites is too large for exact enumeration (limit {limit})")]
    StateSpaceTooLarge { sites: usize, limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
