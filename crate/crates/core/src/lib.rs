//! Symmetric simple exclusion on `[-N, N]` with current reservoirs.
//!
//! The crate covers the microscopic process (exact Monte Carlo and an exact
//! master-equation solver for tiny lattices), the discretized mean-field
//! evolution, the macroscopic heat equation with self-consistent boundary
//! traces, and the diagnostics that connect them.

pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod kernels;
pub mod kmc;
pub mod macroscopic;
pub mod model;
pub mod oracle;
pub mod profile;
pub mod quad;
pub mod uniformize;

pub use error::{Error, Result};
pub use model::{Configuration, DensityProfile, ModelParams, SiteValues};
pub use profile::InitialProfile;
