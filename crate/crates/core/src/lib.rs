//! Optimal reinsurance layer analytics for compound-Poisson books:
//! severity calibration and simulation, market-factor premium regimes,
//! layer-contract evaluation under a risk-over-surplus criterion, and
//! large-portfolio attachment approximations with degradation benchmarks.

pub mod contracts;
pub mod error;
pub mod numeric;
pub mod optimizer;
pub mod pricing;
pub mod severity;

pub use error::{Error, Result};
