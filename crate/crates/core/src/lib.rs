//! Sharp p-spectral gaps of one-dimensional MCP(K, N) model spaces.
//!
//! The eigenvalue of the weighted p-Laplacian with Neumann conditions is
//! computed by shooting on the Prüfer phase equation and cross-checked by a
//! discretized Rayleigh-quotient minimizer that shares no code with it.

pub mod cli;
pub mod density;
pub mod error;
pub mod gap;
pub mod geometry;
pub mod ode;
pub mod oracle;
pub mod pruefer;
pub mod ptrig;
pub(crate) mod quad;

pub use error::{Error, Result};
pub use geometry::{McpSpace, Params, Tolerances};
pub use ptrig::{PExponent, PTrig};
