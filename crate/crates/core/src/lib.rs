//! Black-box identification of hysteretic dynamics with polynomial nonlinear
//! state-space (PNLSS) models.
//!
//! The crate covers the whole chain: Bouc-Wen data synthesis, nonparametric
//! distortion analysis, best linear approximation and subspace fitting,
//! PNLSS estimation, and validation on multisine and sine-sweep data.

pub mod boucwen;
pub mod distortion;
pub mod error;
pub mod io;
pub mod linear_id;
pub mod lm;
pub mod pnlss;
pub mod signals;
pub mod validation;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
