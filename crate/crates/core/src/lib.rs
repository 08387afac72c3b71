//! Numerical toolkit for subordinator tail probabilities and two-sided
//! estimates of fundamental solutions to time-fractional equations.

pub mod bernstein;
pub mod compare;
pub mod error;
pub mod estimates;
pub mod fundsol;
pub mod heat;
pub mod kernel;
pub mod quad;
pub mod sim;
pub mod tail;

pub use error::{Error, Result};
pub use kernel::KernelSpec;
