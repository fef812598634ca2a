//! Rate allocation for cellular downlink resources shared by user equipment
//! (UEs) running a mix of real-time and delay-tolerant applications.
//!
//! The crate is organised bottom-up:
//!
//! - [`utility`]: sigmoidal and logarithmic application utilities, their log
//!   values, slopes and slope inverses.
//! - [`allocator`]: direct solvers for the one-stage centralized problem, the
//!   per-UE best response and the within-UE split, plus a grid oracle.
//! - [`protocol`]: a deterministic simulation of the bid / shadow-price
//!   exchange between the base station (eNB) and its UEs, with and without
//!   fluctuation decay.
//! - [`scenario`] and [`sweep`]: the scenario text format, budget sweeps and
//!   CSV output used by the `hybrid-ra` command-line tool.

pub mod allocator;
pub mod error;
mod numeric;
pub mod protocol;
pub mod scenario;
pub mod sweep;
pub mod utility;

pub use error::{Error, ParseError, Result};
pub use numeric::{RATE_CAP, RATE_FLOOR};
pub use utility::{LogarithmicUtility, SigmoidalUtility, Utility};
