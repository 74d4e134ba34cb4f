//! Microwave-induced tunable coupling between a driven multilevel transmon
//! and a resonator mode.
//!
//! The effective f0 ↔ g1 coupling `g̃` is computed three ways (first-order
//! perturbation theory, a resolvent path sum for the ac Stark shift, and exact
//! diagonalization with parallel transport of the resonant pair). On top of
//! those sit shaped-pulse swap dynamics and transmission-spectroscopy fits.
//!
//! Units: angular frequencies in rad/ns, times in ns (see [`units`]).

pub mod config;
pub mod dynamics;
pub mod error;
pub mod interp;
pub mod lsq;
pub mod model;
pub mod ode;
pub mod resolvent;
pub mod spectral;
pub mod spectroscopy;
pub mod stark;
pub mod units;

pub use error::{Error, Result};
pub use model::{BasisLabel, DriveParams, Level, OperatorMatrix, SystemParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
