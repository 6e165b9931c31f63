//! Two-player linear-quadratic stochastic differential game under partial
//! information.
//!
//! Each player knows its own coupling parameter and holds a truncated
//! Gaussian belief about the opponent's. The crate provides:
//!
//! - the full-information Nash equilibrium via the coupled Riccati system
//!   ([`riccati`]),
//! - belief-averaged implementable controls and parameter sensitivities
//!   ([`controls`]),
//! - true and proxy Fisher information of the opponent's parameters and the
//!   marginal asymptotic variance ([`fisher`]),
//! - the alignment-faking saddle-point controller ([`afcontrol`]),
//! - seeded Euler–Maruyama simulation ([`simulate`]) and the residual
//!   regression detector ([`detect`]),
//! - experiment drivers and the validation suite behind the `afgame` CLI
//!   ([`experiments`], [`validate`]).

pub mod afcontrol;
pub mod config;
pub mod controls;
pub mod detect;
pub mod error;
pub mod experiments;
pub mod fisher;
pub mod grid;
pub mod model;
mod ode;
pub mod report;
pub mod riccati;
pub mod scenario;
pub mod simulate;
pub mod validate;

pub use error::{GameError, Result};
pub use grid::{Path, TimeGrid};
pub use model::{GameParams, QuadratureRule, TruncGaussPrior};
