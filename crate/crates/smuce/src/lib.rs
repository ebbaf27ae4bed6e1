//! Multiscale change-point inference for one-parameter exponential-family
//! regression.
//!
//! The estimator minimizes the number of change-points subject to a
//! simultaneous multiscale side constraint on local likelihood-ratio
//! statistics, then maximizes the likelihood among the minimizers. The
//! solution set of the constraint doubles as a confidence set: it yields
//! intervals for the change-point locations and a simultaneous band for the
//! regression function.
//!
//! Module map:
//! - [`expfam`]: exponential-family calculus (cumulant, divergences,
//!   feasibility intervals for local statistics).
//! - [`multiscale`]: step-function candidates, scale penalties, and the
//!   multiscale statistic itself.
//! - [`nulldist`]: Monte Carlo simulation of the null distribution of the
//!   statistic, with a plain-text cache format.
//! - [`segdp`]: the pruned segmentation dynamic program (jump counting and
//!   constrained maximum-likelihood fitting), including quantile regression.
//! - [`confidence`]: change-point confidence intervals and simultaneous
//!   confidence bands derived from the fitted dynamic-program state.
//! - [`tuning`]: theory-driven threshold selection and error bounds.
//! - [`io`]: series input, fit documents, and band export.
//! - [`experiments`]: named simulation scenarios and their summary reports.

pub mod confidence;
pub mod expfam;
pub mod experiments;
pub mod io;
pub mod multiscale;
pub mod nulldist;
mod sampling;
pub mod segdp;
pub mod tuning;

pub use expfam::{ExpFamily, LocalStatInput, ValueInterval};
pub use multiscale::{PenaltyMode, StepFunction};
pub use nulldist::NullTable;
pub use segdp::{FitConfig, QuantileFit, StepFit};

/// Errors reported by the library.
///
/// The CLI maps variants to exit codes: `Io`/`Parse` to 1, `Infeasible` to 2,
/// `InvalidInput`/`Budget` to 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A data file could not be read or written.
    #[error("{0}")]
    Io(String),
    /// A data file was read but its contents are malformed.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    /// No step function satisfies the multiscale constraint at the given
    /// threshold.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// A simulation request exceeds the configured compute budget.
    #[error("compute budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;
