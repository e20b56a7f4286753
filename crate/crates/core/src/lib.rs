//! Interval-wise receding horizon control (IRHC) for systems whose inputs are
//! subject to periodic total-energy budgets.
//!
//! The crate is organised bottom-up:
//!
//! - [`plant`]: continuous models, fixed-step discretization, rollouts.
//! - [`trajopt`]: the finite-horizon constrained problem and its solver.
//! - [`controller`]: the interval-wise horizon schedule and run loop.
//! - [`baselines`]: fixed-horizon RHC, proportional budget allocation, static feedback.
//! - [`analysis`]: empirical stabilizability certificates and cost-bound diagnostics.
//! - [`experiment`]: configuration files and the artifacts written by the CLI.

pub mod analysis;
pub mod baselines;
pub mod config;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod plant;
pub mod record;
pub mod trajopt;

pub use error::{Error, Result};

// The guide in book/ is checked by rustdoc: one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/plant.md")]
    mod plant {}
    #[doc = include_str!("../../../book/src/horizon-problem.md")]
    mod horizon_problem {}
    #[doc = include_str!("../../../book/src/schedule.md")]
    mod schedule {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/results.md")]
    mod results {}
}
