//! Empirical stabilizability certificates and numerical checks of the
//! closed-loop cost bound.
//!
//! Nothing here proves anything. A [`Certificate`] says that a finite sample
//! of states admitted the required control sequences, and [`check_bounds`]
//! re-evaluates the bound chain on one recorded run.

mod bounds;
mod certify;
mod gamma;

pub use bounds::{check_bounds, envelope_points, BoundCheck, BoundsReport};
pub use certify::{
    certify, certify_contractive, certify_itec, estimate_sigma, minimal_costs, sample_states, Certificate,
    CertifyOptions, Membership, SampleCosts,
};
pub use gamma::{gamma_sequence, tail_sum, GammaSequence, GammaSplit};
