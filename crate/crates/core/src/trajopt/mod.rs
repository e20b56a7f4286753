//! Finite-horizon constrained trajectory optimisation by single shooting.
//!
//! Decision variables are the controls only; states come from rolling the
//! discrete system forward. The two quadratic inequalities (energy window and
//! terminal contraction) are handled by an augmented Lagrangian, the input box
//! by projection.

mod problem;
mod solver;

pub use problem::{ConstraintId, EnergyWindow, Evaluation, HorizonProblem, InputSet};
pub use solver::{energy, SolveResult, SolveStatus, Solver, SolverConfig};
