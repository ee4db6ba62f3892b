//! Fundamental solutions and viscosity solutions of contact
//! Hamilton-Jacobi equations `u_t + H(x, u, D_x u) = 0`, built from the
//! variational problem whose cost obeys `u' = L(xi, u, xi')`.

pub mod caratheodory;
pub mod cli;
pub mod contact_system;
pub mod error;
pub mod herglotz;
pub mod hj_solver;
pub mod invariants;
mod numeric;
pub mod optimize;
pub mod vanishing;

pub use caratheodory::{integrate_cost, CostTrajectory, Curve};
pub use contact_system::{builtin_hamiltonian, builtin_system, ContactSystem, Growth, HamiltonianSystem};
pub use error::{Error, Result};
pub use herglotz::{fundamental_direct, fundamental_shooting, FundamentalResult, OptimizerParams};
pub use hj_solver::{builtin_datum, solve_value, solve_value_grid, InitialDatum, SearchParams, ValueGrid};
pub use vanishing::{builtin_family, run_vanishing, ConvergenceReport, LambdaFamily};
