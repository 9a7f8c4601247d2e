//! Routh reduction and the homogenization trick for autonomous Lagrangians.
//!
//! For a strongly convex autonomous Lagrangian `L` and an energy level `e`,
//! the crate builds the 1-homogeneous function `Fₑ` whose geodesics (as
//! point sets) are the Euler-Lagrange solutions of `L` with energy `e`, and
//! provides the machinery to check this numerically.

pub mod calculus;
pub mod checks;
pub mod error;
pub mod expr;
pub mod homogenize;
pub mod jet;
pub mod lagrangian;
pub mod linalg;
pub mod ode;
pub mod report;
pub mod routh;
pub mod sampling;
pub mod spray;
pub mod trajectory;
pub mod verify;

pub use calculus::{fd_jet, jet, ScalarField, SecondJet};
pub use error::{Error, Result};
pub use expr::Expr;
pub use lagrangian::{Family, LagrangianModel, MechanicalData};
pub use trajectory::Trajectory;
