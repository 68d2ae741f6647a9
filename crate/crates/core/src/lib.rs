//! Finite-dimensional spectral flow toolkit.
//!
//! The crate computes, for paths of matrices `t -> A(t)` with hyperbolic
//! limits, the three integers that the theory ties together: the Fredholm
//! index of the differential operator `F_A u = u' - A u` on decaying
//! functions, the index of the pair of stable/unstable subspaces
//! `(W^s, W^u)`, and the spectral flow of the path, verifying
//! `ind F_A = ind(W^s, W^u) = -sf(A)` numerically.
//!
//! Modules mirror the layers of the construction:
//!
//! * [`linalg`] - dense primitives (ranks, eigenvalues, solves);
//! * [`grassmann`] - subspace metrics, gaps, Fredholm pairs, conjugation;
//! * [`spectral`] - contour spectral projectors and functional calculus;
//! * [`path`] / [`propagator`] - operator paths and the Cauchy problem;
//! * [`invariant`] - stable/unstable spaces by two independent routes;
//! * [`diffop`] - the discretised operator `F_A`, its index and right inverses;
//! * [`flow`] - spectral flow, path patching, and the identity checks;
//! * [`presets`] / [`input`] / [`report`] - the CLI surface.

pub mod diffop;
pub mod error;
pub mod flow;
pub mod grassmann;
pub mod input;
pub mod invariant;
pub mod linalg;
pub mod path;
pub mod presets;
pub mod propagator;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};
