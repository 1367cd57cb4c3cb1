//! Slowly-varying phase functions for linear scalar ODEs.
//!
//! Solves `y⁽ⁿ⁾ + q_{n-1} y⁽ⁿ⁻¹⁾ + … + q₀ y = 0` by building `n` phase
//! functions `ψ_j` such that `{exp(ψ_j)}` is a solution basis. The cost of
//! the construction depends on how complicated the coefficients are, not on
//! the magnitude of the eigenvalues of the coefficient matrix.
//!
//! The pipeline is:
//!
//! 1. [`levin`]: Newton iterations on the Riccati equation over a small
//!    window, seeded by companion-matrix eigenvalues, give the values of each
//!    `r_j = ψ_j'` and its derivatives at a point `σ`.
//! 2. [`phase`]: the Riccati equation is integrated across the whole interval
//!    from `σ` with the adaptive spectral solver in [`odesolve`], then
//!    integrated once more to obtain `ψ_j`.
//! 3. Initial and boundary value problems are solved by combining the
//!    `exp(ψ_j)`.
//!
//! [`problems`] contains a gallery of test equations together with reference
//! solutions and a run/sweep harness used by the `phasekit` binary.

pub mod chebkit;
pub mod error;
pub mod levin;
pub mod linalg;
pub mod odesolve;
pub mod par;
pub mod phase;
pub mod problems;
pub mod riccati;

pub use num_complex::Complex64;

pub use crate::chebkit::{ChebBasis, ChebGrid, PiecewiseCheb};
pub use crate::error::{Error, Result};
pub use crate::levin::{LevinConfig, LevinState};
pub use crate::odesolve::{AdaptiveConfig, SystemSolution, TailNorm};
pub use crate::par::Execution;
pub use crate::phase::{BvpCondition, PhaseSet, ScalarOde, SolveReport};

/// IEEE double precision machine epsilon.
pub const MACHINE_EPS: f64 = f64::EPSILON;
