//! Two-stage constrained multi-gradient descent.
//!
//! Solves convex-constrained multi-objective problems
//! `min {F_1(θ), …, F_n(θ)}  s.t.  f_i(θ) ≤ 0` with a descent method that
//! runs in two stages:
//!
//! 1. a **min–max** stage that picks, at every iterate, the feasible unit
//!    direction minimizing the *largest* directional derivative. It improves
//!    all objectives at a balanced rate and stops at a weakly Pareto
//!    stationary point;
//! 2. a **min–min** stage that minimizes the *smallest* directional
//!    derivative subject to no objective getting worse, which refines the
//!    point to Pareto stationarity.
//!
//! Both direction subproblems are linear programs when the constraints are
//! affine ([`direction`]); general convex constraints are linearized. The
//! step length is the largest interval on which every objective stays
//! monotonically non-increasing ([`linesearch`]). Classic MGDA (the
//! minimum-norm point of the gradient hull) lives in [`mgda`] together with
//! Wolfe's optimality certificate.
//!
//! ```
//! use cmgd::{driver::{two_stage_solve, SolveOptions}, problems::toy_problem};
//!
//! let problem = toy_problem();
//! let run = two_stage_solve(&problem, &[0.5, -0.2, 0.1], &SolveOptions::default()).unwrap();
//! let last = run.final_point();
//! assert!(last.iter().sum::<f64>().abs() <= 1.0 + 1e-8);
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod direction;
pub mod driver;
pub mod error;
pub mod linalg;
pub mod linesearch;
pub mod lp;
pub mod mgda;
pub mod model;
pub mod pareto;
pub mod problems;

pub use error::{Error, Result};
pub use model::{FeasibilityReport, FnOracle, GradientMatrix, Oracle, ProblemSpec};
