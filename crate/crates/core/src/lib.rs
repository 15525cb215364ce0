//! Liquid scorecards with an exact roughness penalty.
//!
//! A liquid characteristic scores a numeric input with a cubic B-spline over
//! its liquid range and with one-hot attributes outside of it. This crate
//! builds the exact `∫ CS''(x)² dx = βᵀRβ` penalty matrix, fits the
//! penalized max-divergence quadratic program under pattern constraints, and
//! tunes per-characteristic smoothness parameters against a validation split.
//!
//! Module map:
//!
//! - [`spline_basis`]: padded knot sequence, basis recursion, derivatives and
//!   the piecewise-linear second-derivative decomposition.
//! - [`roughness_penalty`]: closed-form `R`, its quadrature oracle and the
//!   block-diagonal model expansion.
//! - [`scorecard_model`]: characteristics, design expansion, scores and
//!   pattern constraints.
//! - [`qp_solver`]: small dense primal active-set QP solver.
//! - [`divergence_fit`]: class moments, the fitting QP and divergence.
//! - [`smoothness_tuning`]: marginal contributions and greedy λ₂ search.
//! - [`legacy_smoothing`]: smoothing a step-function scorecard.
//! - [`dataset`], [`synth`], [`curves`]: ingestion, synthetic data and curve
//!   emission shared by the CLI and the service.

pub mod curves;
pub mod dataset;
pub mod divergence_fit;
pub mod legacy_smoothing;
pub mod qp_solver;
pub mod quadrature;
pub mod roughness_penalty;
pub mod scorecard_model;
pub mod smoothness_tuning;
pub mod spline_basis;
pub mod synth;

mod summation;

pub use dataset::{DataError, Dataset};
pub use divergence_fit::{fit, FitContext, FitError, FitParams, FitRequest, FittedModel};
pub use qp_solver::{solve_qp, QpError, QpSolution, QuadraticProgram};
pub use roughness_penalty::RoughnessMatrix;
pub use scorecard_model::{CharacteristicSpec, ModelError, ModelSpec, Pattern};
pub use smoothness_tuning::{greedy_tune, TuneReport};
pub use spline_basis::{KnotConfig, SplineError, TVector};
