//! Numerical laboratory for linear transport of differential k-forms by
//! stochastic flows.
//!
//! The crate is organised bottom-up: [`calculus`] holds the exterior algebra
//! and function-space tools, [`mollifier`] the convolution and commutator
//! experiments, [`flow`] the characteristic SDE integrators, [`advection`]
//! the pushforward solution and its residual checks, [`counterexample`] the
//! Hölder-drift non-uniqueness construction and [`runner`] the scenario
//! orchestration used by the `kform` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advection;
pub mod calculus;
pub mod counterexample;
pub mod error;
pub mod expr;
pub mod flow;
pub mod mollifier;
pub mod registry;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
pub use expr::Expr;
