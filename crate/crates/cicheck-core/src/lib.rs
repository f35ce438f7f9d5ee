//! Runtime verification for constraint-based causal discovery.
//!
//! The crate decides whether a set of conditional-independence (CI)
//! statements is consistent under the standard integrity axioms governing CI
//! in faithful Bayesian networks, and applies that decision procedure inside
//! a PC-algorithm pipeline in two ways: rejecting erroneous CI test results
//! as they arrive, and skipping CI tests whose outcome is already entailed.
//!
//! Module map:
//! - [`model`]: variables, variable sets, CI statements, knowledge base.
//! - [`graph`]: DAGs, d-separation, orientation rules, random DAG sampling.
//! - [`bayes`]: discrete Bayesian networks and forward sampling.
//! - [`ci`]: CI-test backends (exact oracle, chi-squared, error injection).
//! - [`smt`]: bit-vector SMT encoding of CI axioms and the solver driver.
//! - [`cir`]: the staged consistency decision procedure.
//! - [`checkers`]: the two runtime checkers wrapping a CI backend.
//! - [`pc`]: the PC structure-learning loop.

pub mod bayes;
pub mod checkers;
pub mod ci;
pub mod cir;
pub mod error;
pub mod graph;
pub mod model;
pub mod pc;
pub mod smt;

pub use error::{Error, Result};
