//! Structured-sparsity optimization under three-view cardinality
//! constraints.
//!
//! The constraint model bounds the number of nonzeros overall, within each
//! group of a first view, and within each group of a second view; groups
//! overlap only across views. The crate provides:
//!
//! - [`structure`]: structure types, validation, and the sparse
//!   constraint system `A x <= s`, including an exhaustive total
//!   unimodularity checker for small instances.
//! - [`projection`]: exact Euclidean projection onto the feasible set via
//!   a primal-dual penalty solved by projected gradient descent, with a
//!   brute-force oracle for verification.
//! - [`solvers`]: hard-thresholding and matching-pursuit outer loops
//!   (plus stochastic variants) over any [`solvers::ObjectiveOracle`].
//! - [`objectives`]: least squares, squared hinge, network-inference, and
//!   crowd-assignment objectives.
//! - [`metrics`], [`experiments`]: evaluation metrics, synthetic data
//!   generators, and the experiment harnesses behind the CLI.

pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod objectives;
pub mod parallel;
pub mod projection;
pub mod solvers;
pub mod structure;

pub use error::{Result, TvcsError};
pub use projection::{
    project, project_bruteforce, ProjectionConfig, ProjectionResult, StepSizeMode,
};
pub use structure::{
    build_constraint_system, check_totally_unimodular, is_feasible_support, validate_structure,
    ConstraintSystem, Group, TvcsStructure,
};
