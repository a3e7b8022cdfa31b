//! Sparse low-rank matrix recovery from linear measurements by alternating
//! Tikhonov and LASSO updates on a rank-R factorization.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod atlas;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod measurement;
pub mod models;
pub mod seeding;
pub mod solvers;
pub mod stats;

pub use atlas::{atlas_run, objective, Decomposition, Initialization, ProximalConfig, SolveReport, SolverConfig};
pub use error::{Error, Result};
pub use measurement::{Ensemble, MeasurementOperator, OperatorSpec};
pub use models::{GroundTruth, GroundTruthSpec, SparseDecomposition, SparsityClass};
pub use solvers::{IstaConfig, Penalty, StepPolicy};
