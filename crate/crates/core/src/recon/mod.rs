//! Sparse reconstruction from (possibly reduced or marked) measurements.

mod fista;
mod transform;

pub use fista::{
    data_gradient, data_objective, fista_solve, lipschitz_estimate, reconstruct, write_trace_csv,
    DenseOperator, FistaOptions, FistaResult, LinearOperator, ReconProblem, TraceRow,
    DEFAULT_LAMBDA_FRACTION, LIPSCHITZ_FLOOR,
};
pub use transform::{soft_threshold, Sparsity, Transform2d};
