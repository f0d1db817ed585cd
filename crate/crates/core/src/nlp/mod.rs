//! Sparse nonlinear programming: problem interface, quadratic modelling
//! helpers, sparse LDLᵀ and the interior-point solver.

mod ipm;
mod newton;
pub mod ldl;
pub mod ordering;
mod problem;
pub mod quad;

pub use ipm::{
    default_start, kkt_residual, multistart_solve, select_best, solve, solve_from,
    MultistartResult, StartPoint, INFINITE_BOUND,
};
pub use problem::{
    check_contract, HessianMode, KktNorms, NlpError, NlpOptions, NlpProblem, NlpSolution,
    SolveStatus,
};
pub use newton::{project_eq, Projection};
pub use quad::{LinExpr, QuadExpr, QuadNlp, QuadNlpBuilder, Restricted};
