//! Upwind finite differences on a fitted Shishkin mesh for
//!
//! ```text
//! -eps^2 (u_xx + u_yy) + a(x, y) u_x + b(x, y) u = f(x, y)   on (0,1)^2,
//! ```
//!
//! with Dirichlet data and a source that jumps across `x = d1` and `y = d2`.
//! Errors are estimated with the double-mesh principle.

pub mod analysis;
pub mod config;
pub mod discretization;
pub mod error;
pub mod mesh;
pub mod problem;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use analysis::{
    double_mesh_error, manufactured_solution_study, order_estimate, run_sweep, ConvergenceTable, DoubleMeshMode,
    SweepOptions, SweepReport,
};
pub use config::RunConfig;
pub use discretization::{assemble_system, m_matrix_check, LinearSystem, RowKind, StencilRow, Variant};
pub use error::{Error, Result};
pub use mesh::{compute_transition_points, Mesh1D, PointKind, TensorMesh, TransitionParams};
pub use problem::{builtin_problem, validate, BuiltinProblem, ProblemSpec, Side, ValidationReport};
pub use solver::{solve_direct, GridFunction};
