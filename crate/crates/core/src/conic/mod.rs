//! Canonical conic programs, their duals and the solver interface.

mod cone;
mod dual;
mod program;
mod solve;
mod sparse;

pub use cone::{rotated_to_soc, ConeBlock, ConeSpec};
pub use dual::{dualize, DualPoint, DualProgram};
pub use program::{AffineMap, ConicProgram, Expr, ProgramBuilder};
pub use solve::{residuals, solve_conic, weak_duality_check, Residuals, SolveStatus, SolverSolution, DEFAULT_TOL};
pub use sparse::SparseMatrix;
