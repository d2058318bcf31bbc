//! Conservative finite differences for `-div(a grad u) + Lambda |grad u|^q = f(z, u)`
//! in Fermi coordinates, with a damped Picard solver and the weak-form
//! residual used to certify sub- and supersolutions.

mod export;
mod grid;
mod operator;
mod solve;
mod sparse;

pub use export::{write_field_csv, FieldSidecar};
pub use grid::{metric_at, Axis, FieldKind, GridField, GridSpec, TubeGrid};
pub use operator::{assemble_divergence_operator, DivergenceOperator};
pub use solve::{gradient_norm, solve, weak_residual, Dirichlet, EllipticProblem, SolveReport, SolverParams};
pub use sparse::{pcg, CgOutcome, Csr};
