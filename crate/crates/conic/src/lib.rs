//! Linear and second-order cone programming for small and medium dense
//! problems.
//!
//! The crate is organised in three layers:
//!
//! * [`model`]: a modeling layer where constraints are written as affine
//!   expressions over named variables, each row and cone carrying a caller
//!   defined tag;
//! * [`standard`]: the standard form `min c'x s.t. Ax = b, x in K` where `K` is
//!   a product of free, nonnegative, second-order and rotated second-order
//!   cones, plus the index map that carries primal values and duals back to
//!   the model;
//! * [`solver`]: a primal-dual interior-point method on the homogeneous
//!   self-dual embedding with Nesterov-Todd scaling and Mehrotra correction.
//!
//! [`io`] reads and writes the standard form as a versioned text file.

pub mod io;
pub mod model;
pub mod solver;
pub mod standard;

mod cones;
mod linalg;

pub use model::{Cone, ConeId, ConeKind, ConicProgram, LinExpr, ModelError, Row, RowId, RowSense};
pub use solver::{solve, ConicSolution, Settings, SolveError, Status};
pub use standard::{to_standard_form, Block, IndexMap, ModelSolution, StandardForm};
