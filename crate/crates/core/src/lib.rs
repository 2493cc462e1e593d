//! Mixed P2/P0/P0 finite elements for the power-law (r-)Stokes problem with
//! unilateral contact on part of the boundary, solved by a primal-dual
//! active set (semismooth Newton) method.
//!
//! The crate ships two experiments: a manufactured-solution convergence
//! study ([`verification`]) and a subglacial cavity evolution ([`cavity`]).

// Negated comparisons are used on purpose so that NaN parameters are rejected.
// Dense kernels index several arrays with one loop counter.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod cavity;
pub mod element;
pub mod error;
pub mod exec;
pub mod linsolve;
pub mod mesh;
pub mod quadrature;
pub mod rheology;
pub mod rigid;
pub mod solver;
pub mod spaces;
pub mod sparse;
pub mod verification;

pub use error::{Error, Result};
pub use exec::Execution;
pub use mesh::{BoundaryTag, Diagonal, Mesh};
pub use rheology::Rheology;
pub use solver::{MixedState, NewtonConfig, Obstacles};
pub use spaces::{ContactNormal, Spaces, TraceOperator};
pub use sparse::SparseMatrix;
