//! Singular-perturbation model reduction for stable LTI systems.
//!
//! Two strategies choose what to eliminate so that the H2 norm of the output
//! error system is small:
//!
//! * [`greedy`]: eliminate original states one at a time, keeping the
//!   reduced model stable and free of feedthrough.
//! * [`stiefel`]: optimize over orthonormal retained subspaces after a
//!   stabilizing change of coordinates, optionally warm-started from greedy.
//!
//! [`validation`] cross-checks the Lyapunov H2 value against impulse-response
//! integration and white-noise simulation.

// `!(x <= limit)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod model;
pub mod gen;
pub mod greedy;
pub mod io;
pub mod pipeline;
pub mod sp;
pub mod stiefel;
pub mod validation;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{build_error_system, h2_error, h2_error_between, ErrorSystem, ReducedModel, StateSpaceModel};
pub use sp::{check_range_condition, compute_pi, reduce, selection_pair, ProjectionPair};
