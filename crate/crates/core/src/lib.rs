//! Incremental camera pose from six pairwise matches against calibrated
//! cameras, via a Dixon resultant with one hidden quaternion component and a
//! polynomial eigenvalue problem.

// `!(x <= tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bkk;
pub mod dixon;
pub mod geometry;
pub mod mpoly;
pub mod polyeig;
pub mod robust;
pub mod solver;

pub use geometry::{
    build_constraint, essential_from_poses, hamilton_product, residual_eq3, rotate_point, sampson_error,
    CalibratedCamera, CameraId, ConstraintCoefficients, GeometryError, MatchPair, Pose, Quaternion, Scene,
    Tolerances, TripleMatch,
};
