//! Camera geometry: quaternions, poses, epipolar constraint coefficients and
//! the residuals used to score pose hypotheses.
//!
//! Conventions used throughout the crate:
//!
//! * A [`Pose`] stores the rotation `R` that maps camera coordinates into the
//!   global frame and the camera *center* `t` in the global frame, so an image
//!   point satisfies `p ∝ Rᵀ (P − t)`.
//! * Image points are calibrated, homogeneous, with third component 1 on
//!   input. Constraint construction renormalizes them to unit length.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerances used by checks throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Residual scale expected from exact (noise-free) data.
    pub exact: f64,
    /// Residual scale expected from noisy measurements.
    pub noisy: f64,
    /// Allowed deviation from unit norm for rotation quaternions.
    pub unit_norm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            exact: 1e-10,
            noisy: 1e-6,
            unit_norm: 1e-9,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("quaternion is not unit length (norm {norm})")]
    NonUnitQuaternion { norm: f64 },
    #[error("match references camera `{expected}` but camera `{found}` was supplied")]
    CameraMismatch { expected: CameraId, found: CameraId },
    #[error("duplicate camera id `{0}`")]
    DuplicateCamera(CameraId),
    #[error("match {index} references unknown camera `{camera}`")]
    UnknownCamera { index: usize, camera: CameraId },
    #[error("matches must involve at least two reference cameras, found {0}")]
    TooFewCameras(usize),
}

/// Quaternion `(w; x, y, z)` with real part `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Pure quaternion `(0; v)`.
    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_scalar_vector(w: f64, v: &Vector3<f64>) -> Self {
        Self::new(w, v.x, v.y, v.z)
    }

    /// Rotation by `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let u = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, s * u.x, s * u.y, s * u.z)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Vector (imaginary) part.
    pub fn vec(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(k * self.w, k * self.x, k * self.y, k * self.z)
    }

    pub fn normalized(&self) -> Self {
        self.scale(1.0 / self.norm())
    }

    /// Representative of `{q, −q}` with non-negative real part.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            self.scale(-1.0)
        } else {
            *self
        }
    }

    /// Rotation matrix of `q / ‖q‖`.
    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let Quaternion { w, x, y, z } = *self;
        let n2 = self.norm_squared();
        Matrix3::new(
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        ) / n2
    }

    /// Unit quaternion of a rotation matrix (Shepperd's method), canonical sign.
    pub fn from_rotation_matrix(r: &Matrix3<f64>) -> Self {
        let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
        let q = if trace > r[(0, 0)].max(r[(1, 1)]).max(r[(2, 2)]) {
            let s = 2.0 * (1.0 + trace).sqrt();
            Self::new(
                0.25 * s,
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            )
        } else if r[(0, 0)] >= r[(1, 1)] && r[(0, 0)] >= r[(2, 2)] {
            let s = 2.0 * (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt();
            Self::new(
                (r[(2, 1)] - r[(1, 2)]) / s,
                0.25 * s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
            )
        } else if r[(1, 1)] >= r[(2, 2)] {
            let s = 2.0 * (1.0 - r[(0, 0)] + r[(1, 1)] - r[(2, 2)]).sqrt();
            Self::new(
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                0.25 * s,
                (r[(1, 2)] + r[(2, 1)]) / s,
            )
        } else {
            let s = 2.0 * (1.0 - r[(0, 0)] - r[(1, 1)] + r[(2, 2)]).sqrt();
            Self::new(
                (r[(1, 0)] - r[(0, 1)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
                (r[(1, 2)] + r[(2, 1)]) / s,
                0.25 * s,
            )
        };
        q.normalized().canonical()
    }

    /// Angle in radians of the relative rotation between two quaternions.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        let rel = hamilton_product(&self.normalized().conjugate(), &other.normalized());
        2.0 * rel.vec().norm().atan2(rel.w.abs())
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        hamilton_product(&self, &rhs)
    }
}

/// `(r₁r₂ − v₁·v₂ ; r₁v₂ + r₂v₁ + v₁×v₂)`.
pub fn hamilton_product(a: &Quaternion, b: &Quaternion) -> Quaternion {
    let (va, vb) = (a.vec(), b.vec());
    let v = vb * a.w + va * b.w + va.cross(&vb);
    Quaternion::new(a.w * b.w - va.dot(&vb), v.x, v.y, v.z)
}

/// Rotates `p` by conjugation, `vec(q p q*)`.
pub fn rotate_point(q: &Quaternion, p: &Vector3<f64>) -> Result<Vector3<f64>, GeometryError> {
    let norm = q.norm();
    if (norm - 1.0).abs() > Tolerances::default().unit_norm {
        return Err(GeometryError::NonUnitQuaternion { norm });
    }
    Ok(hamilton_product(&hamilton_product(q, &Quaternion::pure(p)), &q.conjugate()).vec())
}

/// `[v]×`, the matrix with `[v]× u = v × u`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rigid camera pose: rotation (camera → global) and camera center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Quaternion,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// Builds a pose, normalizing the quaternion to the canonical unit representative.
    pub fn new(rotation: Quaternion, translation: Vector3<f64>) -> Self {
        Self {
            rotation: rotation.normalized().canonical(),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Quaternion::IDENTITY, Vector3::zeros())
    }

    pub fn from_matrix(r: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self::new(Quaternion::from_rotation_matrix(r), translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix()
    }

    /// Camera-frame coordinates of a world point, `Rᵀ (P − t)`.
    pub fn world_to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix().transpose() * (point - self.translation)
    }

    /// Normalized image point (third component 1) of a world point.
    pub fn project(&self, point: &Vector3<f64>) -> Vector3<f64> {
        let c = self.world_to_camera(point);
        c / c.z
    }

    /// Rotation error in degrees relative to `other`.
    pub fn rotation_error_deg(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation).to_degrees()
    }

    pub fn translation_error(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CameraId(pub String);

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CameraId {
    fn from(s: &str) -> Self {
        CameraId(s.to_owned())
    }
}

impl From<String> for CameraId {
    fn from(s: String) -> Self {
        CameraId(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedCamera {
    pub id: CameraId,
    pub pose: Pose,
}

impl CalibratedCamera {
    pub fn new(id: impl Into<CameraId>, pose: Pose) -> Self {
        Self {
            id: id.into(),
            pose,
        }
    }
}

/// A point in the new image matched to a point in one calibrated image.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPair {
    pub target_point: Vector3<f64>,
    pub ref_camera: CameraId,
    pub ref_point: Vector3<f64>,
}

impl MatchPair {
    pub fn new(target_point: Vector3<f64>, ref_camera: impl Into<CameraId>, ref_point: Vector3<f64>) -> Self {
        Self {
            target_point,
            ref_camera: ref_camera.into(),
            ref_point,
        }
    }

    /// From calibrated image coordinates `(x, y)`; stored with `z = 1`.
    pub fn from_image(target: [f64; 2], ref_camera: impl Into<CameraId>, reference: [f64; 2]) -> Self {
        Self::new(
            Vector3::new(target[0], target[1], 1.0),
            ref_camera,
            Vector3::new(reference[0], reference[1], 1.0),
        )
    }
}

/// A 3D point triangulated from two calibrated views together with its
/// observation in the new image.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleMatch {
    pub point3d: Vector3<f64>,
    pub target_point: Vector3<f64>,
}

/// Known quantities `(p, s, b)` of one match in `pᵀRᵀ(s×t + b) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCoefficients {
    pub p: Vector3<f64>,
    pub s: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl ConstraintCoefficients {
    /// Scales `s` and `b` so that `max(‖s‖, ‖b‖) = 1`. The constraint is
    /// linear in `(s, b)`, so its solution set is unchanged.
    pub fn balanced(&self) -> Self {
        let k = self.s.norm().max(self.b.norm());
        if k > 0.0 {
            Self {
                p: self.p,
                s: self.s / k,
                b: self.b / k,
            }
        } else {
            *self
        }
    }

    /// Denominator used to make residuals comparable across matches.
    pub fn residual_scale(&self, t: &Vector3<f64>) -> f64 {
        self.p.norm() * (self.s.norm() * t.norm() + self.b.norm())
    }
}

/// Builds `(p, s = −Rᵢp′, b = −[tᵢ]×Rᵢp′)` after normalizing both image
/// points to unit length.
pub fn build_constraint(
    m: &MatchPair,
    reference: &CalibratedCamera,
) -> Result<ConstraintCoefficients, GeometryError> {
    if m.ref_camera != reference.id {
        return Err(GeometryError::CameraMismatch {
            expected: m.ref_camera.clone(),
            found: reference.id.clone(),
        });
    }
    let p = m.target_point.normalize();
    let ray = reference.pose.rotation_matrix() * m.ref_point.normalize();
    Ok(ConstraintCoefficients {
        p,
        s: -ray,
        b: -reference.pose.translation.cross(&ray),
    })
}

/// `E = Rᵀ([t]× − [tᵢ]×)Rᵢ`, so that `pᵀ E p′ = 0` for matching points.
pub fn essential_from_poses(new_pose: &Pose, ref_pose: &Pose) -> Matrix3<f64> {
    new_pose.rotation_matrix().transpose()
        * skew(&(new_pose.translation - ref_pose.translation))
        * ref_pose.rotation_matrix()
}

/// First-order geometric error of `pᵀ E p′ = 0`. Returns `+∞` when the
/// epipolar geometry is degenerate for this pair.
pub fn sampson_error(e: &Matrix3<f64>, p: &Vector3<f64>, p_ref: &Vector3<f64>) -> f64 {
    let ep = e * p_ref;
    let etp = e.transpose() * p;
    let denom = ep.x * ep.x + ep.y * ep.y + etp.x * etp.x + etp.y * etp.y;
    if denom < 1e-300 {
        return f64::INFINITY;
    }
    let r = p.dot(&ep);
    r * r / denom
}

/// Signed residual `pᵀRᵀ(s×t + b)`.
pub fn residual_eq3(pose: &Pose, c: &ConstraintCoefficients) -> f64 {
    let rp = pose.rotation_matrix() * c.p;
    rp.dot(&(c.s.cross(&pose.translation) + c.b))
}

/// A set of calibrated cameras and the matches relating them to the new image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub cameras: Vec<CalibratedCamera>,
    pub matches: Vec<MatchPair>,
    pub triple_match: Option<TripleMatch>,
}

impl Scene {
    pub fn camera(&self, id: &CameraId) -> Option<&CalibratedCamera> {
        self.cameras.iter().find(|c| &c.id == id)
    }

    /// Checks id uniqueness, that every match names a known camera and that
    /// at least two reference cameras are involved.
    pub fn validate(&self) -> Result<(), GeometryError> {
        for (i, c) in self.cameras.iter().enumerate() {
            if self.cameras[..i].iter().any(|o| o.id == c.id) {
                return Err(GeometryError::DuplicateCamera(c.id.clone()));
            }
        }
        for (index, m) in self.matches.iter().enumerate() {
            if self.camera(&m.ref_camera).is_none() {
                return Err(GeometryError::UnknownCamera {
                    index,
                    camera: m.ref_camera.clone(),
                });
            }
        }
        let distinct = self.distinct_ref_cameras();
        if distinct < 2 {
            return Err(GeometryError::TooFewCameras(distinct));
        }
        Ok(())
    }

    pub fn distinct_ref_cameras(&self) -> usize {
        let mut ids: Vec<&CameraId> = self.matches.iter().map(|m| &m.ref_camera).collect();
        ids.sort();
        ids.dedup();
        ids.len()
    }

    /// Constraint coefficients of every match, in match order.
    pub fn constraints(&self) -> Result<Vec<ConstraintCoefficients>, GeometryError> {
        self.matches
            .iter()
            .enumerate()
            .map(|(index, m)| {
                let cam = self.camera(&m.ref_camera).ok_or_else(|| GeometryError::UnknownCamera {
                    index,
                    camera: m.ref_camera.clone(),
                })?;
                build_constraint(m, cam)
            })
            .collect()
    }

    /// Sampson error of every match for a candidate pose of the new camera,
    /// in match order.
    pub fn sampson_errors(&self, pose: &Pose) -> Vec<f64> {
        self.matches
            .iter()
            .map(|m| match self.camera(&m.ref_camera) {
                Some(cam) => sampson_error(&essential_from_poses(pose, &cam.pose), &m.target_point, &m.ref_point),
                None => f64::INFINITY,
            })
            .collect()
    }

    /// Sum of Sampson errors of all matches for a candidate pose of the new camera.
    pub fn sampson_total(&self, pose: &Pose) -> f64 {
        self.sampson_errors(pose).iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn q(w: f64, x: f64, y: f64, z: f64) -> Quaternion {
        Quaternion::new(w, x, y, z)
    }

    #[test]
    fn hamilton_identity_and_ijk() {
        let a = q(0.3, -1.2, 0.5, 2.0);
        assert_eq!(hamilton_product(&Quaternion::IDENTITY, &a), a);
        let k = hamilton_product(&q(0.0, 1.0, 0.0, 0.0), &q(0.0, 0.0, 1.0, 0.0));
        assert_eq!(k, q(0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn rotate_point_examples() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(rotate_point(&Quaternion::IDENTITY, &p).unwrap(), p);
        let rz = Quaternion::from_axis_angle(&Vector3::z(), PI / 2.0);
        let r = rotate_point(&rz, &Vector3::x()).unwrap();
        assert_relative_eq!(r, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn rotate_point_rejects_non_unit() {
        let err = rotate_point(&q(2.0, 0.0, 0.0, 0.0), &Vector3::x()).unwrap_err();
        assert!(matches!(err, GeometryError::NonUnitQuaternion { .. }));
    }

    #[test]
    fn constraint_two_view_special_case() {
        let cam = CalibratedCamera::new("a", Pose::identity());
        let pr = Vector3::new(0.6, 0.0, 0.8);
        let m = MatchPair::new(Vector3::new(0.0, 0.0, 1.0), "a", pr);
        let c = build_constraint(&m, &cam).unwrap();
        assert_relative_eq!(c.s, -pr, epsilon = 1e-15);
        assert_eq!(c.b, Vector3::zeros());
    }

    #[test]
    fn constraint_offset_reference() {
        let cam = CalibratedCamera::new("a", Pose::new(Quaternion::IDENTITY, Vector3::x()));
        let m = MatchPair::new(Vector3::new(0.0, 0.0, 1.0), "a", Vector3::z());
        let c = build_constraint(&m, &cam).unwrap();
        assert_eq!(c.s, Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(c.b, Vector3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn constraint_camera_mismatch() {
        let cam = CalibratedCamera::new("a", Pose::identity());
        let m = MatchPair::new(Vector3::z(), "b", Vector3::z());
        assert!(matches!(
            build_constraint(&m, &cam),
            Err(GeometryError::CameraMismatch { .. })
        ));
    }

    #[test]
    fn essential_examples() {
        let p = Pose::new(Quaternion::from_axis_angle(&Vector3::new(1.0, 2.0, 0.5), 0.7), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(essential_from_poses(&p, &p), Matrix3::zeros());
        let t = Vector3::new(1.0, 0.0, 0.0);
        let e = essential_from_poses(&Pose::new(Quaternion::IDENTITY, t), &Pose::identity());
        assert_relative_eq!(e, skew(&t));
    }

    #[test]
    fn sampson_degenerate_is_infinite() {
        assert_eq!(
            sampson_error(&Matrix3::zeros(), &Vector3::z(), &Vector3::z()),
            f64::INFINITY
        );
    }

    #[test]
    fn canonical_sign() {
        let a = q(-0.5, 0.5, 0.5, 0.5);
        assert_eq!(a.canonical(), q(0.5, -0.5, -0.5, -0.5));
        assert!(Pose::new(a, Vector3::zeros()).rotation.w >= 0.0);
    }

    #[test]
    fn scene_validation() {
        let cams = vec![
            CalibratedCamera::new("a", Pose::identity()),
            CalibratedCamera::new("b", Pose::identity()),
        ];
        let mut scene = Scene {
            cameras: cams,
            matches: vec![MatchPair::new(Vector3::z(), "a", Vector3::z())],
            triple_match: None,
        };
        assert_eq!(scene.validate(), Err(GeometryError::TooFewCameras(1)));
        scene.matches.push(MatchPair::new(Vector3::z(), "c", Vector3::z()));
        assert!(matches!(scene.validate(), Err(GeometryError::UnknownCamera { index: 1, .. })));
        scene.matches[1].ref_camera = "b".into();
        assert!(scene.validate().is_ok());
        scene.cameras.push(CalibratedCamera::new("a", Pose::identity()));
        assert!(matches!(scene.validate(), Err(GeometryError::DuplicateCamera(_))));
    }
}
