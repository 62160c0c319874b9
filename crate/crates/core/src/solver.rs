//! End-to-end pose recovery: configuration detection, frame conditioning,
//! root finding, rotation extraction, translation recovery and ranking.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dixon::{self, DixonError, DixonPencil, ZERO_COLUMN_EPS};
use crate::geometry::{
    hamilton_product, residual_eq3, CalibratedCamera, CameraId, ConstraintCoefficients, GeometryError, Pose, Quaternion,
    Scene, TripleMatch,
};
use crate::polyeig::{self, MatrixPolynomial, PolyEigError, REAL_TOL};
use crate::robust::synth::random_rotation;

/// Split of the six matches over reference cameras.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigurationKind {
    /// At most three matches from any single camera.
    Generic,
    /// Exactly four matches from one camera.
    FourTwo,
    /// Five matches from one camera. Needs a five-point essential matrix
    /// solver, which this crate does not provide.
    FiveOne,
    /// All matches from one camera: the scale of `t` is unobservable.
    Invalid,
}

impl std::fmt::Display for ConfigurationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConfigurationKind::Generic => "generic",
            ConfigurationKind::FourTwo => "4+2",
            ConfigurationKind::FiveOne => "5+1",
            ConfigurationKind::Invalid => "6+0",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub counts: BTreeMap<CameraId, usize>,
    pub kind: ConfigurationKind,
}

pub fn detect_configuration(scene: &Scene) -> Configuration {
    let mut counts = BTreeMap::new();
    for m in &scene.matches {
        *counts.entry(m.ref_camera.clone()).or_insert(0) += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    let kind = match max {
        0..=3 => ConfigurationKind::Generic,
        4 => ConfigurationKind::FourTwo,
        5 => ConfigurationKind::FiveOne,
        _ => ConfigurationKind::Invalid,
    };
    Configuration { counts, kind }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("a minimal solve needs exactly 6 matches, got {0}")]
    MatchCount(usize),
    #[error("unsupported configuration {kind}: {reason}")]
    Unsupported { kind: ConfigurationKind, reason: &'static str },
    #[error(transparent)]
    Dixon(#[from] DixonError),
    #[error(transparent)]
    PolyEig(#[from] PolyEigError),
    #[error("translation system has rank {0}; cameras and constraints are jointly degenerate")]
    TranslationRank(usize),
    #[error("triple match cannot fix the position along the camera line")]
    ScaleUnresolvable,
}

/// `t = t′ + α t″` for the line of positions consistent with a rank-2
/// translation system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParametrization {
    pub t_base: Vector3<f64>,
    pub t_dir: Vector3<f64>,
    pub alpha: Option<f64>,
}

impl LineParametrization {
    pub fn point(&self, alpha: f64) -> Vector3<f64> {
        self.t_base + alpha * self.t_dir
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Translation {
    Point(Vector3<f64>),
    Line(LineParametrization),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseCandidate {
    pub pose: Pose,
    pub quaternion: Quaternion,
    pub sampson_total: f64,
    /// Largest normalized residual `|pᵀRᵀ(s×t + b)| / (‖p‖(‖s‖‖t‖ + ‖b‖))`
    /// over the six matches.
    pub eq3_residual_norm: f64,
    pub translation_rank: usize,
    /// Present when the translation system has rank 2.
    pub line: Option<LineParametrization>,
    /// Matches whose triangulated point lies behind either camera.
    pub cheirality_violations: usize,
    /// Squared reprojection error of the triple match, when the scene has one.
    pub triple_error: Option<f64>,
}

impl PoseCandidate {
    /// Geometric error used for ranking: the Sampson total plus the triple
    /// match reprojection error.
    pub fn ranking_error(&self) -> f64 {
        self.sampson_total + self.triple_error.unwrap_or(0.0)
    }
}

/// Squared distance in normalized image coordinates between the observed
/// triple-match point and the projection of its 3D point. Points behind the
/// camera score infinity.
pub fn triple_reprojection_error(pose: &Pose, triple: &TripleMatch) -> f64 {
    let c = pose.world_to_camera(&triple.point3d);
    if c.z <= 0.0 {
        return f64::INFINITY;
    }
    let p = triple.target_point / triple.target_point.z;
    (c.x / c.z - p.x).powi(2) + (c.y / c.z - p.y).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Finite eigenvalues of the pencil.
    pub complex_count: usize,
    /// Real eigenvalues whose eigenvector passed the residual check.
    pub real_count: usize,
    pub config: Configuration,
    /// Whether the rotated-frame retry ran.
    pub retried: bool,
    /// Real roots dropped because the recovered pose failed the residual check.
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub candidates: Vec<PoseCandidate>,
    pub diagnostics: Diagnostics,
}

impl SolutionSet {
    pub fn best(&self) -> Option<&PoseCandidate> {
        self.candidates.first()
    }
}

/// Triggers for re-solving in a randomly rotated global frame, which moves a
/// rotation angle of π (where the fixed real part of `q` vanishes) away from
/// the singular set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryOptions {
    pub seed: u64,
    /// Retry when the best Sampson total exceeds this.
    pub sampson_threshold: f64,
    /// Retry when fewer finite eigenvalues than this are found.
    pub expected_complex: usize,
    /// Retry when a kept root has `|q₂|` above this.
    pub large_root: f64,
}

impl Default for RetryOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed_0f91,
            sampson_threshold: 1e-8,
            expected_complex: 64,
            large_root: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative singular value below which the translation system is rank 2.
    pub rank_eps: f64,
    /// Rotation angle (radians) and relative translation for merging candidates.
    pub dedup_tol: f64,
    /// Candidates whose normalized residual exceeds this are dropped.
    pub residual_tol: f64,
    /// Rank by cheirality violations before the Sampson total.
    pub cheirality_ranking: bool,
    pub retry: Option<RetryOptions>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rank_eps: 1e-6,
            dedup_tol: 1e-7,
            residual_tol: 1e-6,
            cheirality_ranking: true,
            retry: Some(RetryOptions::default()),
        }
    }
}

/// Similarity applied to the global frame before solving:
/// `X′ = s·G(X − c)`.
#[derive(Debug, Clone, Copy)]
struct Frame {
    center: Vector3<f64>,
    scale: f64,
    rot: Matrix3<f64>,
}

impl Frame {
    /// Centroid of the matched reference centers at the origin, RMS distance √2.
    fn conditioning(scene: &Scene) -> Self {
        let centers: Vec<Vector3<f64>> = referenced_cameras(scene).iter().map(|c| c.pose.translation).collect();
        let center = centers.iter().sum::<Vector3<f64>>() / centers.len().max(1) as f64;
        let rms = (centers.iter().map(|c| (c - center).norm_squared()).sum::<f64>() / centers.len().max(1) as f64).sqrt();
        let scale = if rms > 1e-12 { std::f64::consts::SQRT_2 / rms } else { 1.0 };
        Self {
            center,
            scale,
            rot: Matrix3::identity(),
        }
    }

    fn rotated(mut self, g: Matrix3<f64>) -> Self {
        self.rot = g;
        self
    }

    fn apply_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rot * (x - self.center))
    }

    fn apply_pose(&self, p: &Pose) -> Pose {
        Pose::from_matrix(&(self.rot * p.rotation_matrix()), self.apply_point(&p.translation))
    }

    fn restore_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rot.transpose() * x / self.scale + self.center
    }

    fn restore_pose(&self, p: &Pose) -> Pose {
        Pose::from_matrix(&(self.rot.transpose() * p.rotation_matrix()), self.restore_point(&p.translation))
    }

    fn restore_line(&self, l: &LineParametrization) -> LineParametrization {
        LineParametrization {
            t_base: self.restore_point(&l.t_base),
            t_dir: self.rot.transpose() * l.t_dir,
            alpha: l.alpha.map(|a| a / self.scale),
        }
    }

    fn apply_scene(&self, scene: &Scene) -> Scene {
        Scene {
            cameras: scene
                .cameras
                .iter()
                .map(|c| CalibratedCamera::new(c.id.clone(), self.apply_pose(&c.pose)))
                .collect(),
            matches: scene.matches.clone(),
            triple_match: scene.triple_match.as_ref().map(|t| TripleMatch {
                point3d: self.apply_point(&t.point3d),
                target_point: t.target_point,
            }),
        }
    }
}

fn referenced_cameras(scene: &Scene) -> Vec<&CalibratedCamera> {
    scene
        .cameras
        .iter()
        .filter(|c| scene.matches.iter().any(|m| m.ref_camera == c.id))
        .collect()
}

/// Solves the 6×3 linear system for the camera center at a fixed rotation.
pub fn recover_translation(
    q: &Quaternion,
    constraints: &[ConstraintCoefficients],
    rank_eps: f64,
) -> Result<Translation, SolverError> {
    let r = q.normalized().to_rotation_matrix();
    let n = constraints.len();
    let mut a = DMatrix::zeros(n, 3);
    let mut rhs = DVector::zeros(n);
    for (k, c) in constraints.iter().enumerate() {
        // (Rp)·(s×t) = t·((Rp)×s)
        let rp = r * c.p;
        let row = rp.cross(&c.s);
        a.set_row(k, &row.transpose());
        rhs[k] = -rp.dot(&c.b);
    }
    let svd = a.svd(true, true);
    let v_t = svd.v_t.as_ref().expect("requested V");
    let u = svd.u.as_ref().expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    if sv[0] == 0.0 || sv[1] <= rank_eps * sv[0] {
        return Err(SolverError::TranslationRank(if sv[0] == 0.0 { 0 } else { 1 }));
    }
    let rank = if sv[2] > rank_eps * sv[0] { 3 } else { 2 };
    let right = |i: usize| Vector3::new(v_t[(i, 0)], v_t[(i, 1)], v_t[(i, 2)]);
    let mut t = Vector3::zeros();
    for &i in &order[..rank] {
        t += u.column(i).dot(&rhs) / svd.singular_values[i] * right(i);
    }
    if rank == 3 {
        Ok(Translation::Point(t))
    } else {
        let dir = right(order[2]).normalize();
        Ok(Translation::Line(LineParametrization {
            t_base: t,
            t_dir: dir,
            alpha: None,
        }))
    }
}

fn constraint_residuals(q: &Quaternion, t: &Vector3<f64>, constraints: &[ConstraintCoefficients]) -> DVector<f64> {
    let pose = Pose::new(*q, *t);
    DVector::from_iterator(constraints.len(), constraints.iter().map(|c| residual_eq3(&pose, c)))
}

/// Newton steps on the match equations in rotation and center. Eigenvalues
/// carry the eigen solver's error; a few steps take well-conditioned roots to
/// rounding level. Steps that do not shrink the residual are rejected, so
/// ill-conditioned roots are left where they are.
pub fn refine_pose(q: Quaternion, t: Vector3<f64>, constraints: &[ConstraintCoefficients]) -> (Quaternion, Vector3<f64>) {
    let (mut q, mut t) = (q, t);
    let mut r = constraint_residuals(&q, &t, constraints);
    for _ in 0..4 {
        let rot = q.to_rotation_matrix();
        let mut jac = DMatrix::zeros(constraints.len(), 6);
        for (k, c) in constraints.iter().enumerate() {
            // With R ← R·exp([ω]×): d/dω (Rp)·v = p × Rᵀv, and d/dt = (Rp) × s.
            let v = c.s.cross(&t) + c.b;
            let rp = rot * c.p;
            let dw = c.p.cross(&(rot.transpose() * v));
            let dt = rp.cross(&c.s);
            for j in 0..3 {
                jac[(k, j)] = dw[j];
                jac[(k, 3 + j)] = dt[j];
            }
        }
        let svd = jac.svd(true, true);
        let Ok(step) = svd.solve(&(-&r), 1e-12 * svd.singular_values.max()) else {
            break;
        };
        let w = Vector3::new(step[0], step[1], step[2]);
        let dq = if w.norm() > 0.0 {
            Quaternion::from_axis_angle(&w, w.norm())
        } else {
            Quaternion::new(1.0, 0.0, 0.0, 0.0)
        };
        let q_new = hamilton_product(&q, &dq).normalized();
        let t_new = t + Vector3::new(step[3], step[4], step[5]);
        let r_new = constraint_residuals(&q_new, &t_new, constraints);
        if !(r_new.norm() < r.norm()) {
            break;
        }
        (q, t, r) = (q_new, t_new, r_new);
    }
    (q, t)
}

/// Fixes the position along the line from a 3D point seen in the new image:
/// `p × Rᵀ(P − t′ − αt″) = 0`, solved for `α` by least squares.
pub fn resolve_scale(line: &LineParametrization, q: &Quaternion, triple: &TripleMatch) -> Result<Vector3<f64>, SolverError> {
    let rt = q.normalized().to_rotation_matrix().transpose();
    let p = triple.target_point;
    let a = p.cross(&(rt * line.t_dir));
    let b = p.cross(&(rt * (triple.point3d - line.t_base)));
    let aa = a.norm_squared();
    if aa <= 1e-24 * b.norm_squared().max(1.0) {
        return Err(SolverError::ScaleUnresolvable);
    }
    Ok(line.point(a.dot(&b) / aa))
}

/// Matches (and the triple match) whose triangulated point falls behind a camera.
pub fn cheirality_violations(scene: &Scene, pose: &Pose) -> usize {
    let r = pose.rotation_matrix();
    let mut count = 0;
    for m in &scene.matches {
        let Some(cam) = scene.camera(&m.ref_camera) else {
            continue;
        };
        let d1 = r * m.target_point;
        let d2 = cam.pose.rotation_matrix() * m.ref_point;
        let rel = cam.pose.translation - pose.translation;
        let (a, b, c) = (d1.dot(&d1), d1.dot(&d2), d2.dot(&d2));
        let (e, f) = (d1.dot(&rel), d2.dot(&rel));
        let den = a * c - b * b;
        if den <= 1e-12 * a * c {
            continue;
        }
        let l1 = (c * e - b * f) / den;
        let l2 = (b * e - a * f) / den;
        if l1 <= 0.0 || l2 <= 0.0 {
            count += 1;
        }
    }
    if let Some(t) = &scene.triple_match {
        if pose.world_to_camera(&t.point3d).dot(&t.target_point) <= 0.0 {
            count += 1;
        }
    }
    count
}

fn max_normalized_residual(pose: &Pose, constraints: &[ConstraintCoefficients]) -> f64 {
    constraints
        .iter()
        .map(|c| {
            let scale = c.residual_scale(&pose.translation);
            if scale > 0.0 {
                residual_eq3(pose, c).abs() / scale
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn quaternion_lex(a: &Quaternion, b: &Quaternion) -> Ordering {
    a.to_array()
        .iter()
        .zip(b.to_array().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn rank_cmp(a: &PoseCandidate, b: &PoseCandidate, cheirality: bool) -> Ordering {
    let first = if cheirality {
        a.cheirality_violations.cmp(&b.cheirality_violations)
    } else {
        Ordering::Equal
    };
    first
        .then_with(|| a.ranking_error().total_cmp(&b.ranking_error()))
        .then_with(|| a.eq3_residual_norm.total_cmp(&b.eq3_residual_norm))
        .then_with(|| quaternion_lex(&a.quaternion, &b.quaternion))
}

/// Stable sort by Sampson total (plus the triple match error when present),
/// with residual and quaternion tie-breaks.
/// With `cheirality` set, the number of cheirality violations is the
/// leading key.
pub fn rank_solutions(mut candidates: Vec<PoseCandidate>, cheirality: bool) -> Vec<PoseCandidate> {
    candidates.sort_by(|a, b| rank_cmp(a, b, cheirality));
    candidates
}

impl LineParametrization {
    /// Distance from `x` to the line.
    pub fn distance(&self, x: &Vector3<f64>) -> f64 {
        let off = x - self.t_base;
        (off - self.t_dir * off.dot(&self.t_dir)).norm()
    }
}

/// Drops candidates that repeat an earlier (better ranked) one. A point
/// candidate lying on the line of an unresolved line candidate with the same
/// rotation is one member of that family and is dropped too.
pub fn dedup_candidates(candidates: Vec<PoseCandidate>, tol: f64) -> Vec<PoseCandidate> {
    let families: Vec<(Quaternion, LineParametrization)> = candidates
        .iter()
        .filter_map(|c| c.line.filter(|l| l.alpha.is_none()).map(|l| (c.quaternion, l)))
        .collect();
    let mut kept: Vec<PoseCandidate> = Vec::with_capacity(candidates.len());
    for c in candidates {
        let on_family = c.line.is_none()
            && families.iter().any(|(q, l)| {
                q.angle_to(&c.quaternion) <= tol && l.distance(&c.pose.translation) <= tol * l.t_base.norm().max(1.0)
            });
        if on_family {
            continue;
        }
        let dup = kept.iter().any(|k| {
            k.quaternion.angle_to(&c.quaternion) <= tol
                && (k.pose.translation - c.pose.translation).norm() <= tol * k.pose.translation.norm().max(1.0)
        });
        if !dup {
            kept.push(c);
        }
    }
    kept
}

/// Distance in the conditioned frame (RMS camera distance √2) below which a
/// candidate center is considered to coincide with a reference center.
const COINCIDENT_CENTER: f64 = 1e-6;

/// Everything needed to turn a rotation hypothesis into a scored candidate.
struct Context<'a> {
    world: &'a Scene,
    world_constraints: Vec<ConstraintCoefficients>,
    frame: Frame,
    local_constraints: Vec<ConstraintCoefficients>,
    local_triple: Option<TripleMatch>,
    /// Centers of the cameras that supply matches, in the conditioned frame.
    local_centers: Vec<Vector3<f64>>,
    opts: &'a SolverOptions,
}

impl<'a> Context<'a> {
    fn new(world: &'a Scene, frame: Frame, opts: &'a SolverOptions) -> Result<Self, SolverError> {
        let local = frame.apply_scene(world);
        let local_centers = referenced_cameras(&local).iter().map(|c| c.pose.translation).collect();
        Ok(Self {
            world,
            world_constraints: world.constraints()?,
            frame,
            local_constraints: local.constraints()?,
            local_triple: local.triple_match,
            local_centers,
            opts,
        })
    }

    /// Candidate from a rotation in the conditioned frame, or `None` when the
    /// pose fails the residual check.
    fn candidate(&self, q_local: Quaternion) -> Result<Option<PoseCandidate>, SolverError> {
        let q_local = q_local.normalized();
        let (q_local, t_local, line_local) = match recover_translation(&q_local, &self.local_constraints, self.opts.rank_eps) {
            Ok(Translation::Point(t)) => {
                let (q, t) = refine_pose(q_local, t, &self.local_constraints);
                (q, t, None)
            }
            Ok(Translation::Line(mut line)) => match &self.local_triple {
                Some(triple) => {
                    let t = resolve_scale(&line, &q_local, triple)?;
                    line.alpha = Some((t - line.t_base).dot(&line.t_dir));
                    (q_local, t, Some(line))
                }
                None => (q_local, line.t_base, Some(line)),
            },
            Err(SolverError::TranslationRank(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        // A center on top of a matched reference camera zeroes that camera's
        // constraints for every rotation. Such roots belong to a degenerate
        // family rather than to the scene.
        if line_local.is_none_or(|l| l.alpha.is_some())
            && self.local_centers.iter().any(|c| (c - t_local).norm() <= COINCIDENT_CENTER)
        {
            return Ok(None);
        }
        let pose = self.frame.restore_pose(&Pose::new(q_local, t_local));
        let line = line_local.map(|l| self.frame.restore_line(&l));
        let residual = max_normalized_residual(&pose, &self.world_constraints);
        if !(residual <= self.opts.residual_tol) {
            return Ok(None);
        }
        // With the position undetermined along the line, score at an offset
        // point so the new center cannot coincide with a reference center.
        let scoring = match line {
            Some(l) if l.alpha.is_none() => {
                let offset = 0.618_034 * (1.0 + l.t_base.norm());
                Pose::new(pose.rotation, l.point(offset))
            }
            _ => pose,
        };
        Ok(Some(PoseCandidate {
            pose,
            quaternion: pose.rotation,
            sampson_total: self.world.sampson_total(&scoring),
            eq3_residual_norm: residual,
            translation_rank: if line.is_some() { 2 } else { 3 },
            line,
            cheirality_violations: cheirality_violations(self.world, &scoring),
            triple_error: self.world.triple_match.as_ref().map(|t| triple_reprojection_error(&scoring, t)),
        }))
    }
}

fn is_real(z: Complex64) -> bool {
    z.im.abs() < REAL_TOL * (1.0 + z.re.abs())
}

/// `(q₃, q₄)` from a null vector of `M(q₂)` indexed by the pencil columns.
///
/// Each coordinate is read as the ratio of two entries that differ by one
/// power of it, using the pair with the largest denominator. Near a rotation
/// angle of π the monomial `1` entry is tiny, so dividing by it would lose
/// all precision.
pub fn extract_q34(pencil: &DixonPencil, v: &DVector<Complex64>) -> Option<(Complex64, Complex64)> {
    let ratio = |da: u32, db: u32| -> Option<Complex64> {
        let mut best: Option<(f64, Complex64)> = None;
        for a in 0..=6u32 {
            for b in 0..=(6 - a) {
                let (Some(lo), Some(hi)) = (pencil.column_of(a, b), pencil.column_of(a + da, b + db)) else {
                    continue;
                };
                let mag = v[lo].norm();
                if mag > 0.0 && best.is_none_or(|(m, _)| mag > m) {
                    best = Some((mag, v[hi] / v[lo]));
                }
            }
        }
        best.map(|(_, r)| r)
    };
    Some((ratio(1, 0)?, ratio(0, 1)?))
}

struct PathOutput {
    candidates: Vec<PoseCandidate>,
    complex_count: usize,
    real_count: usize,
    discarded: usize,
    largest_root: f64,
}

fn pencil_for(constraints: &[ConstraintCoefficients], square: bool) -> Result<DixonPencil, SolverError> {
    let sys = dixon::build_system(constraints)?;
    let delta = dixon::dixon_polynomial(&sys);
    let pencil = dixon::collect_pencil_with(&delta, ZERO_COLUMN_EPS)?;
    if square && pencil.rows() != pencil.cols() {
        return Err(DixonError::Shape {
            rows: pencil.rows(),
            cols: pencil.cols(),
            expected: dixon::GENERIC_SIZE,
        }
        .into());
    }
    Ok(pencil)
}

fn generic_path(ctx: &Context<'_>) -> Result<PathOutput, SolverError> {
    let pencil = pencil_for(&ctx.local_constraints, true)?;
    let report = polyeig::solve_polynomial(&MatrixPolynomial::from(&pencil))?;
    let mut out = PathOutput {
        candidates: Vec::new(),
        complex_count: report.finite_count,
        real_count: 0,
        discarded: 0,
        largest_root: 0.0,
    };
    for sol in report.solutions.iter().filter(|s| s.is_real()) {
        out.real_count += 1;
        let q2 = sol.lambda.re;
        let points = null_space_points(&pencil, q2);
        if points.is_empty() {
            out.discarded += 1;
            continue;
        }
        out.largest_root = out.largest_root.max(q2.abs());
        for (q3, q4) in points {
            match ctx.candidate(Quaternion::new(1.0, q2, q3, q4))? {
                Some(c) => out.candidates.push(c),
                None => out.discarded += 1,
            }
        }
    }
    Ok(out)
}

/// Real `(q₃, q₄)` pairs supported by the null space of `M(q₂)`.
///
/// At a multiple root the null space holds several vectors and any single
/// one of them is a mixture. Rows for monomials `m` and `q₃·m` give a small
/// matrix `D` with `N[q₃·m] = N[m] D`, whose eigenvectors pick out the
/// monomial vectors inside the span. With a one-dimensional null space this
/// reduces to reading ratios off the null vector.
pub fn null_space_points(pencil: &DixonPencil, q2: f64) -> Vec<(f64, f64)> {
    // For rotations near a half turn q₂, q₃ and q₄ all grow together, so the
    // monomial vector spans many orders of magnitude. Working with q/s and
    // rows scaled to unit size keeps the null space resolvable.
    let scale = q2.abs().max(1.0);
    let mut m = pencil.eval(q2);
    for (j, mono) in pencil.col_monomials.iter().enumerate() {
        m.column_mut(j).scale_mut(scale.powi(mono.total_degree() as i32));
    }
    for mut row in m.row_iter_mut() {
        let r = row.amax();
        if r > 0.0 {
            row.scale_mut(1.0 / r);
        }
    }
    let n = m.ncols();
    let svd = m.svd(false, true);
    let Some(v_t) = svd.v_t else {
        return Vec::new();
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let rank = gap_rank(&sv, NULL_FLOOR, ELIMINATION_GAP).min(n - 1);
    let basis = DMatrix::from_fn(n, n - rank, |i, j| v_t[(order[rank + j], i)]);

    // Only the rows of pure q₃/q₄ monomials carry the rotation; directions
    // that differ in the depth variables alone vanish there.
    let mut pure = Vec::new();
    for a in 0..=6u32 {
        for b in 0..=(6 - a) {
            if let Some(col) = pencil.column_of(a, b) {
                pure.push((a, b, col));
            }
        }
    }
    let rows: Vec<usize> = pure.iter().map(|p| p.2).collect();
    let restricted = basis.select_rows(&rows).svd(true, false);
    let Some(u) = restricted.u else {
        return Vec::new();
    };
    let mut order: Vec<usize> = (0..restricted.singular_values.len()).collect();
    order.sort_by(|&i, &j| restricted.singular_values[j].total_cmp(&restricted.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| restricted.singular_values[i]).collect();
    let k = gap_rank(&sv, RANGE_FLOOR, ELIMINATION_GAP).max(1);
    let range = DMatrix::from_fn(rows.len(), k, |i, j| u[(i, order[j])]);

    if k == 1 {
        let mut v = DVector::<Complex64>::zeros(n);
        for (i, &col) in rows.iter().enumerate() {
            v[col] = Complex64::new(range[(i, 0)], 0.0);
        }
        return match extract_q34(pencil, &v) {
            Some((q3, q4)) if is_real(q3) && is_real(q4) && q3.re.is_finite() && q4.re.is_finite() => {
                vec![(q3.re * scale, q4.re * scale)]
            }
            _ => Vec::new(),
        };
    }

    let index = |a: u32, b: u32| pure.iter().position(|p| p.0 == a && p.1 == b);
    let shift_eigenvalues = |da: u32, db: u32| -> Vec<f64> {
        let mut base = Vec::new();
        let mut shifted = Vec::new();
        for (i, &(a, b, _)) in pure.iter().enumerate() {
            if let Some(j) = index(a + da, b + db) {
                base.push(i);
                shifted.push(j);
            }
        }
        let lo = range.select_rows(&base);
        let hi = range.select_rows(&shifted);
        match lo.svd(true, true).solve(&hi, 1e-14) {
            Ok(d) => cluster_means(d.complex_eigenvalues().iter().filter(|z| is_real(**z)).map(|z| z.re).collect()),
            Err(_) => Vec::new(),
        }
    };
    let q3s = shift_eigenvalues(1, 0);
    let q4s = shift_eigenvalues(0, 1);

    // Keep the pairs whose monomial vector lies in the null space.
    let projector = &range * range.transpose();
    let mut points = Vec::new();
    for &q3 in &q3s {
        for &q4 in &q4s {
            let m = DVector::from_iterator(pure.len(), pure.iter().map(|&(a, b, _)| q3.powi(a as i32) * q4.powi(b as i32)));
            let m = m.normalize();
            if (&m - &projector * &m).norm() <= PAIRING_TOL {
                points.push((q3 * scale, q4 * scale));
            }
        }
    }
    points
}

/// Replaces each cluster of nearly equal values by its mean. A defective
/// eigenvalue splits into a cluster whose mean is far more accurate than any
/// member.
fn cluster_means(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for v in values {
        match out.last_mut() {
            Some((sum, count)) if (v - *sum / *count as f64).abs() <= CLUSTER_TOL * (1.0 + v.abs()) => {
                *sum += v;
                *count += 1;
            }
            _ => out.push((v, 1)),
        }
    }
    out.into_iter().map(|(sum, count)| sum / count as f64).collect()
}

/// Relative spread of eigenvalues treated as one defective eigenvalue.
const CLUSTER_TOL: f64 = 1e-4;
/// Largest distance of a unit monomial vector from the null space for a
/// `(q₃, q₄)` pair to be accepted.
const PAIRING_TOL: f64 = 1e-5;

/// Relative singular value below which `M(q₂)` may be rank deficient.
const NULL_FLOOR: f64 = 1e-9;
/// Relative singular value below which a null direction is taken to be
/// invisible in the q₃/q₄ rows.
const RANGE_FLOOR: f64 = 1e-6;

/// Rows and columns of a maximal-rank square submatrix, chosen by
/// column-pivoted QR of `M` at a fixed generic value of the hidden variable.
pub fn maximal_rank_selection(pencil: &DixonPencil, rel_tol: f64) -> (Vec<usize>, Vec<usize>) {
    let m = pencil.eval(0.618_033_988_749_895) / pencil.norm().max(f64::MIN_POSITIVE);
    let pivoted = |a: &DMatrix<f64>| -> (Vec<usize>, usize) {
        let qr = a.clone().col_piv_qr();
        let r = qr.r();
        let top = r[(0, 0)].abs();
        let rank = (0..r.nrows().min(r.ncols())).take_while(|&i| r[(i, i)].abs() > rel_tol * top).count();
        // Recover the column order by permuting an index row.
        let mut marker = DMatrix::from_fn(1, a.ncols(), |_, j| j as f64);
        qr.p().permute_columns(&mut marker);
        (marker.iter().map(|&x| x as usize).collect(), rank)
    };
    let (cols_order, rank) = pivoted(&m);
    let mut cols: Vec<usize> = cols_order[..rank].to_vec();
    cols.sort_unstable();
    let sub = m.select_columns(&cols).transpose();
    let (rows_order, _) = pivoted(&sub);
    let mut rows: Vec<usize> = rows_order[..rank].to_vec();
    rows.sort_unstable();
    (rows, cols)
}

/// Numerical rank from descending singular values: the cut is placed at
/// the widest relative gap below `floor · σ₀`, provided that gap spans at
/// least `min_gap`; otherwise every value counts.
fn gap_rank(sv: &[f64], floor: f64, min_gap: f64) -> usize {
    let Some(&top) = sv.first() else {
        return 0;
    };
    if top == 0.0 {
        return 0;
    }
    let mut best = (min_gap, sv.len());
    for j in 0..sv.len() {
        if sv[j] > floor * top {
            continue;
        }
        let above = if j == 0 { top } else { sv[j - 1] };
        let ratio = above.max(top * f64::EPSILON) / sv[j].max(top * f64::EPSILON);
        if ratio > best.0 {
            best = (ratio, j);
        }
    }
    best.1
}

/// Coefficients `c` with `Σ cⱼ v[keep[j]] = 0` for every null vector `v` of
/// `m`, obtained by annihilating all other columns from the left.
pub fn eliminate_onto(m: &DMatrix<f64>, keep: &[usize]) -> Option<DVector<f64>> {
    let n = m.nrows();
    let others: Vec<usize> = (0..m.ncols()).filter(|j| !keep.contains(j)).collect();
    let a = faer::Mat::from_fn(n, others.len(), |i, j| m[(i, others[j])]);
    let svd = a.svd().ok()?;
    let sv: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let rank = gap_rank(&sv, ELIMINATION_FLOOR, ELIMINATION_GAP).min(others.len());
    if rank >= n {
        return None;
    }
    let u = svd.U();
    let b = m.select_columns(keep);
    let mut c = DMatrix::<f64>::zeros(n - rank, keep.len());
    for (r, i) in (rank..n).enumerate() {
        for (col, bj) in b.column_iter().enumerate() {
            c[(r, col)] = (0..n).map(|k| u[(k, i)] * bj[k]).sum();
        }
    }
    let svd_c = c.svd(false, true);
    let v_t = svd_c.v_t?;
    let top = (0..svd_c.singular_values.len())
        .max_by(|&i, &j| svd_c.singular_values[i].total_cmp(&svd_c.singular_values[j]))?;
    if svd_c.singular_values[top] <= 1e-12 * m.norm() {
        return None;
    }
    Some(v_t.row(top).transpose())
}

/// Singular values above this fraction of the largest are never treated as
/// zero during elimination.
const ELIMINATION_FLOOR: f64 = 1e-10;
/// Smallest ratio between consecutive singular values accepted as a rank gap.
const ELIMINATION_GAP: f64 = 1e3;

fn four_two_path(ctx: &Context<'_>) -> Result<PathOutput, SolverError> {
    let pencil = pencil_for(&ctx.local_constraints, false)?;
    let (rows, cols) = maximal_rank_selection(&pencil, 1e-9);
    let sub = pencil.select(&rows, &cols);
    // faer's QZ stalls on this companion pencil, so the shift-inverted
    // standard eigenproblem is used instead.
    let sub_poly = MatrixPolynomial::from(&sub);
    let report = polyeig::solve_polynomial_shifted(&sub_poly)?;
    let mut out = PathOutput {
        candidates: Vec::new(),
        complex_count: report.finite_count,
        real_count: 0,
        discarded: 0,
        largest_root: 0.0,
    };
    let q4_cols: Option<Vec<usize>> = (0..=5).map(|k| pencil.column_of(0, k)).collect();
    let q3_cols: Option<Vec<usize>> = (0..=4)
        .map(|k| pencil.column_of(0, k))
        .chain(std::iter::once(pencil.column_of(1, 0)))
        .collect();
    let (Some(q4_cols), Some(q3_cols)) = (q4_cols, q3_cols) else {
        return Err(DixonError::Vanished.into());
    };
    let mut roots: Vec<f64> = report
        .solutions
        .iter()
        .filter(|s| s.is_real())
        .map(|s| polyeig::polish_real_root(&sub_poly, s.lambda.re))
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-10 * (1.0 + b.abs()));
    for q2 in roots {
        out.real_count += 1;
        let m = pencil.eval(q2);
        let Some(quintic) = eliminate_onto(&m, &q4_cols) else {
            out.discarded += 1;
            continue;
        };
        let Some(lin) = eliminate_onto(&m, &q3_cols) else {
            out.discarded += 1;
            continue;
        };
        let q4s = polyeig::real_roots_univariate(quintic.as_slice()).unwrap_or_default();
        let mut best: Option<PoseCandidate> = None;
        for q4 in q4s {
            let c5 = lin[5];
            let rest: f64 = (0..5).rev().fold(0.0, |acc, k| acc * q4 + lin[k]);
            if c5.abs() <= 1e-12 * lin.norm() {
                continue;
            }
            let q3 = -rest / c5;
            if let Some(c) = ctx.candidate(Quaternion::new(1.0, q2, q3, q4))? {
                let better = best.as_ref().is_none_or(|b| {
                    c.sampson_total
                        .total_cmp(&b.sampson_total)
                        .then_with(|| c.eq3_residual_norm.total_cmp(&b.eq3_residual_norm))
                        .is_lt()
                });
                if better {
                    best = Some(c);
                }
            }
        }
        match best {
            Some(c) => {
                out.largest_root = out.largest_root.max(q2.abs());
                out.candidates.push(c);
            }
            None => out.discarded += 1,
        }
    }
    Ok(out)
}

fn check_scene(scene: &Scene) -> Result<Configuration, SolverError> {
    if scene.matches.len() != 6 {
        return Err(SolverError::MatchCount(scene.matches.len()));
    }
    // Classify first so that six matches from one camera are reported as an
    // unsupported configuration rather than a validation failure.
    let config = detect_configuration(scene);
    match config.kind {
        ConfigurationKind::FiveOne => Err(SolverError::Unsupported {
            kind: config.kind,
            reason: "five matches from one camera require a five-point essential matrix solver",
        }),
        ConfigurationKind::Invalid => Err(SolverError::Unsupported {
            kind: config.kind,
            reason: "all matches come from one camera, so the problem is ill-posed (the scale of the translation is unobservable)",
        }),
        _ => {
            scene.validate()?;
            Ok(config)
        }
    }
}

fn run(scene: &Scene, config: Configuration, opts: &SolverOptions) -> Result<SolutionSet, SolverError> {
    let path = |frame: Frame| -> Result<PathOutput, SolverError> {
        let ctx = Context::new(scene, frame, opts)?;
        match config.kind {
            ConfigurationKind::FourTwo => four_two_path(&ctx),
            _ => generic_path(&ctx),
        }
    };
    let base = Frame::conditioning(scene);
    let first = path(base)?;
    let mut diagnostics = Diagnostics {
        complex_count: first.complex_count,
        real_count: first.real_count,
        config: config.clone(),
        retried: false,
        discarded: first.discarded,
    };
    let mut candidates = first.candidates;
    if let Some(retry) = &opts.retry {
        let best_sampson = candidates.iter().map(|c| c.sampson_total).fold(f64::INFINITY, f64::min);
        let expected = match config.kind {
            ConfigurationKind::Generic => retry.expected_complex,
            _ => 0,
        };
        let trigger = candidates.is_empty()
            || best_sampson > retry.sampson_threshold
            || first.complex_count < expected
            || first.largest_root > retry.large_root;
        if trigger {
            let mut rng = ChaCha8Rng::seed_from_u64(retry.seed);
            let g = random_rotation(&mut rng).to_rotation_matrix();
            if let Ok(second) = path(base.rotated(g)) {
                diagnostics.retried = true;
                candidates.extend(second.candidates);
            }
        }
    }
    let ranked = rank_solutions(candidates, opts.cheirality_ranking);
    Ok(SolutionSet {
        candidates: dedup_candidates(ranked, opts.dedup_tol),
        diagnostics,
    })
}

/// Recovers all real pose candidates for the new camera from six matches.
///
/// Scenes with four matches from one camera are routed to [`solve_pose_42`].
pub fn solve_pose(scene: &Scene, opts: &SolverOptions) -> Result<SolutionSet, SolverError> {
    let config = check_scene(scene)?;
    run(scene, config, opts)
}

/// Solver for four matches from one camera, where the pencil is
/// identically rank deficient.
pub fn solve_pose_42(scene: &Scene, opts: &SolverOptions) -> Result<SolutionSet, SolverError> {
    let config = check_scene(scene)?;
    if config.kind != ConfigurationKind::FourTwo {
        return Err(SolverError::Unsupported {
            kind: config.kind,
            reason: "the rank-deficient path needs exactly four matches from one camera",
        });
    }
    run(scene, config, opts)
}
