//! Seeded synthetic scenes: random calibrated reference cameras, a new camera
//! with known pose, and noisy matches between them.

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{CalibratedCamera, MatchPair, Pose, Quaternion, Scene, TripleMatch};

/// Focal length used to convert pixel noise into normalized coordinates.
pub const DEFAULT_FOCAL_PX: f64 = 800.0;

/// Distance between the outermost reference cameras in collinear scenes.
pub const COLLINEAR_BASELINE: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SceneGeometry {
    /// Cameras scattered around the scene.
    General,
    /// Reference cameras on a line, the new camera `deviation` units off it.
    Collinear { deviation: f64 },
    /// Four matches from the first camera and two from the second.
    FourTwo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_cameras: usize,
    pub n_points: usize,
    /// Standard deviation of Gaussian image noise in pixels.
    pub noise_px: f64,
    pub focal_px: f64,
    pub outlier_fraction: f64,
    pub geometry: SceneGeometry,
    pub triple_match: bool,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Noise-free minimal scene: two reference cameras, three matches each.
    pub fn minimal(seed: u64) -> Self {
        Self {
            n_cameras: 2,
            n_points: 6,
            noise_px: 0.0,
            focal_px: DEFAULT_FOCAL_PX,
            outlier_fraction: 0.0,
            geometry: SceneGeometry::General,
            triple_match: false,
            seed,
        }
    }

    pub fn with_geometry(mut self, geometry: SceneGeometry) -> Self {
        self.geometry = geometry;
        self
    }
}

/// A generated scene with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub scene: Scene,
    pub truth: Pose,
    /// `true` for matches whose target point was replaced by a wrong one.
    pub outliers: Vec<bool>,
    /// The 3D points behind each match (before outlier replacement).
    pub points: Vec<Vector3<f64>>,
}

/// Uniformly distributed rotation.
pub fn random_rotation(rng: &mut impl Rng) -> Quaternion {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let q = Quaternion::from_array(v);
        if q.norm() > 1e-6 {
            return q.normalized().canonical();
        }
    }
}

/// Rotation whose camera z-axis points from `center` towards `target`, with
/// a random roll.
fn look_at(center: &Vector3<f64>, target: &Vector3<f64>, rng: &mut impl Rng) -> Matrix3<f64> {
    let z = (target - center).normalize();
    loop {
        let r = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let x = r - z * r.dot(&z);
        if x.norm() > 1e-3 {
            let x = x.normalize();
            let y = z.cross(&x);
            return Matrix3::from_columns(&[x, y, z]);
        }
    }
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

struct Layout {
    refs: Vec<Pose>,
    new: Pose,
    scene_center: Vector3<f64>,
}

fn general_layout(n: usize, rng: &mut impl Rng) -> Layout {
    let scene_center = Vector3::zeros();
    let place = |rng: &mut ChaCha8Rng| {
        let c = random_unit(rng) * rng.random_range(4.0..6.0);
        let aim = scene_center + Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3));
        Pose::from_matrix(&look_at(&c, &aim, rng), c)
    };
    let mut inner = ChaCha8Rng::seed_from_u64(rng.random());
    let refs = (0..n).map(|_| place(&mut inner)).collect();
    let new = place(&mut inner);
    Layout {
        refs,
        new,
        scene_center,
    }
}

fn collinear_layout(n: usize, deviation: f64, rng: &mut impl Rng) -> Layout {
    let scene_center = Vector3::new(0.0, 0.0, 5.0);
    let half = COLLINEAR_BASELINE / 2.0;
    let xs: Vec<f64> = if n == 1 {
        vec![-half]
    } else {
        (0..n).map(|i| -half + COLLINEAR_BASELINE * i as f64 / (n - 1) as f64).collect()
    };
    let aim = |c: Vector3<f64>, rng: &mut ChaCha8Rng| {
        let target = scene_center + Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3));
        Pose::from_matrix(&look_at(&c, &target, rng), c)
    };
    let mut inner = ChaCha8Rng::seed_from_u64(rng.random());
    let refs = xs.iter().map(|&x| aim(Vector3::new(x, 0.0, 0.0), &mut inner)).collect();
    let x_new = inner.random_range(-0.8 * half..0.8 * half);
    let off = {
        let a = inner.random_range(0.0..std::f64::consts::TAU);
        Vector3::new(0.0, a.cos(), a.sin()) * deviation
    };
    let new = aim(Vector3::new(x_new, 0.0, 0.0) + off, &mut inner);
    Layout {
        refs,
        new,
        scene_center,
    }
}

fn project(pose: &Pose, p: &Vector3<f64>) -> Option<[f64; 2]> {
    let c = pose.world_to_camera(p);
    (c.z > 1e-3).then(|| [c.x / c.z, c.y / c.z])
}

/// Generates a scene from `spec`. Identical specs give identical scenes.
pub fn generate_scene(spec: &SyntheticSpec) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_cams = match spec.geometry {
        SceneGeometry::FourTwo => spec.n_cameras.max(2),
        _ => spec.n_cameras.max(2),
    };
    let sigma = spec.noise_px / spec.focal_px;
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite noise");
    for _attempt in 0..1000 {
        let layout = match spec.geometry {
            SceneGeometry::Collinear { deviation } => collinear_layout(n_cams, deviation, &mut rng),
            _ => general_layout(n_cams, &mut rng),
        };
        let assignment: Vec<usize> = match spec.geometry {
            SceneGeometry::FourTwo => (0..spec.n_points)
                .map(|i| if i % 6 < 4 { 0 } else { 1 })
                .collect(),
            _ => (0..spec.n_points).map(|i| i * n_cams / spec.n_points.max(1)).collect(),
        };
        let sample_point = |rng: &mut ChaCha8Rng| layout.scene_center + Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let mut points = Vec::with_capacity(spec.n_points);
        let mut matches = Vec::with_capacity(spec.n_points);
        let mut ok = true;
        for &cam in &assignment {
            let mut found = false;
            for _ in 0..100 {
                let p = sample_point(&mut rng);
                if let (Some(a), Some(b)) = (project(&layout.new, &p), project(&layout.refs[cam], &p)) {
                    points.push(p);
                    let jitter = |v: [f64; 2], rng: &mut ChaCha8Rng| {
                        if sigma > 0.0 {
                            [v[0] + noise.sample(rng), v[1] + noise.sample(rng)]
                        } else {
                            v
                        }
                    };
                    let a = jitter(a, &mut rng);
                    let b = jitter(b, &mut rng);
                    matches.push(MatchPair::from_image(a, format!("cam{cam}"), b));
                    found = true;
                    break;
                }
            }
            if !found {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }

        let n_out = (spec.outlier_fraction * spec.n_points as f64).round() as usize;
        let mut order: Vec<usize> = (0..spec.n_points).collect();
        order.shuffle(&mut rng);
        let mut outliers = vec![false; spec.n_points];
        for &i in order.iter().take(n_out) {
            // Replace the target point by the projection of an unrelated point
            // far enough from the true one to be a genuine mismatch.
            loop {
                let q = sample_point(&mut rng);
                if let Some(a) = project(&layout.new, &q) {
                    let t = matches[i].target_point;
                    if (a[0] - t.x).hypot(a[1] - t.y) > 0.05 {
                        matches[i].target_point = Vector3::new(a[0], a[1], 1.0);
                        outliers[i] = true;
                        break;
                    }
                }
            }
        }

        let triple_match = if spec.triple_match {
            let mut tm = None;
            for _ in 0..100 {
                let p = sample_point(&mut rng);
                if let Some(a) = project(&layout.new, &p) {
                    let a = if sigma > 0.0 { [a[0] + noise.sample(&mut rng), a[1] + noise.sample(&mut rng)] } else { a };
                    tm = Some(TripleMatch {
                        point3d: p,
                        target_point: Vector3::new(a[0], a[1], 1.0),
                    });
                    break;
                }
            }
            tm
        } else {
            None
        };

        let cameras = layout
            .refs
            .iter()
            .enumerate()
            .map(|(i, pose)| CalibratedCamera::new(format!("cam{i}"), *pose))
            .collect();
        return SyntheticScene {
            scene: Scene {
                cameras,
                matches,
                triple_match,
            },
            truth: layout.new,
            outliers,
            points,
        };
    }
    panic!("could not generate a scene satisfying cheirality after 1000 attempts");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::residual_eq3;

    #[test]
    fn exact_scene_satisfies_constraints() {
        for seed in 0..20 {
            let s = generate_scene(&SyntheticSpec::minimal(seed));
            for c in s.scene.constraints().unwrap() {
                assert!(residual_eq3(&s.truth, &c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn collinear_centers() {
        let spec = SyntheticSpec::minimal(3).with_geometry(SceneGeometry::Collinear { deviation: 0.0 });
        let s = generate_scene(&spec);
        let centers: Vec<_> = s.scene.cameras.iter().map(|c| c.pose.translation).chain([s.truth.translation]).collect();
        let mean = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
        let m = nalgebra::DMatrix::from_fn(centers.len(), 3, |i, j| centers[i][j] - mean[j]);
        let sv = m.singular_values();
        assert!(sv[1] < 1e-12, "{sv}");
    }

    #[test]
    fn exact_outlier_count() {
        let mut spec = SyntheticSpec::minimal(5);
        spec.n_points = 100;
        spec.outlier_fraction = 0.3;
        let s = generate_scene(&spec);
        assert_eq!(s.outliers.iter().filter(|o| **o).count(), 30);
        assert_eq!(s.scene.matches.len(), 100);
    }

    #[test]
    fn reproducible() {
        let spec = SyntheticSpec::minimal(11);
        assert_eq!(generate_scene(&spec).scene, generate_scene(&spec).scene);
    }
}
