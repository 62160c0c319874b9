//! JSON scene and truth files.
//!
//! Cameras store their center `t` and the camera-to-world rotation `R`, so a
//! world point `P` projects as `p ∝ Rᵀ(P − t)`. Files written with the other
//! common convention (`t = −Rᵀc`) parse fine and give wrong poses, so check
//! this first when results look scrambled.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use respose_core::robust::SyntheticSpec;
use respose_core::{CalibratedCamera, MatchPair, Pose, Quaternion, Scene, TripleMatch};
use serde::{Deserialize, Serialize};

use crate::{CliError, FORMAT_VERSION};

/// Largest disagreement allowed between a quaternion and a matrix given
/// for the same camera, and between a rotation matrix and orthonormality.
pub const ROTATION_AGREEMENT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quaternion: Option<[f64; 4]>,
    /// Row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub id: String,
    pub rotation: RotationEntry,
    pub center: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchEntry {
    pub target: [f64; 2],
    pub ref_camera: String,
    pub ref_point: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleEntry {
    pub point3d: [f64; 3],
    pub target: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<u32>,
    pub cameras: Vec<CameraEntry>,
    pub matches: Vec<MatchEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple_match: Option<TripleEntry>,
}

/// A pose as written to every output file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    pub quaternion: [f64; 4],
    pub center: [f64; 3],
}

impl From<&Pose> for PoseEntry {
    fn from(p: &Pose) -> Self {
        Self {
            quaternion: p.rotation.to_array(),
            center: p.translation.into(),
        }
    }
}

impl PoseEntry {
    pub fn to_pose(&self) -> Result<Pose, String> {
        let q = Quaternion::from_array(self.quaternion);
        if (q.norm() - 1.0).abs() > ROTATION_AGREEMENT {
            return Err(format!("quaternion norm {} is not 1", q.norm()));
        }
        Ok(Pose::new(q.normalized(), Vector3::from(self.center)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub format_version: u32,
    pub pose: PoseEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SyntheticSpec>,
    /// Per-match outlier flags, in match order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outliers: Vec<bool>,
}

fn rotation_from_entry(id: &str, r: &RotationEntry) -> Result<Quaternion, String> {
    let from_q = match r.quaternion {
        Some(a) => {
            let q = Quaternion::from_array(a);
            if (q.norm() - 1.0).abs() > ROTATION_AGREEMENT {
                return Err(format!("camera `{id}`: quaternion norm {} is not 1", q.norm()));
            }
            Some(q.normalized())
        }
        None => None,
    };
    let from_m = match r.matrix {
        Some(rows) => {
            let m = Matrix3::from_fn(|i, j| rows[i][j]);
            let off = (m.transpose() * m - Matrix3::identity()).abs().max();
            if off > ROTATION_AGREEMENT || m.determinant() <= 0.0 {
                return Err(format!("camera `{id}`: matrix is not a rotation (|RᵀR − I| = {off:.2e})"));
            }
            Some(m)
        }
        None => None,
    };
    match (from_q, from_m) {
        (Some(q), Some(m)) => {
            let diff = (q.to_rotation_matrix() - m).abs().max();
            if diff > ROTATION_AGREEMENT {
                return Err(format!("camera `{id}`: quaternion and matrix disagree by {diff:.2e}"));
            }
            Ok(q)
        }
        (Some(q), None) => Ok(q),
        (None, Some(m)) => Ok(Quaternion::from_rotation_matrix(&m)),
        (None, None) => Err(format!("camera `{id}`: rotation needs a quaternion or a matrix")),
    }
}

impl SceneFile {
    pub fn to_scene(&self) -> Result<Scene, String> {
        let cameras = self
            .cameras
            .iter()
            .map(|c| {
                let q = rotation_from_entry(&c.id, &c.rotation)?;
                Ok(CalibratedCamera::new(c.id.clone(), Pose::new(q, Vector3::from(c.center))))
            })
            .collect::<Result<Vec<_>, String>>()?;
        let matches = self
            .matches
            .iter()
            .map(|m| MatchPair::from_image(m.target, m.ref_camera.clone(), m.ref_point))
            .collect();
        let triple_match = self.triple_match.as_ref().map(|t| TripleMatch {
            point3d: Vector3::from(t.point3d),
            target_point: Vector3::new(t.target[0], t.target[1], 1.0),
        });
        Ok(Scene {
            cameras,
            matches,
            triple_match,
        })
    }

    pub fn from_scene(scene: &Scene) -> Self {
        let xy = |v: &Vector3<f64>| [v.x / v.z, v.y / v.z];
        Self {
            format_version: Some(FORMAT_VERSION),
            cameras: scene
                .cameras
                .iter()
                .map(|c| CameraEntry {
                    id: c.id.0.clone(),
                    rotation: RotationEntry {
                        quaternion: Some(c.pose.rotation.to_array()),
                        matrix: None,
                    },
                    center: c.pose.translation.into(),
                })
                .collect(),
            matches: scene
                .matches
                .iter()
                .map(|m| MatchEntry {
                    target: xy(&m.target_point),
                    ref_camera: m.ref_camera.0.clone(),
                    ref_point: xy(&m.ref_point),
                })
                .collect(),
            triple_match: scene.triple_match.as_ref().map(|t| TripleEntry {
                point3d: t.point3d.into(),
                target: xy(&t.target_point),
            }),
        }
    }
}

/// Strict parse with a path-qualified message, e.g.
/// `matches[2].ref_point: invalid length 3, expected 2 at line 9 column 31`.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Parse(if path == "." {
            format!("{origin}: {inner}")
        } else {
            format!("{origin}: {path}: {inner}")
        })
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_scene(path: &Path) -> Result<Scene, CliError> {
    let file: SceneFile = parse_json(&read(path)?, &path.display().to_string())?;
    file.to_scene().map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn load_truth(path: &Path) -> Result<TruthFile, CliError> {
    parse_json(&read(path)?, &path.display().to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
