//! RANSAC around the minimal solver.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraId, GeometryError, MatchPair, Pose, Scene};
use crate::robust::synth::DEFAULT_FOCAL_PX;
use crate::solver::{solve_pose, SolverOptions};

/// Sampson error threshold equivalent to `px` pixels of image distance at
/// focal length `focal_px`. The Sampson error approximates a squared distance
/// in normalized coordinates.
pub fn sampson_threshold_from_pixels(px: f64, focal_px: f64) -> f64 {
    (px / focal_px).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleScheme {
    /// Three matches from each of two reference cameras.
    ThreePlusThree,
    /// Six matches drawn uniformly, redrawn until at least two cameras appear.
    UniformSixFromTwoPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Per-match Sampson error below which a match counts as an inlier.
    pub inlier_threshold: f64,
    pub seed: u64,
    pub sample_scheme: SampleScheme,
    /// Score every candidate of a sample against all matches instead of
    /// only the best-ranked one.
    pub score_all_candidates: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            inlier_threshold: sampson_threshold_from_pixels(2.0, DEFAULT_FOCAL_PX),
            seed: 0,
            sample_scheme: SampleScheme::ThreePlusThree,
            score_all_candidates: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RansacError {
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error("inlier threshold must be positive and finite, got {0}")]
    Threshold(f64),
    #[error("need at least 6 matches, got {0}")]
    TooFewMatches(usize),
    #[error("sample scheme needs {needed}, but the scene has {found}")]
    Scheme { needed: &'static str, found: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("no iteration produced a pose")]
    NoModel,
}

/// Best model after an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Truncated loss of the best model so far; see [`truncated_loss`].
    pub best_loss: f64,
    pub best_inlier_count: usize,
    pub best_pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub pose: Pose,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
    pub history: Vec<IterationRecord>,
}

/// Outlier count plus the inlier Sampson sum divided by `n · threshold`.
/// The second term is below one, so ordering by this loss is ordering by
/// inlier count with ties broken by inlier error.
pub fn truncated_loss(errors: &[f64], threshold: f64) -> (f64, usize) {
    let n = errors.len().max(1) as f64;
    let mut outliers = 0usize;
    let mut inlier_sum = 0.0;
    for &e in errors {
        if e < threshold {
            inlier_sum += e;
        } else {
            outliers += 1;
        }
    }
    (outliers as f64 + inlier_sum / (n * threshold), errors.len() - outliers)
}

fn matches_by_camera(scene: &Scene) -> Vec<(CameraId, Vec<usize>)> {
    let mut groups: Vec<(CameraId, Vec<usize>)> = Vec::new();
    for (i, m) in scene.matches.iter().enumerate() {
        match groups.iter_mut().find(|(id, _)| *id == m.ref_camera) {
            Some((_, v)) => v.push(i),
            None => groups.push((m.ref_camera.clone(), vec![i])),
        }
    }
    groups
}

fn draw(scene: &Scene, groups: &[(CameraId, Vec<usize>)], scheme: SampleScheme, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match scheme {
        SampleScheme::ThreePlusThree => {
            let eligible: Vec<&Vec<usize>> = groups.iter().map(|(_, v)| v).filter(|v| v.len() >= 3).collect();
            let pair = sample(rng, eligible.len(), 2);
            pair.iter()
                .flat_map(|g| {
                    let members = eligible[g];
                    sample(rng, members.len(), 3).into_iter().map(|k| members[k]).collect::<Vec<_>>()
                })
                .collect()
        }
        SampleScheme::UniformSixFromTwoPlus => loop {
            let picked = sample(rng, scene.matches.len(), 6).into_vec();
            let first = &scene.matches[picked[0]].ref_camera;
            if picked.iter().any(|&i| &scene.matches[i].ref_camera != first) {
                return picked;
            }
        },
    }
}

struct Trial {
    loss: f64,
    inliers: usize,
    pose: Pose,
}

fn run_iteration(scene: &Scene, groups: &[(CameraId, Vec<usize>)], cfg: &RansacConfig, opts: &SolverOptions, iteration: usize) -> Option<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(iteration as u64);
    // Burn one draw so stream 0 differs from a plain seeded generator.
    let _: u32 = rng.random();
    let picked = draw(scene, groups, cfg.sample_scheme, &mut rng);
    let sub = Scene {
        cameras: scene.cameras.clone(),
        matches: picked.iter().map(|&i| scene.matches[i].clone()).collect::<Vec<MatchPair>>(),
        triple_match: None,
    };
    let solution = solve_pose(&sub, opts).ok()?;
    let take = if cfg.score_all_candidates { solution.candidates.len() } else { 1 };
    solution
        .candidates
        .iter()
        .take(take)
        .map(|c| {
            let (loss, inliers) = truncated_loss(&scene.sampson_errors(&c.pose), cfg.inlier_threshold);
            Trial { loss, inliers, pose: c.pose }
        })
        .min_by(|a, b| a.loss.total_cmp(&b.loss))
}

/// Robust pose from many matches. Iterations use independent random streams
/// derived from the seed and run in parallel; the history is merged in
/// iteration order, so results do not depend on the thread count.
pub fn ransac_pose(scene: &Scene, cfg: &RansacConfig, opts: &SolverOptions) -> Result<RansacResult, RansacError> {
    if cfg.max_iterations == 0 {
        return Err(RansacError::NoIterations);
    }
    if !(cfg.inlier_threshold > 0.0 && cfg.inlier_threshold.is_finite()) {
        return Err(RansacError::Threshold(cfg.inlier_threshold));
    }
    if scene.matches.len() < 6 {
        return Err(RansacError::TooFewMatches(scene.matches.len()));
    }
    scene.validate()?;
    let groups = matches_by_camera(scene);
    if cfg.sample_scheme == SampleScheme::ThreePlusThree && groups.iter().filter(|(_, v)| v.len() >= 3).count() < 2 {
        return Err(RansacError::Scheme {
            needed: "two cameras with at least 3 matches each",
            found: groups.iter().map(|(id, v)| format!("{id}: {}", v.len())).collect::<Vec<_>>().join(", "),
        });
    }

    let trials: Vec<Option<Trial>> = (0..cfg.max_iterations)
        .into_par_iter()
        .map(|i| run_iteration(scene, &groups, cfg, opts, i))
        .collect();

    let mut best: Option<Trial> = None;
    let mut history = Vec::with_capacity(trials.len());
    for (iteration, trial) in trials.into_iter().enumerate() {
        if let Some(t) = trial {
            if best.as_ref().is_none_or(|b| t.loss < b.loss) {
                best = Some(t);
            }
        }
        history.push(IterationRecord {
            iteration,
            best_loss: best.as_ref().map_or(f64::INFINITY, |b| b.loss),
            best_inlier_count: best.as_ref().map_or(0, |b| b.inliers),
            best_pose: best.as_ref().map(|b| b.pose),
        });
    }
    let best = best.ok_or(RansacError::NoModel)?;
    let inlier_mask: Vec<bool> = scene
        .sampson_errors(&best.pose)
        .iter()
        .map(|&e| e < cfg.inlier_threshold)
        .collect();
    Ok(RansacResult {
        pose: best.pose,
        inlier_count: inlier_mask.iter().filter(|b| **b).count(),
        inlier_mask,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_orders_by_count_then_error() {
        let thr = 1.0;
        let (a, na) = truncated_loss(&[0.9, 0.9, 5.0], thr);
        let (b, nb) = truncated_loss(&[0.1, 5.0, 5.0], thr);
        let (c, _) = truncated_loss(&[0.1, 0.2, 5.0], thr);
        assert_eq!((na, nb), (2, 1));
        assert!(a < b);
        assert!(c < a);
    }

    #[test]
    fn pixel_threshold() {
        assert!((sampson_threshold_from_pixels(8.0, 800.0) - 1e-4).abs() < 1e-18);
    }
}
