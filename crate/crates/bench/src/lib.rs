//! Shared inputs for the benchmarks.

use respose_core::robust::{generate_scene, SceneGeometry, SyntheticSpec};
use respose_core::Scene;

/// Noise-free minimal scenes with the given geometry, seeds `0..n`.
pub fn minimal_scenes(n: u64, geometry: SceneGeometry) -> Vec<Scene> {
    (0..n)
        .map(|seed| generate_scene(&SyntheticSpec::minimal(seed).with_geometry(geometry)).scene)
        .collect()
}
