//! Synthetic scenes and robust estimation.

pub mod ransac;
pub mod synth;

pub use ransac::{ransac_pose, sampson_threshold_from_pixels, RansacConfig, RansacError, RansacResult, SampleScheme};
pub use synth::{generate_scene, SceneGeometry, SyntheticScene, SyntheticSpec};
