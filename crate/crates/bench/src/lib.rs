//! Shared fixtures for the benchmarks.

use plasmo_core::forward::{ForwardOptions, Scene};
use plasmo_core::StarShape;

/// Five-petal flower of outer radius `delta`.
pub fn flower(delta: f64) -> StarShape {
    StarShape::flower([0.0, 0.0], delta / 1.3, 5, 0.3).expect("valid flower")
}

/// Default scene: flower at gap `5δ` from the unit sensor disk.
pub fn default_scene() -> Scene {
    Scene::new(&flower(1e-3), ForwardOptions::default()).expect("valid scene")
}
