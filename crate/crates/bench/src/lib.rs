//! Shared inputs for the benchmarks.

use roadgamma::synth::{random_scene, render_pair};
use roadgamma::{CameraIntrinsics, RandomSceneConfig, RenderedPair, SceneSpec};

/// 640×192 camera used throughout the benches.
pub fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(320.0, 320.0, 320.0, 96.0, 640, 192).expect("valid intrinsics")
}

/// A seeded scene with three primitives and its rendered pair.
pub fn scene(seed: u64) -> (SceneSpec, RenderedPair) {
    let cfg = RandomSceneConfig { min_primitives: 3, ..Default::default() };
    let spec = random_scene(seed, camera(), &cfg).expect("valid scene");
    let pair = render_pair(&spec).expect("scene renders");
    (spec, pair)
}
