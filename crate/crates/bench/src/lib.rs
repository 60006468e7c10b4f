//! Shared fixtures for the benchmarks.

use depthguide::scene::{preset, SceneFields};
use depthguide::{run_pipeline, Camera, PipelineConfig, PipelineOutput, Profile};

/// A preset scene at one profile, with the LR stage already rendered so the
/// later stages can be timed in isolation.
pub struct Fixture {
    pub fields: SceneFields,
    pub camera: Camera,
    pub cfg: PipelineConfig,
    pub staged: PipelineOutput,
}

impl Fixture {
    pub fn new(scene: &str, profile: Profile) -> Self {
        let scene = preset(scene).unwrap_or_else(|| panic!("unknown preset {scene}"));
        let cfg = PipelineConfig::new(profile, 0);
        let fields = scene.fields(cfg.hr() / cfg.lr()).expect("preset fields");
        let camera = scene.camera(cfg.hr(), cfg.hr()).expect("preset camera");
        let staged = run_pipeline(&fields.lr, &fields.hr, &camera, &cfg).expect("pipeline");
        Self { fields, camera, cfg, staged }
    }

    pub fn hr_camera(&self) -> &Camera {
        &self.staged.camera_hr
    }
}
