//! Depth-guided high-resolution volume rendering.

pub mod camera;
pub mod dense;
pub mod error;
pub mod fields;
pub mod guided;
pub mod io;
pub mod math;
pub mod metrics;
pub mod morphology;
pub mod normal_sr;
pub mod pipeline;
pub mod raster;
pub mod scene;

pub use error::{Error, Result};
pub use math::{Aabb, Vec3};
pub use raster::Raster;
pub use camera::{Camera, Intrinsics};
pub use dense::{render_dense, RenderConfig, RenderOutput};
pub use fields::{AnyField, RadianceField, SdfScene};
pub use guided::{render_guided, BudgetReport, GuidedRenderConfig, LastInterval};
pub use normal_sr::{build_multi_depth, MultiDepthMap, SrMethod, SrOptions};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput, Profile};
pub use scene::Scene;
