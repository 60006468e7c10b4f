//! End-to-end pipeline: dense low-resolution render, multi-depth construction, guided
//! high-resolution render, plus the evaluation helpers built on top of it.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::dense::{render_dense, RenderConfig, RenderOutput};
use crate::error::{Error, Result};
use crate::fields::{RadianceField, SdfScene};
use crate::guided::{render_guided, BudgetReport, GuidedOutput, GuidedRenderConfig};
use crate::metrics::{self, score_serde};
use crate::normal_sr::{build_multi_depth, MultiDepthMap, SrMethod, SrOptions};
use crate::raster::Raster;

/// Named resolution pairs. `Full` is the 256 -> 1024 setting; the desk profiles keep CI cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk64,
    #[default]
    Desk128,
    Full,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Desk64, Profile::Desk128, Profile::Full];

    pub fn lr(self) -> usize {
        match self {
            Profile::Desk64 => 64,
            Profile::Desk128 => 128,
            Profile::Full => 256,
        }
    }

    pub fn hr(self) -> usize {
        4 * self.lr()
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk64 => "desk64",
            Profile::Desk128 => "desk128",
            Profile::Full => "full",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Profile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown profile '{s}' (expected desk64, desk128 or full)")))
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub render: RenderConfig,
    pub sr: SrOptions,
    pub guided: GuidedRenderConfig,
}

impl PipelineConfig {
    pub fn new(profile: Profile, seed: u64) -> Self {
        let mut cfg = Self { profile, ..Self::default() };
        cfg.render.seed = seed;
        cfg
    }

    pub fn lr(&self) -> usize {
        self.profile.lr()
    }

    pub fn hr(&self) -> usize {
        self.profile.hr()
    }

    pub fn validate(&self) -> Result<()> {
        self.render.validate()?;
        self.sr.validate()?;
        self.guided.validate()?;
        if self.lr() * self.sr.scale() != self.hr() {
            return Err(Error::Config(format!(
                "{} SR passes do not map {} to {}",
                self.sr.passes,
                self.lr(),
                self.hr()
            )));
        }
        Ok(())
    }

    /// Same config with the SR ablation switches changed.
    pub fn with_sr(&self, method: SrMethod, aggregate: bool) -> Self {
        let mut cfg = self.clone();
        cfg.sr.method = method;
        cfg.sr.aggregate = aggregate;
        cfg
    }
}

/// Stage timings in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub render_lr_ms: f64,
    pub build_depth_ms: f64,
    pub render_hr_ms: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub lr: RenderOutput,
    /// Normalized LR depth with the far sentinel on the background.
    pub lr_depth: Raster,
    pub multi_depth: MultiDepthMap,
    pub hr: GuidedOutput,
    pub camera_lr: Camera,
    pub camera_hr: Camera,
    pub timings: Timings,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Depth map for the SR stage: alpha-normalized camera-z, far sentinel on the background.
pub fn lr_depth(out: &RenderOutput, camera: &Camera, alpha_threshold: f64) -> Raster {
    out.normalized_depth(alpha_threshold, camera.far())
}

/// `camera` may have any resolution; it is resized to the profile's LR and HR sizes.
pub fn run_pipeline<L, H>(lr_field: &L, hr_field: &H, camera: &Camera, cfg: &PipelineConfig) -> Result<PipelineOutput>
where
    L: RadianceField + ?Sized,
    H: RadianceField + ?Sized,
{
    cfg.validate()?;
    let camera_lr = camera.with_resolution(cfg.lr(), cfg.lr())?;
    let camera_hr = camera.with_resolution(cfg.hr(), cfg.hr())?;
    let mut render = cfg.render.clone();
    render.compute_normals = true;

    let t = Instant::now();
    let lr = render_dense(lr_field, &camera_lr, &render)?;
    let render_lr_ms = ms_since(t);

    let t = Instant::now();
    let depth = lr_depth(&lr, &camera_lr, cfg.sr.alpha_threshold);
    let multi_depth = build_multi_depth(&depth, &lr.normal, &lr.alpha, &camera_lr, &cfg.sr)?;
    let build_depth_ms = ms_since(t);

    let t = Instant::now();
    let hr = render_guided(hr_field, &camera_hr, &multi_depth, &cfg.guided)?;
    let render_hr_ms = ms_since(t);

    Ok(PipelineOutput {
        lr,
        lr_depth: depth,
        multi_depth,
        hr,
        camera_lr,
        camera_hr,
        timings: Timings { render_lr_ms, build_depth_ms, render_hr_ms },
    })
}

/// Dense render of `hr_field` at the HR resolution: the reference the guided output is scored against.
pub fn render_oracle<H: RadianceField + ?Sized>(hr_field: &H, camera: &Camera, cfg: &PipelineConfig) -> Result<RenderOutput> {
    let cam = camera.with_resolution(cfg.hr(), cfg.hr())?;
    let mut render = cfg.render.clone();
    render.compute_normals = false;
    render_dense(hr_field, &cam, &render)
}

/// Ray-cast camera-z of the first surface of `scene`; misses get `camera.far()`.
/// Returns `(depth, hit mask)`.
pub fn analytic_depth(scene: &SdfScene, camera: &Camera) -> (Raster, Raster) {
    let (w, h) = (camera.width(), camera.height());
    let hits: Vec<Option<f64>> = (0..w * h)
        .into_par_iter()
        .map(|k| {
            let ray = camera.pixel_ray(k % w, k / w);
            scene
                .intersect(&ray.origin, &ray.direction, ray.t_near, ray.t_far)
                .map(|t| camera.depth_of(&ray, t))
        })
        .collect();
    let depth = Raster::from_fn(w, h, |x, y| hits[y * w + x].unwrap_or(camera.far()) as f32);
    let mask = Raster::from_fn(w, h, |x, y| if hits[y * w + x].is_some() { 1.0 } else { 0.0 });
    (depth, mask)
}

/// Pixels within `radius` (Chebyshev) of a silhouette or depth discontinuity.
///
/// A pair of 4-neighbours is an edge when their mask values differ, or both are
/// foreground and their depths differ by more than `rel_jump` of the nearer one.
pub fn discontinuity_band(depth: &Raster, mask: &Raster, radius: usize, rel_jump: f64) -> Result<Raster> {
    let (w, h) = depth.dims();
    mask.ensure_dims(w, h)?;
    let fg = |x: usize, y: usize| mask.get(x, y, 0) > 0.5;
    let jump = |a: (usize, usize), b: (usize, usize)| {
        if fg(a.0, a.1) != fg(b.0, b.1) {
            return true;
        }
        let (da, db) = (depth.get(a.0, a.1, 0) as f64, depth.get(b.0, b.1, 0) as f64);
        fg(a.0, a.1) && (da - db).abs() > rel_jump * da.min(db).abs()
    };
    let mut edge = Raster::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let right = x + 1 < w && jump((x, y), (x + 1, y));
            let down = y + 1 < h && jump((x, y), (x, y + 1));
            if right {
                edge.set(x, y, 0, 1.0);
                edge.set(x + 1, y, 0, 1.0);
            }
            if down {
                edge.set(x, y, 0, 1.0);
                edge.set(x, y + 1, 0, 1.0);
            }
        }
    }
    if radius == 0 {
        return Ok(edge);
    }
    crate::morphology::dilate(&edge, &crate::morphology::StructuringElement::flat(radius))
}

/// Foreground pixels of `mask` outside `band`.
pub fn interior_mask(mask: &Raster, band: &Raster) -> Raster {
    Raster::from_fn(mask.width(), mask.height(), |x, y| {
        if mask.get(x, y, 0) > 0.5 && band.get(x, y, 0) < 0.5 {
            1.0
        } else {
            0.0
        }
    })
}

/// RMSE of every multi-depth channel against the nearest true depth found within
/// `window` pixels, pooled over channels and the foreground of `multi.mask`.
///
/// A candidate list is only useful if each entry sits on *some* real surface near the
/// pixel; snapping to the closest one scores that without penalizing the deliberate
/// near/far spread across channels.
pub fn snapped_depth_rmse(multi: &MultiDepthMap, truth: &Raster, window: usize) -> Result<f64> {
    let (w, h) = multi.dims();
    truth.ensure_dims(w, h)?;
    let c = multi.channels.channels();
    let r = window as isize;
    let per_pixel: Vec<(f64, usize)> = (0..w * h)
        .into_par_iter()
        .map(|k| {
            let (x, y) = (k % w, k / w);
            if multi.mask.get(x, y, 0) <= 0.5 {
                return (0.0, 0);
            }
            let mut se = 0.0;
            for ch in 0..c {
                let d = multi.channels.get(x, y, ch) as f64;
                let mut best = f64::INFINITY;
                for t in -r..=r {
                    for s in -r..=r {
                        let e = (truth.get_clamped(x as isize + s, y as isize + t, 0) as f64 - d).abs();
                        best = best.min(e);
                    }
                }
                se += best * best;
            }
            (se, c)
        })
        .collect();
    let n: usize = per_pixel.iter().map(|p| p.1).sum();
    if n == 0 {
        return Err(Error::InvalidArgument("multi-depth mask is empty".into()));
    }
    let total: crate::math::CompensatedSum = per_pixel.iter().map(|p| p.0).collect();
    Ok((total.value() / n as f64).sqrt())
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Scores of one sweep view against the dense oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub yaw: f64,
    #[serde(with = "score_serde")]
    pub psnr: f64,
    pub ssim: f64,
    pub guided_queries: u64,
    pub queries_per_foreground_pixel: f64,
    pub guided_ms: f64,
    pub oracle_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub schema_version: u32,
    pub scene: String,
    pub profile: Profile,
    pub method: SrMethod,
    pub aggregate: bool,
    pub yaws: Vec<f64>,
    pub views: Vec<ViewScore>,
    #[serde(with = "score_serde")]
    pub mean_psnr: f64,
    #[serde(with = "score_serde")]
    pub min_psnr: f64,
    pub mean_ssim: f64,
    pub min_ssim: f64,
    pub total_guided_queries: u64,
    pub wall_ms: f64,
}

impl ConsistencyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("yaw,psnr,ssim,guided_queries,queries_per_foreground_pixel,guided_ms,oracle_ms\n");
        for v in &self.views {
            s += &format!(
                "{},{},{},{},{},{:.3},{:.3}\n",
                v.yaw,
                fmt_db(v.psnr),
                v.ssim,
                v.guided_queries,
                v.queries_per_foreground_pixel,
                v.guided_ms,
                v.oracle_ms
            );
        }
        s
    }
}

/// dB value for text outputs; the zero-error case prints as `inf`.
pub fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

/// `count` evenly spaced values from `start` to `end` inclusive (`start` alone when `count == 1`).
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n).map(|i| start + (end - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Scores one view: full pipeline vs. dense HR render of `hr_field`.
pub fn score_view<L, H>(lr_field: &L, hr_field: &H, camera: &Camera, cfg: &PipelineConfig) -> Result<(ViewScore, PipelineOutput, RenderOutput)>
where
    L: RadianceField + ?Sized,
    H: RadianceField + ?Sized,
{
    let run = run_pipeline(lr_field, hr_field, camera, cfg)?;
    let t = Instant::now();
    let oracle = render_oracle(hr_field, camera, cfg)?;
    let oracle_ms = ms_since(t);
    let score = ViewScore {
        yaw: 0.0,
        psnr: metrics::psnr(&run.hr.color, &oracle.color, 1.0)?,
        ssim: metrics::ssim(&run.hr.color, &oracle.color)?,
        guided_queries: run.hr.report.field_queries,
        queries_per_foreground_pixel: run.hr.report.queries_per_foreground_pixel,
        guided_ms: run.timings.render_hr_ms,
        oracle_ms,
    };
    Ok((score, run, oracle))
}

/// Runs the pipeline at every yaw (orbiting `pivot`) and scores each view against the oracle.
pub fn consistency_sweep<L, H>(
    scene_name: &str,
    lr_field: &L,
    hr_field: &H,
    base: &Camera,
    pivot: &crate::math::Vec3,
    yaws: &[f64],
    cfg: &PipelineConfig,
) -> Result<ConsistencyReport>
where
    L: RadianceField + ?Sized,
    H: RadianceField + ?Sized,
{
    if yaws.is_empty() {
        return Err(Error::InvalidArgument("yaw list is empty".into()));
    }
    cfg.validate()?;
    let start = Instant::now();
    let views = yaws
        .par_iter()
        .map(|&yaw| {
            let cam = base.yaw_orbit(yaw, pivot)?;
            let (mut v, _, _) = score_view(lr_field, hr_field, &cam, cfg)?;
            v.yaw = yaw;
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = views.len() as f64;
    let mean = |f: fn(&ViewScore) -> f64| views.iter().map(f).collect::<crate::math::CompensatedSum>().value() / n;
    let min = |f: fn(&ViewScore) -> f64| views.iter().map(f).fold(f64::INFINITY, f64::min);
    Ok(ConsistencyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scene: scene_name.into(),
        profile: cfg.profile,
        method: cfg.sr.method,
        aggregate: cfg.sr.aggregate,
        yaws: yaws.to_vec(),
        mean_psnr: mean(|v| v.psnr),
        min_psnr: min(|v| v.psnr),
        mean_ssim: mean(|v| v.ssim),
        min_ssim: min(|v| v.ssim),
        total_guided_queries: views.iter().map(|v| v.guided_queries).sum(),
        wall_ms: ms_since(start),
        views,
    })
}

/// One scene's dense-vs-guided comparison at the HR resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scene: String,
    pub profile: Profile,
    pub width: usize,
    pub height: usize,
    pub runs: usize,
    /// Median over runs.
    pub dense_ms: f64,
    /// Median over runs of the guided HR render alone.
    pub guided_ms: f64,
    /// Median over runs of LR render + multi-depth + guided render.
    pub pipeline_ms: f64,
    pub speedup: f64,
    pub dense_queries_per_pixel: f64,
    pub guided_queries_per_foreground_pixel: f64,
    #[serde(with = "score_serde")]
    pub psnr: f64,
    pub ssim: f64,
    pub dense_peak_buffer_bytes: u64,
    pub guided_peak_buffer_bytes: u64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "scene,profile,width,height,runs,dense_ms,guided_ms,pipeline_ms,speedup,\
dense_queries_per_pixel,guided_queries_per_foreground_pixel,psnr,ssim,dense_peak_buffer_bytes,guided_peak_buffer_bytes";

    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{},{},{},{:.6},{},{}",
            self.scene,
            self.profile,
            self.width,
            self.height,
            self.runs,
            self.dense_ms,
            self.guided_ms,
            self.pipeline_ms,
            self.speedup,
            self.dense_queries_per_pixel,
            self.guided_queries_per_foreground_pixel,
            fmt_db(self.psnr),
            self.ssim,
            self.dense_peak_buffer_bytes,
            self.guided_peak_buffer_bytes
        )
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times the dense HR render (normals off) against the guided pipeline, `runs` times each.
pub fn bench_scene<L, H>(scene: &str, lr_field: &L, hr_field: &H, camera: &Camera, cfg: &PipelineConfig, runs: usize) -> Result<BenchRow>
where
    L: RadianceField + ?Sized,
    H: RadianceField + ?Sized,
{
    if runs == 0 {
        return Err(Error::InvalidArgument("bench needs at least one run".into()));
    }
    cfg.validate()?;
    let (mut dense_t, mut guided_t, mut pipe_t) = (Vec::new(), Vec::new(), Vec::new());
    let mut last = None;
    for _ in 0..runs {
        let t = Instant::now();
        let oracle = render_oracle(hr_field, camera, cfg)?;
        dense_t.push(ms_since(t));
        let t = Instant::now();
        let run = run_pipeline(lr_field, hr_field, camera, cfg)?;
        pipe_t.push(ms_since(t));
        guided_t.push(run.timings.render_hr_ms);
        last = Some((oracle, run));
    }
    let (oracle, run) = last.expect("runs > 0");
    let (dense_ms, guided_ms) = (median(&mut dense_t), median(&mut guided_t));
    let dense_report = BudgetReport::for_dense(&oracle, dense_ms, cfg.render.alpha_threshold);
    Ok(BenchRow {
        scene: scene.into(),
        profile: cfg.profile,
        width: cfg.hr(),
        height: cfg.hr(),
        runs,
        dense_ms,
        guided_ms,
        pipeline_ms: median(&mut pipe_t),
        speedup: dense_ms / guided_ms.max(1e-9),
        dense_queries_per_pixel: dense_report.queries_per_pixel,
        guided_queries_per_foreground_pixel: run.hr.report.queries_per_foreground_pixel,
        psnr: metrics::psnr(&run.hr.color, &oracle.color, 1.0)?,
        ssim: metrics::ssim(&run.hr.color, &oracle.color)?,
        dense_peak_buffer_bytes: dense_report.peak_buffer_bytes,
        guided_peak_buffer_bytes: run.hr.report.peak_buffer_bytes,
    })
}
