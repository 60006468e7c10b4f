//! Sparse rendering: composite only at the depths stored in a multi-depth map.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::dense::RenderOutput;
use crate::error::{Error, Result};
use crate::fields::RadianceField;
use crate::normal_sr::MultiDepthMap;
use crate::raster::Raster;

/// Thickness given to the last sample, which has no successor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum LastInterval {
    /// Reuse the previous interval.
    CopyPrevious,
    /// Fixed thickness in world units.
    Fixed(f64),
    /// Extend to the far clip. On flat interiors all channels coincide, so the copied
    /// interval collapses to the floor and the surface would turn transparent; this does not.
    ToFar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidedRenderConfig {
    pub last_interval: LastInterval,
    pub background: [f64; 3],
    /// Floor on every interval, world units.
    pub min_interval: f64,
}

impl Default for GuidedRenderConfig {
    fn default() -> Self {
        Self {
            last_interval: LastInterval::ToFar,
            background: [1.0; 3],
            min_interval: 1e-4,
        }
    }
}

impl GuidedRenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_interval > 0.0) {
            return Err(Error::Config("minimum interval must be positive".into()));
        }
        if let LastInterval::Fixed(v) = self.last_interval {
            if !(v > 0.0) {
                return Err(Error::Config("fixed last interval must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Query counts, timing and memory of one render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub path: String,
    pub width: usize,
    pub height: usize,
    pub pixels: u64,
    pub foreground_pixels: u64,
    pub background_pixels: u64,
    pub field_queries: u64,
    pub queries_per_pixel: f64,
    pub queries_per_foreground_pixel: f64,
    pub wall_ms: f64,
    /// Bytes of the image-sized buffers alive at the peak.
    pub peak_buffer_bytes: u64,
}

impl BudgetReport {
    pub fn for_dense(out: &RenderOutput, wall_ms: f64, threshold: f64) -> Self {
        let (w, h) = out.color.dims();
        let pixels = (w * h) as u64;
        let fg = out.alpha.data().iter().filter(|a| **a as f64 > threshold).count() as u64;
        // four output maps plus the per-pixel staging buffer
        let staging = pixels * 8 * 8;
        let bytes = (out.color.byte_size() + out.depth.byte_size() + out.normal.byte_size() + out.alpha.byte_size()) as u64;
        Self {
            path: "dense".into(),
            width: w,
            height: h,
            pixels,
            foreground_pixels: fg,
            background_pixels: pixels - fg,
            field_queries: out.field_queries,
            queries_per_pixel: out.field_queries as f64 / pixels as f64,
            queries_per_foreground_pixel: if fg > 0 { out.field_queries as f64 / fg as f64 } else { 0.0 },
            wall_ms,
            peak_buffer_bytes: bytes + staging,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidedOutput {
    pub color: Raster,
    pub alpha: Raster,
    pub report: BudgetReport,
}

/// Composites the `K` samples of one pixel; returns `(rgb, alpha)`.
fn composite_pixel(t: &[f64], samples: &[crate::fields::FieldSample], t_far: f64, cfg: &GuidedRenderConfig) -> ([f64; 3], f64) {
    let k = t.len();
    let mut rgb = [0.0; 3];
    let mut trans = 1.0;
    let mut prev_delta = cfg.min_interval;
    for i in 0..k {
        let delta = if i + 1 < k {
            t[i + 1] - t[i]
        } else {
            match cfg.last_interval {
                LastInterval::CopyPrevious => prev_delta,
                LastInterval::Fixed(v) => v,
                LastInterval::ToFar => t_far - t[i],
            }
        }
        .max(cfg.min_interval);
        prev_delta = delta;
        let a = 1.0 - (-samples[i].sigma * delta).exp();
        let w = trans * a;
        for c in 0..3 {
            rgb[c] += w * samples[i].rgb[c];
        }
        trans *= 1.0 - a;
    }
    for c in 0..3 {
        rgb[c] += trans * cfg.background[c];
    }
    (rgb, 1.0 - trans)
}

/// Renders `camera` (the high-resolution view) with exactly `K` field queries per
/// foreground pixel and none on the background.
pub fn render_guided<F: RadianceField + ?Sized>(
    field: &F,
    camera: &Camera,
    depths: &MultiDepthMap,
    cfg: &GuidedRenderConfig,
) -> Result<GuidedOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let (w, h) = (camera.width(), camera.height());
    if depths.dims() != (w, h) {
        let (dw, dh) = depths.dims();
        return Err(Error::mismatch(format!("{w}x{h}"), format!("{dw}x{dh}")));
    }
    if !depths.is_sorted() {
        return Err(Error::InvalidArgument("multi-depth channels must be sorted ascending per pixel".into()));
    }
    let k = depths.channels.channels();
    let mut color = Raster::new(w, h, 3);
    let mut alpha = Raster::new(w, h, 1);
    let fg_rows: Vec<u64> = color
        .data_mut()
        .par_chunks_mut(3 * w)
        .zip(alpha.data_mut().par_chunks_mut(w))
        .enumerate()
        .map(|(y, (crow, arow))| {
            let mut t = vec![0.0; k];
            let mut samples = Vec::with_capacity(k);
            let mut fg = 0u64;
            for x in 0..w {
                if depths.mask.get(x, y, 0) <= 0.5 {
                    for c in 0..3 {
                        crow[3 * x + c] = cfg.background[c] as f32;
                    }
                    arow[x] = 0.0;
                    continue;
                }
                fg += 1;
                let ray = camera.pixel_ray(x, y);
                samples.clear();
                for (i, ti) in t.iter_mut().enumerate() {
                    *ti = camera.t_of_depth(&ray, depths.channels.get(x, y, i) as f64);
                    samples.push(field.query(&ray.at(*ti)));
                }
                let (rgb, a) = composite_pixel(&t, &samples, ray.t_far, cfg);
                for c in 0..3 {
                    crow[3 * x + c] = rgb[c] as f32;
                }
                arow[x] = a as f32;
            }
            fg
        })
        .collect();
    let fg: u64 = fg_rows.iter().sum();
    let pixels = (w * h) as u64;
    let queries = fg * k as u64;
    let report = BudgetReport {
        path: "guided".into(),
        width: w,
        height: h,
        pixels,
        foreground_pixels: fg,
        background_pixels: pixels - fg,
        field_queries: queries,
        queries_per_pixel: queries as f64 / pixels as f64,
        queries_per_foreground_pixel: if fg > 0 { queries as f64 / fg as f64 } else { 0.0 },
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        peak_buffer_bytes: (depths.channels.byte_size() + depths.mask.byte_size() + color.byte_size() + alpha.byte_size()) as u64,
    };
    Ok(GuidedOutput { color, alpha, report })
}
