//! Normal-guided 2x depth super-resolution and the multi-depth map built from it.
//!
//! Each output pixel `(X, Y)` (0-indexed) has parent `(X / 2, Y / 2)`; even `X` is the left
//! child and even `Y` the upper one. The child's depth is its parent's plus an offset derived
//! from the parent's normal:
//!
//! * slopes come from the height-field relation `dD/dx = N_x / N_z` (camera space, raster y
//!   pointing down flips the sign of the y slope), scaled to one output-pixel step;
//! * one-sided softmax weights `w_x, w_y` (|w_x| + |w_y| = 1) pick the side via their sign.
//!
//! Two offset rules are available, see [`SrWeighting`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::morphology::{aggregate, StructuringElement};
use crate::raster::Raster;

/// World size of one source pixel.
#[derive(Debug, Clone, Copy)]
pub enum Footprint<'a> {
    /// Same footprint everywhere (orthographic view), world units per source pixel.
    Uniform(f64),
    /// Pinhole view: footprint grows with depth; `pixel_angle` is the source pixel size at
    /// unit depth.
    Perspective { depth: &'a Raster, pixel_angle: f64 },
}

/// Depth change for a one-output-pixel step (half a source pixel) in +x and +y (raster).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGradients {
    pub dx: Raster,
    pub dy: Raster,
    /// Surface nearly parallel to the ray; the slope used the clamped denominator.
    pub grazing: Vec<bool>,
}

impl DepthGradients {
    pub fn grazing_count(&self) -> usize {
        self.grazing.iter().filter(|g| **g).count()
    }
}

fn clamp_away(v: f64, eps: f64) -> f64 {
    if v.abs() >= eps {
        v
    } else if v < 0.0 {
        -eps
    } else {
        eps
    }
}

/// Normals shorter than this are treated as undefined (background, empty space).
const MIN_NORMAL_LEN: f64 = 0.5;

pub fn gradients_from_normals(normals: &Raster, footprint: &Footprint<'_>, eps_z: f64) -> Result<DepthGradients> {
    if normals.channels() != 3 {
        return Err(Error::InvalidArgument("normal map needs 3 channels".into()));
    }
    let (w, h) = normals.dims();
    match footprint {
        Footprint::Uniform(p) if !(*p > 0.0) => {
            return Err(Error::InvalidArgument(format!("footprint must be positive, got {p}")))
        }
        Footprint::Perspective { depth, pixel_angle } => {
            depth.ensure_dims(w, h)?;
            if !(*pixel_angle > 0.0) {
                return Err(Error::InvalidArgument("pixel angle must be positive".into()));
            }
        }
        _ => {}
    }
    let mut dx = Raster::new(w, h, 1);
    let mut dy = Raster::new(w, h, 1);
    let mut grazing = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let n = normals.pixel(x, y);
            let (nx, ny, nz) = (n[0] as f64, n[1] as f64, n[2] as f64);
            if (nx * nx + ny * ny + nz * nz).sqrt() < MIN_NORMAL_LEN {
                continue;
            }
            let (gx, gy, flag) = match footprint {
                Footprint::Uniform(p) => {
                    let z = clamp_away(nz, eps_z);
                    (nx / z * p * 0.5, -ny / z * p * 0.5, nz.abs() < eps_z)
                }
                Footprint::Perspective { depth, pixel_angle: a } => {
                    // tangent plane through the pixel's surface point, differentiated along
                    // the image plane: dD/du = D a n_x / (n_z - u n_x - v n_y)
                    let d = depth.get(x, y, 0) as f64;
                    let u = (x as f64 + 0.5 - 0.5 * w as f64) * a;
                    let v = -(y as f64 + 0.5 - 0.5 * h as f64) * a;
                    let ray_len = (u * u + v * v + 1.0).sqrt();
                    let denom = nz - u * nx - v * ny;
                    let z = clamp_away(denom, eps_z * ray_len);
                    (d * a * nx / z * 0.5, -d * a * ny / z * 0.5, denom.abs() < eps_z * ray_len)
                }
            };
            dx.set(x, y, 0, gx as f32);
            dy.set(x, y, 0, gy as f32);
            grazing[y * w + x] = flag;
        }
    }
    Ok(DepthGradients { dx, dy, grazing })
}

/// One-sided softmax weights: magnitudes favour the flatter direction, the sign is negative
/// for the left (`left`) / upper (`top`) child.
pub fn sr_weights(dx: f64, dy: f64, left: bool, top: bool) -> (f64, f64) {
    let (ax, ay) = (dx.abs(), dy.abs());
    let m = ax.min(ay);
    let (ex, ey) = ((m - ax).exp(), (m - ay).exp());
    let s = ex + ey;
    let wx = ex / s;
    let wy = ey / s;
    (if left { -wx } else { wx }, if top { -wy } else { wy })
}

/// How a child's offset is formed from its parent's slopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrWeighting {
    /// `sgn(w_x) dx / 2 + sgn(w_y) dy / 2`: the child center sits a quarter source pixel from
    /// the parent's in both axes, so this reproduces planar depth exactly.
    #[default]
    Planar,
    /// `(w_x dx + w_y dy) / sqrt(dx^2 + dy^2)`, the softmax-normalised blend. Offsets are
    /// unit-free and not exact on planes; kept for comparison.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetParams {
    pub weighting: SrWeighting,
    pub eps_g: f64,
}

impl Default for OffsetParams {
    fn default() -> Self {
        Self {
            weighting: SrWeighting::Planar,
            eps_g: 1e-8,
        }
    }
}

/// Offset added to the parent depth for child `(left, top)`.
pub fn child_offset(dx: f64, dy: f64, left: bool, top: bool, grazing: bool, params: &OffsetParams) -> f64 {
    let norm = (dx * dx + dy * dy).sqrt();
    if grazing || norm < params.eps_g {
        return 0.0;
    }
    let (wx, wy) = sr_weights(dx, dy, left, top);
    match params.weighting {
        SrWeighting::Planar => 0.5 * (wx.signum() * dx + wy.signum() * dy),
        SrWeighting::Softmax => (wx * dx + wy * dy) / norm,
    }
}

/// 2x upsampling of every channel of `depth`, adding the same per-child offset to each.
pub fn upsample2x(depth: &Raster, grads: &DepthGradients, params: &OffsetParams) -> Result<Raster> {
    let (w, h) = depth.dims();
    grads.dx.ensure_dims(w, h)?;
    grads.dy.ensure_dims(w, h)?;
    let c = depth.channels();
    let mut out = Raster::new(2 * w, 2 * h, c);
    out.data_mut().par_chunks_mut(2 * w * c).enumerate().for_each(|(yy, row)| {
        let n = yy / 2;
        let top = yy % 2 == 0;
        for xx in 0..2 * w {
            let m = xx / 2;
            let left = xx % 2 == 0;
            let off = child_offset(
                grads.dx.get(m, n, 0) as f64,
                grads.dy.get(m, n, 0) as f64,
                left,
                top,
                grads.grazing[n * w + m],
                params,
            );
            for ch in 0..c {
                row[xx * c + ch] = (depth.get(m, n, ch) as f64 + off) as f32;
            }
        }
    });
    Ok(out)
}

/// Depth upsampling method used inside [`build_multi_depth`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrMethod {
    #[default]
    NormalGuided,
    /// Half-pixel bilinear interpolation of each channel (ablation baseline).
    Bilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrOptions {
    pub se: StructuringElement,
    /// `false` feeds `(D, D, D)` instead of `(erode D, D, dilate D)`.
    pub aggregate: bool,
    pub method: SrMethod,
    pub offsets: OffsetParams,
    pub eps_z: f64,
    pub alpha_threshold: f64,
    /// Number of 2x passes; the output is `2^passes` times the input resolution.
    pub passes: u32,
}

impl Default for SrOptions {
    fn default() -> Self {
        Self {
            se: StructuringElement::default(),
            aggregate: true,
            method: SrMethod::NormalGuided,
            offsets: OffsetParams::default(),
            eps_z: 0.05,
            alpha_threshold: 0.5,
            passes: 2,
        }
    }
}

impl SrOptions {
    pub fn scale(&self) -> usize {
        1 << self.passes
    }

    pub fn validate(&self) -> Result<()> {
        self.se.validate()?;
        if self.passes == 0 || self.passes > 4 {
            return Err(Error::Config(format!("passes must be in 1..=4, got {}", self.passes)));
        }
        if !(self.eps_z > 0.0 && self.eps_z < 1.0) || !(self.offsets.eps_g > 0.0) {
            return Err(Error::Config("clamp epsilons must be positive".into()));
        }
        Ok(())
    }
}

/// Per-pixel ascending candidate depths at the target resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiDepthMap {
    pub channels: Raster,
    pub mask: Raster,
    /// Grazing pixels over all passes.
    pub grazing_pixels: usize,
}

impl MultiDepthMap {
    pub fn new(channels: Raster, mask: Raster) -> Result<Self> {
        mask.ensure_dims(channels.width(), channels.height())?;
        if mask.channels() != 1 {
            return Err(Error::InvalidArgument("mask must be single-channel".into()));
        }
        if channels.channels() == 0 {
            return Err(Error::InvalidArgument("multi-depth map needs at least one channel".into()));
        }
        Ok(Self { channels, mask, grazing_pixels: 0 })
    }

    pub fn is_sorted(&self) -> bool {
        self.channels
            .data()
            .chunks(self.channels.channels())
            .all(|px| px.windows(2).all(|p| p[0] <= p[1]))
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels.dims()
    }
}

fn sort_channels(r: &mut Raster) {
    let c = r.channels();
    r.data_mut().par_chunks_mut(c).for_each(|px| px.sort_by(f32::total_cmp));
}

fn renormalized(n: &Raster) -> Raster {
    let mut out = n.clone();
    out.data_mut().par_chunks_mut(3).for_each(|v| {
        let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if len as f64 >= MIN_NORMAL_LEN {
            v.iter_mut().for_each(|c| *c /= len);
        } else {
            v.fill(0.0);
        }
    });
    out
}

/// Aggregated depth, upsampled `opts.passes` times, then sorted per pixel.
///
/// `depth` is camera-z with the far sentinel on background, `normal` is in camera space,
/// `camera` is the source-resolution camera.
pub fn build_multi_depth(
    depth: &Raster,
    normal: &Raster,
    alpha: &Raster,
    camera: &Camera,
    opts: &SrOptions,
) -> Result<MultiDepthMap> {
    opts.validate()?;
    let (w, h) = depth.dims();
    if depth.channels() != 1 || alpha.channels() != 1 || normal.channels() != 3 {
        return Err(Error::InvalidArgument("expected 1-channel depth/alpha and 3-channel normals".into()));
    }
    normal.ensure_dims(w, h)?;
    alpha.ensure_dims(w, h)?;
    if (camera.width(), camera.height()) != (w, h) {
        return Err(Error::mismatch(format!("{}x{}", camera.width(), camera.height()), format!("{w}x{h}")));
    }
    let thr = opts.alpha_threshold;
    let mask = alpha.map(|a| if a as f64 > thr { 1.0 } else { 0.0 });
    let mut channels = if opts.aggregate {
        aggregate(depth, &mask, &opts.se)?.channels
    } else {
        Raster::stack(&[depth, depth, depth])?
    };

    let mut normals = renormalized(normal);
    let mut pixel_angle = camera.pixel_angle();
    let mut grazing_pixels = 0;
    for pass in 0..opts.passes {
        channels = match opts.method {
            SrMethod::Bilinear => channels.upsample_bilinear(2),
            SrMethod::NormalGuided => {
                let centre = channels.channel(if channels.channels() > 1 { 1 } else { 0 });
                let fp = Footprint::Perspective { depth: &centre, pixel_angle };
                let grads = gradients_from_normals(&normals, &fp, opts.eps_z)?;
                grazing_pixels += grads.grazing_count();
                upsample2x(&channels, &grads, &opts.offsets)?
            }
        };
        pixel_angle *= 0.5;
        if pass + 1 < opts.passes {
            normals = renormalized(&normals.upsample_bilinear(2));
        }
    }
    sort_channels(&mut channels);
    // offsets may push sentinel layers past the clip range; clamping keeps the order
    let corner = camera.ray_through(0.0, 0.0);
    let z_min = camera.depth_of(&corner, camera.near()) as f32;
    let z_max = camera.far() as f32;
    channels.data_mut().par_iter_mut().for_each(|v| *v = v.clamp(z_min, z_max));
    Ok(MultiDepthMap {
        channels,
        mask: mask.upsample_nearest(opts.scale()),
        grazing_pixels,
    })
}
