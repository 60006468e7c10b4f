//! Reference volume renderer: stratified + importance sampling along every pixel ray.
//!
//! This is the expensive path. Its low-resolution output seeds the depth pipeline and its
//! high-resolution output is the oracle the guided renderer is measured against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::fields::{field_normal, RadianceField};
use crate::math::CompensatedSum;
use crate::raster::Raster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub n_uniform: usize,
    pub n_importance: usize,
    pub seed: u64,
    pub background: [f64; 3],
    pub alpha_threshold: f64,
    /// Skip normal estimation (it costs six potential evaluations per visible sample).
    pub compute_normals: bool,
    /// `false` places coarse samples at bin midpoints.
    pub jitter: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            n_uniform: 36,
            n_importance: 36,
            seed: 0,
            background: [1.0; 3],
            alpha_threshold: 0.5,
            compute_normals: true,
            jitter: true,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_uniform < 2 {
            return Err(Error::Config(format!("n_uniform must be >= 2, got {}", self.n_uniform)));
        }
        if !(0.0..1.0).contains(&self.alpha_threshold) {
            return Err(Error::Config("alpha threshold must lie in [0, 1)".into()));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Config("background colour must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn samples_per_ray(&self) -> usize {
        self.n_uniform + self.n_importance
    }
}

/// Per-pixel generator: the stream is the pixel index, so any schedule gives the same draws.
pub fn pixel_rng(seed: u64, pixel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel);
    rng
}

/// One sample in each of `n` equal bins of `[t_near, t_far]`, sorted. Without a generator
/// the bin midpoints are returned.
pub fn stratified_samples(t_near: f64, t_far: f64, n: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<f64> {
    let width = (t_far - t_near) / n as f64;
    match rng {
        Some(rng) => (0..n)
            .map(|i| {
                let u: f64 = rng.random();
                t_near + (i as f64 + u) * width
            })
            .collect(),
        None => (0..n).map(|i| t_near + (i as f64 + 0.5) * width).collect(),
    }
}

/// Inverse-CDF draws from the piecewise-constant density proportional to `weights` over
/// equal bins of `[t_near, t_far]`, sorted. All-zero weights fall back to stratified draws
/// from the same generator.
pub fn importance_samples(t_near: f64, t_far: f64, weights: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let total: f64 = weights.iter().filter(|w| w.is_finite() && **w > 0.0).sum();
    if !(total > 0.0) || weights.is_empty() {
        return stratified_samples(t_near, t_far, n, Some(rng));
    }
    let width = (t_far - t_near) / weights.len() as f64;
    let mut cdf = Vec::with_capacity(weights.len() + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for w in weights {
        acc += if w.is_finite() && *w > 0.0 { *w / total } else { 0.0 };
        cdf.push(acc);
    }
    let mut us: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * acc).collect();
    us.sort_by(f64::total_cmp);
    us.into_iter()
        .map(|u| {
            // first bin whose upper CDF edge exceeds u; it necessarily has positive mass
            let k = cdf[1..].partition_point(|c| *c <= u).min(weights.len() - 1);
            let mass = cdf[k + 1] - cdf[k];
            let frac = if mass > 0.0 { ((u - cdf[k]) / mass).clamp(0.0, 1.0) } else { 0.5 };
            let lo = t_near + k as f64 * width;
            (lo + frac * width).min(lo + width)
        })
        .collect()
}

/// Compositing weights `T_i * alpha_i` and the final transmittance.
///
/// `delta_i = t_{i+1} - t_i`, the last interval is `last_delta`. Equal neighbouring `t`
/// are allowed (zero-length interval); decreasing `t` is an error.
pub fn compositing_weights(t: &[f64], sigma: &[f64], last_delta: f64) -> Result<(Vec<f64>, f64)> {
    if t.len() != sigma.len() {
        return Err(Error::mismatch(t.len(), sigma.len()));
    }
    if let Some(i) = t.windows(2).position(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidArgument(format!(
            "sample positions must be non-decreasing (t[{i}] = {}, t[{}] = {})",
            t[i],
            i + 1,
            t[i + 1]
        )));
    }
    if sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument("densities must be non-negative".into()));
    }
    let mut weights = Vec::with_capacity(t.len());
    let mut transmittance = 1.0;
    for i in 0..t.len() {
        let delta = if i + 1 < t.len() { t[i + 1] - t[i] } else { last_delta };
        let alpha = 1.0 - (-sigma[i] * delta).exp();
        weights.push(transmittance * alpha);
        transmittance *= 1.0 - alpha;
    }
    Ok((weights, transmittance))
}

/// `sum_i w_i v_i + T_final * background` and `alpha = 1 - T_final`.
pub fn composite<const K: usize>(
    t: &[f64],
    sigma: &[f64],
    values: &[[f64; K]],
    last_delta: f64,
    background: [f64; K],
) -> Result<([f64; K], f64)> {
    if values.len() != t.len() {
        return Err(Error::mismatch(t.len(), values.len()));
    }
    let (w, t_final) = compositing_weights(t, sigma, last_delta)?;
    let mut out = [0.0; K];
    for c in 0..K {
        let mut s = CompensatedSum::default();
        for (wi, v) in w.iter().zip(values) {
            s.add(wi * v[c]);
        }
        s.add(t_final * background[c]);
        out[c] = s.value();
    }
    Ok((out, 1.0 - t_final))
}

/// Colour, accumulated depth, camera-space normals and opacity.
///
/// `depth` holds `sum_i w_i z_i` without dividing by alpha; use [`RenderOutput::normalized_depth`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: Raster,
    pub depth: Raster,
    pub normal: Raster,
    pub alpha: Raster,
    pub field_queries: u64,
    pub samples_per_ray: usize,
}

impl RenderOutput {
    /// Depth divided by alpha on the foreground, `sentinel` elsewhere.
    pub fn normalized_depth(&self, threshold: f64, sentinel: f64) -> Raster {
        let (w, h) = self.depth.dims();
        Raster::from_fn(w, h, |x, y| {
            let a = self.alpha.get(x, y, 0) as f64;
            if a > threshold {
                (self.depth.get(x, y, 0) as f64 / a) as f32
            } else {
                sentinel as f32
            }
        })
    }

    /// 1 where alpha exceeds `threshold`, else 0.
    pub fn mask(&self, threshold: f64) -> Raster {
        self.alpha.map(|a| if a as f64 > threshold { 1.0 } else { 0.0 })
    }
}

struct PixelResult {
    color: [f64; 3],
    depth: f64,
    normal: [f64; 3],
    alpha: f64,
}

/// Weights below this are skipped when accumulating normals.
const NORMAL_WEIGHT_FLOOR: f64 = 1e-6;

fn render_pixel<F: RadianceField + ?Sized>(field: &F, camera: &Camera, cfg: &RenderConfig, i: usize, j: usize) -> PixelResult {
    let ray = camera.pixel_ray(i, j);
    let (tn, tf) = (ray.t_near, ray.t_far);
    let mut rng = pixel_rng(cfg.seed, (j * camera.width() + i) as u64);

    let coarse_t = stratified_samples(tn, tf, cfg.n_uniform, if cfg.jitter { Some(&mut rng) } else { None });
    let coarse: Vec<_> = coarse_t.iter().map(|t| field.query(&ray.at(*t))).collect();

    let mut samples: Vec<(f64, crate::fields::FieldSample)> = coarse_t.iter().copied().zip(coarse.iter().copied()).collect();
    if cfg.n_importance > 0 {
        let sig: Vec<f64> = coarse.iter().map(|s| s.sigma).collect();
        let bin = (tf - tn) / cfg.n_uniform as f64;
        let (w, _) = compositing_weights(&coarse_t, &sig, bin).expect("stratified samples are sorted");
        // Spread each bin's weight to the bin before it: a jittered sample can land just past
        // a thin shell, leaving the stratum that actually holds the surface entry unweighted.
        let blurred: Vec<f64> = (0..w.len()).map(|k| w[k].max(*w.get(k + 1).unwrap_or(&0.0))).collect();
        for t in importance_samples(tn, tf, &blurred, cfg.n_importance, &mut rng) {
            samples.push((t, field.query(&ray.at(t))));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let t: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let sigma: Vec<f64> = samples.iter().map(|s| s.1.sigma).collect();
    let (w, t_final) = compositing_weights(&t, &sigma, (tf - tn) / samples.len() as f64).expect("samples are sorted");

    let cos = ray.direction.dot(&camera.forward());
    let mut color = [CompensatedSum::default(); 3];
    let mut depth = CompensatedSum::default();
    let mut normal = [0.0f64; 3];
    let h = field.normal_step();
    for (k, (tk, s)) in samples.iter().enumerate() {
        let wk = w[k];
        for c in 0..3 {
            color[c].add(wk * s.rgb[c]);
        }
        depth.add(wk * tk * cos);
        if cfg.compute_normals && wk > NORMAL_WEIGHT_FLOOR {
            if let Some(n) = field_normal(field, &ray.at(*tk), h) {
                let nc = camera.to_camera(&n);
                for c in 0..3 {
                    normal[c] += wk * nc[c];
                }
            }
        }
    }
    let alpha = 1.0 - t_final;
    if alpha > cfg.alpha_threshold {
        let len = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
        if len > 0.0 {
            normal = normal.map(|v| v / len);
        }
    }
    PixelResult {
        color: [0, 1, 2].map(|c| {
            let mut s = color[c];
            s.add(t_final * cfg.background[c]);
            s.value()
        }),
        depth: depth.value(),
        normal,
        alpha,
    }
}

/// Renders every pixel of `camera`. Output is bit-identical for a given config regardless of
/// thread count.
pub fn render_dense<F: RadianceField + ?Sized>(field: &F, camera: &Camera, cfg: &RenderConfig) -> Result<RenderOutput> {
    cfg.validate()?;
    let (w, h) = (camera.width(), camera.height());
    let pixels: Vec<PixelResult> = (0..w * h)
        .into_par_iter()
        .map(|k| render_pixel(field, camera, cfg, k % w, k / w))
        .collect();
    let mut color = Raster::new(w, h, 3);
    let mut depth = Raster::new(w, h, 1);
    let mut normal = Raster::new(w, h, 3);
    let mut alpha = Raster::new(w, h, 1);
    for (k, p) in pixels.iter().enumerate() {
        let (x, y) = (k % w, k / w);
        for c in 0..3 {
            color.set(x, y, c, p.color[c] as f32);
            normal.set(x, y, c, p.normal[c] as f32);
        }
        depth.set(x, y, 0, p.depth as f32);
        alpha.set(x, y, 0, p.alpha as f32);
    }
    Ok(RenderOutput {
        color,
        depth,
        normal,
        alpha,
        field_queries: (w * h * cfg.samples_per_ray()) as u64,
        samples_per_ray: cfg.samples_per_ray(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Intrinsics;
    use crate::fields::{Primitive, SdfScene, Shape, VoxelGrid};
    use crate::math::{Aabb, Mat3, Vec3};
    use proptest::prelude::*;

    fn cam(w: usize, h: usize, near: f64, far: f64) -> Camera {
        let intr = Intrinsics { fov_y: 40f64.to_radians(), width: w, height: h, near, far };
        Camera::new(Vec3::zeros(), Mat3::identity(), intr).unwrap()
    }

    fn sharp(shape: Shape, bounds: Aabb) -> SdfScene {
        SdfScene::new(vec![Primitive::new(shape, [0.7, 0.4, 0.2])], 0.003, 1000.0).unwrap().with_bounds(bounds)
    }

    #[test]
    fn midpoints_without_jitter() {
        assert_eq!(stratified_samples(0.0, 1.0, 4, None), vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn stratified_stays_in_bins_and_is_deterministic() {
        for seed in 0..50 {
            let a = stratified_samples(1.0, 3.0, 16, Some(&mut pixel_rng(seed, 3)));
            let b = stratified_samples(1.0, 3.0, 16, Some(&mut pixel_rng(seed, 3)));
            assert_eq!(a, b);
            for (i, t) in a.iter().enumerate() {
                let lo = 1.0 + i as f64 * 0.125;
                assert!(*t >= lo && *t < lo + 0.125);
            }
        }
    }

    #[test]
    fn degenerate_pdf_samples_one_bin() {
        let mut w = vec![0.0; 10];
        w[6] = 2.5;
        let s = importance_samples(0.0, 10.0, &w, 64, &mut pixel_rng(1, 0));
        assert!(s.iter().all(|t| (6.0..=7.0).contains(t)));
        assert!(s.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn zero_weights_fall_back_to_stratified() {
        let a = importance_samples(0.5, 2.5, &[0.0; 8], 12, &mut pixel_rng(4, 9));
        let b = stratified_samples(0.5, 2.5, 12, Some(&mut pixel_rng(4, 9)));
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_weights_give_uniform_histogram() {
        let bins = 10;
        let mut counts = vec![0usize; bins];
        let mut rng = pixel_rng(2, 0);
        let s = importance_samples(0.0, 1.0, &vec![1.0; bins], 10_000, &mut rng);
        for t in s {
            counts[((t * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let expect = 1000.0;
        let sd = (10_000.0 * 0.1 * 0.9f64).sqrt();
        let chi2: f64 = counts.iter().map(|c| (*c as f64 - expect).powi(2) / expect).sum();
        assert!(counts.iter().all(|c| (*c as f64 - expect).abs() < 4.0 * sd), "{counts:?}");
        // 9 degrees of freedom, p = 0.001 critical value
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn empty_space_composites_to_background() {
        let (v, a) = composite(&[0.1, 0.2, 0.3], &[0.0; 3], &[[0.9; 3]; 3], 0.1, [0.25, 0.5, 0.75]).unwrap();
        assert_eq!(a, 0.0);
        assert_eq!(v, [0.25, 0.5, 0.75]);
    }

    #[test]
    fn single_sample_half_opacity() {
        let ln2 = std::f64::consts::LN_2;
        let (v, a) = composite(&[0.0], &[ln2], &[[0.8]], 1.0, [0.2]).unwrap();
        assert!((a - 0.5).abs() < 1e-12);
        assert!((v[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_medium_transmittance() {
        let n = 1024;
        let t = stratified_samples(0.0, 1.0, n, None);
        let (_, a) = composite(&t, &vec![1.0; n], &vec![[0.0]; n], 1.0 / n as f64, [0.0]).unwrap();
        assert!((a - (1.0 - (-1.0f64).exp())).abs() < 1e-3);
    }

    #[test]
    fn decreasing_positions_are_rejected() {
        assert!(compositing_weights(&[0.1, 0.3, 0.2], &[1.0; 3], 0.1).is_err());
        assert!(compositing_weights(&[0.1, 0.1, 0.2], &[1.0; 3], 0.1).is_ok());
        assert!(compositing_weights(&[0.1], &[-1.0], 0.1).is_err());
    }

    /// Slab of unit density on [0, 1/3] sampled at midpoints of [0, 1]; a slab edge between
    /// samples makes the discretisation error first order.
    fn slab_error(n: usize) -> f64 {
        let t = stratified_samples(0.0, 1.0, n, None);
        let sigma: Vec<f64> = t.iter().map(|t| if *t < 1.0 / 3.0 { 1.0 } else { 0.0 }).collect();
        let (_, tf) = compositing_weights(&t, &sigma, 1.0 / n as f64).unwrap();
        ((1.0 - tf) - (1.0 - (-1.0f64 / 3.0).exp())).abs()
    }

    #[test]
    fn first_order_convergence() {
        let ratio = slab_error(256) / slab_error(512);
        assert!((1.5..=3.0).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn weights_partition_unity(raw in proptest::collection::vec((0.0f64..1.0, 0.0f64..50.0), 1..64)) {
            let mut t: Vec<f64> = raw.iter().map(|r| r.0).collect();
            t.sort_by(f64::total_cmp);
            let sigma: Vec<f64> = raw.iter().map(|r| r.1).collect();
            let (w, tf) = compositing_weights(&t, &sigma, 0.01).unwrap();
            prop_assert!(w.iter().all(|w| *w >= 0.0));
            prop_assert!((w.iter().sum::<f64>() + tf - 1.0).abs() < 1e-6);
            // T_i = 1 - sum_{j<i} w_j is non-increasing
            let mut acc = 0.0;
            let mut prev = 1.0;
            for wi in &w {
                acc += wi;
                prop_assert!(1.0 - acc <= prev + 1e-12);
                prev = 1.0 - acc;
            }
        }
    }

    #[test]
    fn empty_field_renders_background() {
        let f = VoxelGrid::uniform([2, 2, 2], Aabb::cube(1.0), [0.3; 3], 0.0).unwrap();
        let cfg = RenderConfig { background: [0.1, 0.2, 0.3], ..Default::default() };
        let out = render_dense(&f, &cam(6, 4, 0.5, 4.0), &cfg).unwrap();
        assert!(out.alpha.data().iter().all(|a| *a == 0.0));
        for k in 0..24 {
            let px = out.color.pixel(k % 6, k / 6);
            assert!((px[0] - 0.1).abs() < 1e-7 && (px[1] - 0.2).abs() < 1e-7 && (px[2] - 0.3).abs() < 1e-7);
        }
        assert_eq!(out.field_queries, 24 * 72);
    }

    #[test]
    fn fronto_parallel_plane_depth() {
        let bounds = Aabb::new([-3.0, -3.0, -3.5], [3.0, 3.0, 1.0]);
        let f = sharp(Shape::plane([0.0, 0.0, -2.0], [0.0, 0.0, 1.0]), bounds);
        let c = cam(16, 12, 0.5, 4.0);
        let out = render_dense(&f, &c, &RenderConfig::default()).unwrap();
        let d = out.normalized_depth(0.5, c.far());
        let tol = 2.0 * 3.5 / 72.0;
        assert!(out.alpha.data().iter().all(|a| *a > 0.99));
        assert!(d.data().iter().all(|z| (*z as f64 - 2.0).abs() < tol), "{:?}", d.data());
        for k in 0..16 * 12 {
            let n = out.normal.pixel(k % 16, k / 16);
            assert!((n[2] - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn sphere_principal_pixel() {
        let f = sharp(Shape::sphere([0.0, 0.0, -3.0], 1.0), Aabb::new([-2.0, -2.0, -5.0], [2.0, 2.0, 0.0]));
        let c = cam(9, 9, 1.0, 5.0);
        let out = render_dense(&f, &c, &RenderConfig::default()).unwrap();
        let d = out.normalized_depth(0.5, c.far()).get(4, 4, 0) as f64;
        assert!((d - 2.0).abs() < 2.0 * 4.0 / 72.0, "depth {d}");
        let n = out.normal.pixel(4, 4);
        // -forward in camera space is +z
        assert!((n[2] - 1.0).abs() < 1e-3, "{n:?}");
    }

    #[test]
    fn output_does_not_depend_on_thread_count() {
        let f = sharp(Shape::sphere([0.0, 0.0, -3.0], 1.0), Aabb::new([-2.0, -2.0, -5.0], [2.0, 2.0, 0.0]));
        let c = cam(24, 16, 1.0, 5.0);
        let cfg = RenderConfig { seed: 77, ..Default::default() };
        let a = render_dense(&f, &c, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| render_dense(&f, &c, &cfg).unwrap());
        assert_eq!(a, b);
        let other = render_dense(&f, &c, &RenderConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a.color, other.color);
    }

    #[test]
    fn importance_pass_is_neutral_on_constant_media() {
        let f = VoxelGrid::uniform([2, 2, 2], Aabb::cube(10.0), [0.6; 3], 0.4).unwrap();
        let c = cam(8, 8, 0.5, 4.0);
        let coarse_only = RenderConfig { n_importance: 0, seed: 3, ..Default::default() };
        let a = render_dense(&f, &c, &coarse_only).unwrap();
        let b = render_dense(&f, &c, &RenderConfig { seed: 3, ..Default::default() }).unwrap();
        for (x, y) in a.alpha.data().iter().zip(b.alpha.data()) {
            assert!((x - y).abs() < 0.02, "{x} vs {y}");
        }
    }
}
