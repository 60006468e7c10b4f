use rand::{Rng, SeedableRng};

use super::{FieldSample, RadianceField};
use crate::error::{Error, Result};
use crate::math::{clamp01, softplus, Aabb, Vec3};

/// The three axis-aligned feature planes, identified by the world axes that map to
/// the plane's (u, v) texture coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneAxes {
    XY,
    YZ,
    ZX,
}

impl PlaneAxes {
    pub const ALL: [PlaneAxes; 3] = [PlaneAxes::XY, PlaneAxes::YZ, PlaneAxes::ZX];

    pub fn axes(self) -> (usize, usize) {
        match self {
            PlaneAxes::XY => (0, 1),
            PlaneAxes::YZ => (1, 2),
            PlaneAxes::ZX => (2, 0),
        }
    }
}

/// Fixed decode: clamped channels 0..3 give colour, softplus of channel 3 gives density.
pub fn decode_features(feature: &[f64]) -> Result<FieldSample> {
    if feature.len() < 4 {
        return Err(Error::Config(format!(
            "decoding needs at least 4 feature channels, got {}",
            feature.len()
        )));
    }
    Ok(decode4(&[feature[0], feature[1], feature[2], feature[3]]))
}

#[inline]
fn decode4(f: &[f64; 4]) -> FieldSample {
    FieldSample {
        rgb: [clamp01(f[0]), clamp01(f[1]), clamp01(f[2])],
        sigma: softplus(f[3]),
    }
}

/// Tri-plane feature grid with align-corners texel placement: texel 0 sits on the
/// box minimum and texel `R-1` on the maximum along each plane axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TriPlaneGrid {
    resolution: usize,
    channels: usize,
    bounds: Aabb,
    /// One `R*R*C` buffer per plane in [`PlaneAxes::ALL`] order, `(v*R + u)*C + c`.
    planes: [Vec<f32>; 3],
}

impl TriPlaneGrid {
    pub fn from_planes(resolution: usize, channels: usize, bounds: Aabb, planes: [Vec<f32>; 3]) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Config("tri-plane resolution must be at least 2".into()));
        }
        if channels < 4 {
            return Err(Error::Config(format!(
                "tri-plane needs at least 4 channels, got {channels}"
            )));
        }
        if !bounds.is_valid() {
            return Err(Error::Config("invalid bounding box".into()));
        }
        let n = resolution * resolution * channels;
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::mismatch(format!("{n} values per plane"), "different plane sizes"));
        }
        Ok(Self {
            resolution,
            channels,
            bounds,
            planes,
        })
    }

    pub fn constant(resolution: usize, channels: usize, bounds: Aabb, value: f32) -> Result<Self> {
        let n = resolution * resolution * channels;
        Self::from_planes(resolution, channels, bounds, [vec![value; n], vec![value; n], vec![value; n]])
    }

    /// Uniform random features in `[-scale, scale]`.
    pub fn random(resolution: usize, channels: usize, bounds: Aabb, scale: f32, seed: u64) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = resolution * resolution * channels;
        let mut plane = || (0..n).map(|_| rng.random_range(-scale..=scale)).collect::<Vec<f32>>();
        let planes = [plane(), plane(), plane()];
        Self::from_planes(resolution, channels.max(4), bounds, planes).expect("valid random grid")
    }

    /// A soft ball whose density feature is `sharpness * (radius^2 - |p|^2)`, split
    /// evenly across the planes, with a smooth colour gradient.
    pub fn soft_sphere(resolution: usize, bounds: Aabb, radius: f64, sharpness: f64, base: [f64; 3]) -> Self {
        let channels = 4;
        let r = resolution;
        let mut planes: [Vec<f32>; 3] = Default::default();
        for (k, axes) in PlaneAxes::ALL.iter().enumerate() {
            let (ua, va) = axes.axes();
            let mut buf = vec![0f32; r * r * channels];
            for v in 0..r {
                for u in 0..r {
                    let pu = bounds.min[ua] + bounds.extent(ua) * u as f64 / (r - 1) as f64;
                    let pv = bounds.min[va] + bounds.extent(va) * v as f64 / (r - 1) as f64;
                    let o = (v * r + u) * channels;
                    for c in 0..3 {
                        // per-plane share of the base colour plus a gentle tint along u
                        buf[o + c] = (base[c] / 3.0 + 0.08 * (pu * (c as f64 + 1.0)).sin()) as f32;
                    }
                    buf[o + 3] = (sharpness * (radius * radius / 3.0 - 0.5 * (pu * pu + pv * pv))) as f32;
                }
            }
            planes[k] = buf;
        }
        Self::from_planes(resolution, channels, bounds, planes).expect("valid soft sphere")
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plane(&self, which: PlaneAxes) -> &[f32] {
        &self.planes[which as usize]
    }

    pub fn texel(&self, which: PlaneAxes, u: usize, v: usize, c: usize) -> f32 {
        self.planes[which as usize][(v * self.resolution + u) * self.channels + c]
    }

    /// World position of texel `(u, v)` projected on its plane's axes.
    pub fn texel_position(&self, which: PlaneAxes, u: usize, v: usize) -> (f64, f64) {
        let (ua, va) = which.axes();
        let step = |axis: usize, i: usize| {
            self.bounds.min[axis] + self.bounds.extent(axis) * i as f64 / (self.resolution - 1) as f64
        };
        (step(ua, u), step(va, v))
    }

    /// Bilinear fetch of channels `[0, out.len())` from one plane at normalized (u, v).
    fn accumulate_plane(&self, which: PlaneAxes, u01: f64, v01: f64, out: &mut [f64]) {
        let r = self.resolution;
        let last = (r - 1) as f64;
        let fu = (u01 * last).clamp(0.0, last);
        let fv = (v01 * last).clamp(0.0, last);
        let u0 = (fu.floor() as usize).min(r - 2);
        let v0 = (fv.floor() as usize).min(r - 2);
        let tu = fu - u0 as f64;
        let tv = fv - v0 as f64;
        let plane = &self.planes[which as usize];
        let c = self.channels;
        let i00 = (v0 * r + u0) * c;
        let i10 = i00 + c;
        let i01 = i00 + r * c;
        let i11 = i01 + c;
        let w00 = (1.0 - tu) * (1.0 - tv);
        let w10 = tu * (1.0 - tv);
        let w01 = (1.0 - tu) * tv;
        let w11 = tu * tv;
        for (ch, o) in out.iter_mut().enumerate() {
            *o += w00 * plane[i00 + ch] as f64
                + w10 * plane[i10 + ch] as f64
                + w01 * plane[i01 + ch] as f64
                + w11 * plane[i11 + ch] as f64;
        }
    }

    fn accumulate(&self, p: &Vec3, out: &mut [f64]) {
        for which in PlaneAxes::ALL {
            let (ua, va) = which.axes();
            self.accumulate_plane(which, self.bounds.normalized(p, ua), self.bounds.normalized(p, va), out);
        }
    }

    /// Summed bilinear features of the three planes; zero outside the box.
    pub fn sample(&self, p: &Vec3) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        if self.bounds.contains(p) {
            self.accumulate(p, &mut out);
        }
        out
    }

    /// Resamples every plane onto a `new_resolution` lattice over the same box.
    pub fn upsample_to(&self, new_resolution: usize) -> Result<Self> {
        if new_resolution < 2 {
            return Err(Error::InvalidArgument("target resolution must be at least 2".into()));
        }
        let r2 = new_resolution;
        let c = self.channels;
        let mut planes: [Vec<f32>; 3] = Default::default();
        let mut texel = vec![0.0f64; c];
        for which in PlaneAxes::ALL {
            let mut buf = Vec::with_capacity(r2 * r2 * c);
            for v in 0..r2 {
                for u in 0..r2 {
                    texel.iter_mut().for_each(|t| *t = 0.0);
                    let last = (r2 - 1) as f64;
                    self.accumulate_plane(which, u as f64 / last, v as f64 / last, &mut texel);
                    buf.extend(texel.iter().map(|t| *t as f32));
                }
            }
            planes[which as usize] = buf;
        }
        Self::from_planes(r2, c, self.bounds, planes)
    }

    /// `factor`x finer lattice that keeps every existing texel as a node:
    /// `R' = factor * (R - 1) + 1`.
    pub fn upsample(&self, factor: usize) -> Result<Self> {
        if factor < 2 {
            return Err(Error::InvalidArgument(format!("upsample factor must be >= 2, got {factor}")));
        }
        self.upsample_to(factor * (self.resolution - 1) + 1)
    }
}

impl RadianceField for TriPlaneGrid {
    fn query(&self, p: &Vec3) -> FieldSample {
        if !self.bounds.contains(p) {
            return FieldSample::EMPTY;
        }
        let mut f = [0.0; 4];
        self.accumulate(p, &mut f);
        decode4(&f)
    }

    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn normal_step(&self) -> f64 {
        let r = (self.resolution - 1) as f64;
        (0..3).map(|a| self.bounds.extent(a) / r).fold(f64::INFINITY, f64::min) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_matches_closed_forms() {
        let q = decode_features(&[2.0, -1.0, 0.5, 0.0]).unwrap();
        assert_eq!(q.rgb, [1.0, 0.0, 0.5]);
        assert!((q.sigma - 0.693_147_180_559_945_3).abs() < 1e-15);
        let tail = decode_features(&[0.0, 0.0, 0.0, -50.0]).unwrap();
        assert!(tail.sigma > 0.0 && (tail.sigma - (-50.0f64).exp()).abs() < 1e-30);
        assert!(matches!(decode_features(&[0.0; 3]), Err(Error::Config(_))));
    }

    #[test]
    fn constant_planes_sum_to_three_v() {
        let g = TriPlaneGrid::constant(5, 4, Aabb::cube(1.0), 0.25).unwrap();
        for p in [Vec3::new(0.1, -0.7, 0.33), Vec3::new(0.99, 0.99, -0.99)] {
            assert!(g.sample(&p).iter().all(|v| (v - 0.75).abs() < 1e-7));
        }
    }

    #[test]
    fn texel_node_returns_sum_of_texels() {
        let g = TriPlaneGrid::random(5, 4, Aabb::cube(1.0), 1.0, 3);
        // (x, y, z) = (-0.5, 0.0, 0.5) -> texel indices 1, 2, 3 on a 5-texel lattice
        let p = Vec3::new(-0.5, 0.0, 0.5);
        let f = g.sample(&p);
        for c in 0..4 {
            let expected = g.texel(PlaneAxes::XY, 1, 2, c) as f64
                + g.texel(PlaneAxes::YZ, 2, 3, c) as f64
                + g.texel(PlaneAxes::ZX, 3, 1, c) as f64;
            assert!((f[c] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn midpoint_averages_four_texels() {
        let r = 4;
        let c = 4;
        let mut xy = vec![0f32; r * r * c];
        for (i, v) in xy.iter_mut().enumerate() {
            *v = (i as f32 * 0.37).sin();
        }
        let zero = vec![0f32; r * r * c];
        let g = TriPlaneGrid::from_planes(r, c, Aabb::cube(1.0), [xy.clone(), zero.clone(), zero]).unwrap();
        // halfway between texels (1,1),(2,1),(1,2),(2,2) of the XY plane
        let (x0, y0) = g.texel_position(PlaneAxes::XY, 1, 1);
        let (x1, y1) = g.texel_position(PlaneAxes::XY, 2, 2);
        let p = Vec3::new(0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.1);
        let f = g.sample(&p);
        for ch in 0..c {
            let t = |u: usize, v: usize| xy[(v * r + u) * c + ch] as f64;
            let avg = 0.25 * (t(1, 1) + t(2, 1) + t(1, 2) + t(2, 2));
            assert!((f[ch] - avg).abs() < 1e-6);
        }
    }

    #[test]
    fn outside_box_gives_zero_features_and_empty_field() {
        let g = TriPlaneGrid::constant(3, 4, Aabb::cube(1.0), 1.0).unwrap();
        let p = Vec3::new(1.2, 0.0, 0.0);
        assert!(g.sample(&p).iter().all(|v| *v == 0.0));
        assert_eq!(g.query(&p), FieldSample::EMPTY);
    }

    #[test]
    fn upsample_two_by_two_to_four_texels() {
        let c = 4;
        let mut xy = vec![0f32; 2 * 2 * c];
        // plane [[0,1],[0,1]] in channel 0 (rows v, columns u)
        for v in 0..2 {
            xy[(v * 2 + 1) * c] = 1.0;
        }
        let z = vec![0f32; 2 * 2 * c];
        let g = TriPlaneGrid::from_planes(2, c, Aabb::cube(1.0), [xy, z.clone(), z]).unwrap();
        let up = g.upsample_to(4).unwrap();
        let cols: Vec<f32> = (0..4).map(|u| up.texel(PlaneAxes::XY, u, 0, 0)).collect();
        for (got, want) in cols.iter().zip([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-6, "{cols:?}");
        }
        // the node-preserving factor form on the same plane
        let f2 = g.upsample(2).unwrap();
        assert_eq!(f2.resolution(), 3);
        assert!((f2.texel(PlaneAxes::XY, 1, 0, 0) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn upsample_rejects_small_factor_and_keeps_constants() {
        let g = TriPlaneGrid::constant(4, 4, Aabb::cube(1.0), 0.3).unwrap();
        assert!(g.upsample(1).is_err());
        let up = g.upsample(4).unwrap();
        assert!(up.plane(PlaneAxes::YZ).iter().all(|v| (v - 0.3).abs() < 1e-7));
    }

    proptest! {
        #[test]
        fn sampling_is_linear_in_texels(seed_a in any::<u64>(), seed_b in any::<u64>(),
                                        x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let a = TriPlaneGrid::random(5, 4, Aabb::cube(1.0), 2.0, seed_a);
            let b = TriPlaneGrid::random(5, 4, Aabb::cube(1.0), 2.0, seed_b);
            let sum_planes = PlaneAxes::ALL.map(|k| a.plane(k).iter().zip(b.plane(k)).map(|(p, q)| p + q).collect::<Vec<f32>>());
            let s = TriPlaneGrid::from_planes(5, 4, Aabb::cube(1.0), sum_planes).unwrap();
            let p = Vec3::new(x, y, z);
            let (fa, fb, fs) = (a.sample(&p), b.sample(&p), s.sample(&p));
            for c in 0..4 {
                prop_assert!((fs[c] - fa[c] - fb[c]).abs() < 1e-5);
            }
        }

        #[test]
        fn upsample_preserves_nodes(seed in any::<u64>(), factor in 2usize..5, u in 0usize..5, v in 0usize..5, w in 0usize..5) {
            let g = TriPlaneGrid::random(5, 4, Aabb::cube(1.0), 2.0, seed);
            let up = g.upsample(factor).unwrap();
            let coord = |i: usize| -1.0 + 2.0 * i as f64 / 4.0;
            let p = Vec3::new(coord(u), coord(v), coord(w));
            let (a, b) = (g.sample(&p), up.sample(&p));
            for c in 0..4 {
                prop_assert!((a[c] - b[c]).abs() < 1e-6);
            }
        }
    }
}
