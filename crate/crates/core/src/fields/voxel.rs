use super::{FieldSample, RadianceField};
use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};

/// Dense lattice of `(r, g, b, sigma)` with align-corners trilinear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: [usize; 3],
    bounds: Aabb,
    /// x-fastest, four values per node.
    data: Vec<f32>,
}

impl VoxelGrid {
    pub fn from_data(resolution: [usize; 3], bounds: Aabb, data: Vec<f32>) -> Result<Self> {
        if resolution.iter().any(|r| *r < 2) {
            return Err(Error::Config("voxel resolution must be at least 2 per axis".into()));
        }
        if !bounds.is_valid() {
            return Err(Error::Config("invalid bounding box".into()));
        }
        let n = resolution.iter().product::<usize>() * 4;
        if data.len() != n {
            return Err(Error::mismatch(n, data.len()));
        }
        for node in data.chunks_exact(4) {
            if node[..3].iter().any(|c| !(0.0..=1.0).contains(c)) || !(node[3] >= 0.0) || !node[3].is_finite() {
                return Err(Error::Config(format!("voxel node out of range: {node:?}")));
            }
        }
        Ok(Self {
            resolution,
            bounds,
            data,
        })
    }

    pub fn uniform(resolution: [usize; 3], bounds: Aabb, rgb: [f32; 3], sigma: f32) -> Result<Self> {
        let n: usize = resolution.iter().product();
        let data = (0..n).flat_map(|_| [rgb[0], rgb[1], rgb[2], sigma]).collect();
        Self::from_data(resolution, bounds, data)
    }

    /// Samples `field` at every lattice node.
    pub fn bake<F: RadianceField + ?Sized>(field: &F, resolution: [usize; 3], bounds: Aabb) -> Self {
        let [rx, ry, rz] = resolution;
        let mut data = Vec::with_capacity(rx * ry * rz * 4);
        for k in 0..rz {
            for j in 0..ry {
                for i in 0..rx {
                    let p = Self::node_position(&bounds, resolution, [i, j, k]);
                    let q = field.query(&p);
                    data.extend([q.rgb[0] as f32, q.rgb[1] as f32, q.rgb[2] as f32, q.sigma as f32]);
                }
            }
        }
        Self::from_data(resolution, bounds, data).expect("baked values come from a valid field")
    }

    fn node_position(bounds: &Aabb, resolution: [usize; 3], idx: [usize; 3]) -> Vec3 {
        Vec3::new(
            bounds.min[0] + bounds.extent(0) * idx[0] as f64 / (resolution[0] - 1) as f64,
            bounds.min[1] + bounds.extent(1) * idx[1] as f64 / (resolution[1] - 1) as f64,
            bounds.min[2] + bounds.extent(2) * idx[2] as f64 / (resolution[2] - 1) as f64,
        )
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> &[f32] {
        let [rx, ry, _] = self.resolution;
        let o = ((k * ry + j) * rx + i) * 4;
        &self.data[o..o + 4]
    }

    pub fn node_world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Self::node_position(&self.bounds, self.resolution, [i, j, k])
    }

    fn interpolate(&self, p: &Vec3) -> [f64; 4] {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let last = (self.resolution[a] - 1) as f64;
            let f = (self.bounds.normalized(p, a) * last).clamp(0.0, last);
            let i0 = (f.floor() as usize).min(self.resolution[a] - 2);
            base[a] = i0;
            frac[a] = f - i0 as f64;
        }
        let mut out = [0f64; 4];
        for corner in 0..8 {
            let (di, dj, dk) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = (if di == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if dj == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if dk == 1 { frac[2] } else { 1.0 - frac[2] });
            if w == 0.0 {
                continue;
            }
            let n = self.node(base[0] + di, base[1] + dj, base[2] + dk);
            for c in 0..4 {
                out[c] += w * n[c] as f64;
            }
        }
        out
    }

    pub fn upsample_to(&self, resolution: [usize; 3]) -> Result<Self> {
        if resolution.iter().any(|r| *r < 2) {
            return Err(Error::InvalidArgument("target resolution must be at least 2".into()));
        }
        let [rx, ry, rz] = resolution;
        let mut data = Vec::with_capacity(rx * ry * rz * 4);
        for k in 0..rz {
            for j in 0..ry {
                for i in 0..rx {
                    let p = Self::node_position(&self.bounds, resolution, [i, j, k]);
                    data.extend(self.interpolate(&p).map(|v| v as f32));
                }
            }
        }
        Self::from_data(resolution, self.bounds, data)
    }

    /// `factor`x finer lattice that keeps every node: `R' = factor * (R - 1) + 1`.
    pub fn upsample(&self, factor: usize) -> Result<Self> {
        if factor < 2 {
            return Err(Error::InvalidArgument(format!("upsample factor must be >= 2, got {factor}")));
        }
        self.upsample_to(self.resolution.map(|r| factor * (r - 1) + 1))
    }
}

impl RadianceField for VoxelGrid {
    fn query(&self, p: &Vec3) -> FieldSample {
        if !self.bounds.contains(p) {
            return FieldSample::EMPTY;
        }
        let v = self.interpolate(p);
        FieldSample {
            rgb: [v[0].clamp(0.0, 1.0), v[1].clamp(0.0, 1.0), v[2].clamp(0.0, 1.0)],
            sigma: v[3].max(0.0),
        }
    }

    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn normal_step(&self) -> f64 {
        (0..3)
            .map(|a| self.bounds.extent(a) / (self.resolution[a] - 1) as f64)
            .fold(f64::INFINITY, f64::min)
            * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn ramp() -> VoxelGrid {
        let res = [3, 4, 5];
        let mut data = Vec::new();
        for k in 0..5 {
            for j in 0..4 {
                for i in 0..3 {
                    data.extend([0.1 * i as f32, 0.2 * j as f32, 0.05 * k as f32, (i + 2 * j + 3 * k) as f32]);
                }
            }
        }
        VoxelGrid::from_data(res, Aabb::cube(1.0), data).unwrap()
    }

    #[test]
    fn trilinear_reproduces_affine_density() {
        let g = ramp();
        // sigma = i + 2j + 3k in index space is affine in world space
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let i = (p.x + 1.0) / 2.0 * 2.0;
            let j = (p.y + 1.0) / 2.0 * 3.0;
            let k = (p.z + 1.0) / 2.0 * 4.0;
            assert!((g.query(&p).sigma - (i + 2.0 * j + 3.0 * k)).abs() < 1e-5);
        }
    }

    #[test]
    fn outside_box_is_empty() {
        assert_eq!(ramp().query(&Vec3::new(0.0, 1.01, 0.0)), FieldSample::EMPTY);
    }

    #[test]
    fn rejects_negative_density() {
        assert!(VoxelGrid::from_data([2, 2, 2], Aabb::cube(1.0), [0.0, 0.0, 0.0, -1.0].repeat(8)).is_err());
    }

    #[test]
    fn upsample_preserves_nodes_and_constants() {
        let g = ramp();
        let up = g.upsample(3).unwrap();
        assert_eq!(up.resolution(), [7, 10, 13]);
        for (i, j, k) in [(0, 0, 0), (1, 2, 3), (2, 3, 4)] {
            let p = g.node_world(i, j, k);
            let (a, b) = (g.query(&p), up.query(&p));
            assert!((a.sigma - b.sigma).abs() < 1e-5);
            assert!((a.rgb[1] - b.rgb[1]).abs() < 1e-6);
        }
        let c = VoxelGrid::uniform([3, 3, 3], Aabb::cube(1.0), [0.2, 0.4, 0.6], 2.0).unwrap();
        assert!(c.upsample(4).unwrap().data().chunks(4).all(|n| n == [0.2, 0.4, 0.6, 2.0]));
        assert!(c.upsample(1).is_err());
    }
}
