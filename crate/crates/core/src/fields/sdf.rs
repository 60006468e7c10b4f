use serde::{Deserialize, Serialize};

use super::{FieldSample, RadianceField};
use crate::error::{Error, Result};
use crate::math::{clamp01, Aabb, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half_extents: [f64; 3] },
    /// Half-space; the solid side is opposite the normal.
    Plane { point: [f64; 3], normal: [f64; 3] },
}

impl Shape {
    pub fn sphere(center: [f64; 3], radius: f64) -> Self {
        Shape::Sphere { center, radius }
    }

    pub fn cuboid(center: [f64; 3], half_extents: [f64; 3]) -> Self {
        Shape::Box {
            center,
            half_extents,
        }
    }

    pub fn plane(point: [f64; 3], normal: [f64; 3]) -> Self {
        Shape::Plane { point, normal }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (p - Vec3::from(*center)).norm() - radius,
            Shape::Box {
                center,
                half_extents,
            } => {
                let d = p - Vec3::from(*center);
                let q = Vec3::new(
                    d.x.abs() - half_extents[0],
                    d.y.abs() - half_extents[1],
                    d.z.abs() - half_extents[2],
                );
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
            Shape::Plane { point, normal } => {
                let n = Vec3::from(*normal);
                (p - Vec3::from(*point)).dot(&n) / n.norm()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Sphere { radius, .. } => *radius > 0.0,
            Shape::Box { half_extents, .. } => half_extents.iter().all(|h| *h > 0.0),
            Shape::Plane { normal, .. } => Vec3::from(*normal).norm() > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate primitive {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub albedo: [f64; 3],
}

impl Primitive {
    pub fn new(shape: Shape, albedo: [f64; 3]) -> Self {
        Self { shape, albedo }
    }
}

/// Procedural albedo modulation so that colour varies over surfaces.
///
/// The pattern is even in `x`, which keeps mirror-symmetric scenes symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub amplitude: f64,
    pub frequency: f64,
}

impl Texture {
    fn offset(&self, p: &Vec3, channel: usize) -> f64 {
        let phase = 2.1 * channel as f64;
        let f = self.frequency;
        0.5 * self.amplitude * ((f * p.y + phase).sin() + (f * p.x).cos() * (f * p.z + phase).sin())
    }
}

fn default_beta() -> f64 {
    0.01
}

fn default_sigma_max() -> f64 {
    100.0
}

fn default_bounds() -> Aabb {
    Aabb::cube(2.0)
}

/// Union of analytic primitives turned into a density shell
/// `sigma = sigma_max / (1 + exp(s / beta))` around the zero level set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfScene {
    pub primitives: Vec<Primitive>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_sigma_max")]
    pub sigma_max: f64,
    #[serde(default = "default_bounds")]
    pub bounds: Aabb,
    #[serde(default)]
    pub texture: Option<Texture>,
}

impl SdfScene {
    pub fn new(primitives: Vec<Primitive>, beta: f64, sigma_max: f64) -> Result<Self> {
        let s = Self {
            primitives,
            beta,
            sigma_max,
            bounds: default_bounds(),
            texture: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_bounds(mut self, bounds: Aabb) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_texture(mut self, texture: Texture) -> Self {
        self.texture = Some(texture);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::Config("scene has no primitives".into()));
        }
        if !(self.beta > 0.0) || !(self.sigma_max > 0.0) {
            return Err(Error::Config(format!(
                "beta and sigma_max must be positive (beta={}, sigma_max={})",
                self.beta, self.sigma_max
            )));
        }
        if !self.bounds.is_valid() {
            return Err(Error::Config("invalid bounding box".into()));
        }
        for p in &self.primitives {
            p.shape.validate()?;
            if p.albedo.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Config("albedo outside [0,1]".into()));
            }
        }
        Ok(())
    }

    /// Minimum signed distance and the index of the closest primitive.
    pub fn signed_distance(&self, p: &Vec3) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, prim) in self.primitives.iter().enumerate() {
            let s = prim.shape.signed_distance(p);
            if s < best.0 {
                best = (s, i);
            }
        }
        best
    }

    pub fn density_at_distance(&self, s: f64) -> f64 {
        self.sigma_max / (1.0 + (s / self.beta).exp())
    }

    /// First ray parameter in `[t_min, t_max]` where the clipped solid is entered,
    /// by sphere tracing the distance function.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let (mut t0, mut t1) = (t_min, t_max);
        for axis in 0..3 {
            if dir[axis].abs() < 1e-15 {
                if origin[axis] < self.bounds.min[axis] || origin[axis] > self.bounds.max[axis] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[axis];
            let mut a = (self.bounds.min[axis] - origin[axis]) * inv;
            let mut b = (self.bounds.max[axis] - origin[axis]) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        if t0 > t1 {
            return None;
        }
        let mut t = t0;
        for _ in 0..4096 {
            let s = self.signed_distance(&(origin + dir * t)).0;
            if s <= 1e-9 {
                return Some(t);
            }
            t += s;
            if t > t1 {
                return None;
            }
        }
        None
    }
}

impl RadianceField for SdfScene {
    fn query(&self, p: &Vec3) -> FieldSample {
        if !self.bounds.contains(p) {
            return FieldSample::EMPTY;
        }
        let (s, idx) = self.signed_distance(p);
        let albedo = self.primitives[idx].albedo;
        let rgb = match &self.texture {
            Some(t) => [0, 1, 2].map(|c| clamp01(albedo[c] + t.offset(p, c))),
            None => albedo,
        };
        FieldSample {
            rgb,
            sigma: self.density_at_distance(s),
        }
    }

    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn normal_step(&self) -> f64 {
        1e-3
    }

    fn normal_potential(&self, p: &Vec3) -> f64 {
        self.signed_distance(p).0
    }
}
