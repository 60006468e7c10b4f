//! Radiance fields: point queries returning colour and density.
//!
//! All fields are immutable once built and every query is read-only, so a single
//! field can be shared across rendering workers without locking.

mod grid_io;
mod sdf;
mod triplane;
mod voxel;

use std::sync::atomic::{AtomicU64, Ordering};

pub use grid_io::{decode_grid, encode_grid, read_grid, write_grid, GRID_MAGIC};
pub use sdf::{Primitive, SdfScene, Shape, Texture};
pub use triplane::{decode_features, PlaneAxes, TriPlaneGrid};
pub use voxel::VoxelGrid;

use crate::error::Result;
use crate::math::{Aabb, Vec3};

/// Colour and density at a point. `rgb` lies in [0,1]^3 and `sigma >= 0`
/// (per world unit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub rgb: [f64; 3],
    pub sigma: f64,
}

impl FieldSample {
    pub const EMPTY: FieldSample = FieldSample {
        rgb: [0.0; 3],
        sigma: 0.0,
    };
}

pub trait RadianceField: Send + Sync {
    fn query(&self, p: &Vec3) -> FieldSample;

    fn bounds(&self) -> Aabb;

    /// Default central-difference step for [`field_normal`].
    fn normal_step(&self) -> f64;

    /// A scalar whose gradient points along the outward surface normal.
    ///
    /// Defaults to `-sigma`. Fields with a closed-form distance override this, since
    /// a saturated density has a numerically vanishing gradient while the
    /// direction of `-grad sigma` is the same.
    fn normal_potential(&self, p: &Vec3) -> f64 {
        -self.query(p).sigma
    }
}

impl<F: RadianceField + ?Sized> RadianceField for &F {
    fn query(&self, p: &Vec3) -> FieldSample {
        (**self).query(p)
    }
    fn bounds(&self) -> Aabb {
        (**self).bounds()
    }
    fn normal_step(&self) -> f64 {
        (**self).normal_step()
    }
    fn normal_potential(&self, p: &Vec3) -> f64 {
        (**self).normal_potential(p)
    }
}

/// Unit normal `normalize(-grad sigma)` by central differences with step `h`.
///
/// Returns `None` where the gradient vanishes (the normal is undefined there).
pub fn field_normal<F: RadianceField + ?Sized>(field: &F, p: &Vec3, h: f64) -> Option<Vec3> {
    debug_assert!(h > 0.0);
    let mut g = Vec3::zeros();
    let mut scale = 0f64;
    for axis in 0..3 {
        let mut e = Vec3::zeros();
        e[axis] = h;
        let (a, b) = (field.normal_potential(&(p + e)), field.normal_potential(&(p - e)));
        scale = scale.max(a.abs()).max(b.abs());
        g[axis] = a - b;
    }
    let n = g.norm();
    // differences at rounding level of the potential are not a gradient
    if n > 1e-9 * scale.max(1e-300) && n.is_finite() {
        Some(g / n)
    } else {
        None
    }
}

/// Any of the concrete field kinds, dispatched statically.
#[derive(Debug, Clone)]
pub enum AnyField {
    Sdf(SdfScene),
    TriPlane(TriPlaneGrid),
    Voxel(VoxelGrid),
}

impl AnyField {
    /// Stand-in for the learned field super-resolution: grids are resampled to a
    /// finer lattice, analytic scenes are already resolution-free.
    pub fn upsampled(&self, factor: usize) -> Result<AnyField> {
        Ok(match self {
            AnyField::Sdf(s) => AnyField::Sdf(s.clone()),
            AnyField::TriPlane(t) => AnyField::TriPlane(t.upsample(factor)?),
            AnyField::Voxel(v) => AnyField::Voxel(v.upsample(factor)?),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyField::Sdf(_) => "sdf",
            AnyField::TriPlane(_) => "triplane",
            AnyField::Voxel(_) => "voxel",
        }
    }
}

impl RadianceField for AnyField {
    fn query(&self, p: &Vec3) -> FieldSample {
        match self {
            AnyField::Sdf(s) => s.query(p),
            AnyField::TriPlane(t) => t.query(p),
            AnyField::Voxel(v) => v.query(p),
        }
    }

    fn bounds(&self) -> Aabb {
        match self {
            AnyField::Sdf(s) => s.bounds(),
            AnyField::TriPlane(t) => t.bounds(),
            AnyField::Voxel(v) => v.bounds(),
        }
    }

    fn normal_step(&self) -> f64 {
        match self {
            AnyField::Sdf(s) => s.normal_step(),
            AnyField::TriPlane(t) => t.normal_step(),
            AnyField::Voxel(v) => v.normal_step(),
        }
    }

    fn normal_potential(&self, p: &Vec3) -> f64 {
        match self {
            AnyField::Sdf(s) => s.normal_potential(p),
            AnyField::TriPlane(t) => t.normal_potential(p),
            AnyField::Voxel(v) => v.normal_potential(p),
        }
    }
}

/// Wraps a field and counts every `query` call.
#[derive(Debug)]
pub struct CountingField<F> {
    inner: F,
    queries: AtomicU64,
}

impl<F> CountingField<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            queries: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }
}

impl<F: RadianceField> RadianceField for CountingField<F> {
    fn query(&self, p: &Vec3) -> FieldSample {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.inner.query(p)
    }
    fn bounds(&self) -> Aabb {
        self.inner.bounds()
    }
    fn normal_step(&self) -> f64 {
        self.inner.normal_step()
    }
    fn normal_potential(&self, p: &Vec3) -> f64 {
        self.inner.normal_potential(p)
    }
}
