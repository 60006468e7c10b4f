//! Pinhole camera, ray generation and depth unprojection.
//!
//! Conventions: camera space is +x right, +y up, looking down −z. Raster space has its
//! origin at the top-left image corner with y pointing down; pixel `(i, j)` has its
//! center at `(i + 0.5, j + 0.5)`. Depth is camera-z, i.e. `t * <d, forward>`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Resolution, field of view and clipping range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    /// Ray-parameter bounds `t_n < t_f`.
    pub near: f64,
    pub far: f64,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::Config(format!("fov must lie in (0, pi), got {}", self.fov_y)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image must have at least one pixel".into()));
        }
        if !(self.near > 0.0 && self.far > self.near && self.far.is_finite()) {
            return Err(Error::Config(format!("need 0 < near < far, got {} / {}", self.near, self.far)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    position: Vec3,
    /// Columns are the camera's right, up and back (+z) axes in world space.
    rotation: Mat3,
    intrinsics: Intrinsics,
}

impl Camera {
    pub fn new(position: Vec3, rotation: Mat3, intrinsics: Intrinsics) -> Result<Self> {
        intrinsics.validate()?;
        let err = (rotation * rotation.transpose() - Mat3::identity()).abs().max();
        if !(err <= 1e-9) || rotation.determinant() < 0.0 {
            return Err(Error::Config("camera orientation is not a rotation".into()));
        }
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("camera position is not finite".into()));
        }
        Ok(Self {
            position,
            rotation,
            intrinsics,
        })
    }

    /// Camera at `position` looking at `target`, with `up` resolving the roll.
    pub fn look_at(position: Vec3, target: Vec3, up: Vec3, intrinsics: Intrinsics) -> Result<Self> {
        let forward = target - position;
        if forward.norm() < 1e-12 {
            return Err(Error::Config("look-at target coincides with the camera".into()));
        }
        let back = -forward.normalize();
        let right = up.cross(&back);
        if right.norm() < 1e-9 {
            return Err(Error::Config("up vector is parallel to the view direction".into()));
        }
        let right = right.normalize();
        let true_up = back.cross(&right);
        Self::new(position, Mat3::from_columns(&[right, true_up, back]), intrinsics)
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn near(&self) -> f64 {
        self.intrinsics.near
    }

    pub fn far(&self) -> f64 {
        self.intrinsics.far
    }

    pub fn forward(&self) -> Vec3 {
        -self.rotation.column(2).into_owned()
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.intrinsics.height as f64 / (0.5 * self.intrinsics.fov_y).tan()
    }

    /// Width of one pixel on the fronto-parallel plane at unit depth.
    pub fn pixel_angle(&self) -> f64 {
        1.0 / self.focal()
    }

    /// Same pose and field of view at a different resolution.
    pub fn with_resolution(&self, width: usize, height: usize) -> Result<Self> {
        let mut intr = self.intrinsics;
        intr.width = width;
        intr.height = height;
        Self::new(self.position, self.rotation, intr)
    }

    /// Camera-space direction (not normalized, z = −1) through raster point `(x, y)`.
    fn camera_dir(&self, x: f64, y: f64) -> Vec3 {
        let f = self.focal();
        Vec3::new(
            (x - 0.5 * self.intrinsics.width as f64) / f,
            -(y - 0.5 * self.intrinsics.height as f64) / f,
            -1.0,
        )
    }

    /// Ray through the continuous raster point `(x, y)`.
    pub fn ray_through(&self, x: f64, y: f64) -> Ray {
        Ray {
            origin: self.position,
            direction: (self.rotation * self.camera_dir(x, y)).normalize(),
            t_near: self.intrinsics.near,
            t_far: self.intrinsics.far,
        }
    }

    /// Ray through the center of pixel `(i, j)`.
    pub fn pixel_ray(&self, i: usize, j: usize) -> Ray {
        self.ray_through(i as f64 + 0.5, j as f64 + 0.5)
    }

    /// One ray per pixel, row-major.
    pub fn make_rays(&self) -> Vec<Ray> {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        (0..w * h).map(|k| self.pixel_ray(k % w, k / w)).collect()
    }

    /// Camera-z of the point at ray parameter `t` along `ray`.
    pub fn depth_of(&self, ray: &Ray, t: f64) -> f64 {
        t * ray.direction.dot(&self.forward())
    }

    /// Ray parameter reaching camera-z `depth` along `ray`.
    pub fn t_of_depth(&self, ray: &Ray, depth: f64) -> f64 {
        depth / ray.direction.dot(&self.forward())
    }

    /// World point at camera-z `depth` on the ray through raster point `(x, y)`.
    pub fn unproject(&self, x: f64, y: f64, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::InvalidArgument(format!("depth must be positive, got {depth}")));
        }
        Ok(self.position + self.rotation * (self.camera_dir(x, y) * depth))
    }

    /// Raster position and camera-z of a world point; `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let c = self.rotation.transpose() * (p - self.position);
        let z = -c.z;
        if z <= 0.0 {
            return None;
        }
        let f = self.focal();
        Some((
            0.5 * self.intrinsics.width as f64 + f * c.x / z,
            0.5 * self.intrinsics.height as f64 - f * c.y / z,
            z,
        ))
    }

    /// World vector expressed in camera axes.
    pub fn to_camera(&self, v: &Vec3) -> Vec3 {
        self.rotation.transpose() * v
    }

    /// Orbit about the world up axis (+y) through `pivot`. The view direction turns with
    /// the position, so a camera aimed at `pivot` stays aimed at it.
    pub fn yaw_orbit(&self, yaw: f64, pivot: &Vec3) -> Result<Self> {
        if !(yaw.abs() < std::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!("yaw must lie in (-pi, pi), got {yaw}")));
        }
        let r = *nalgebra::Rotation3::from_axis_angle(&Vec3::y_axis(), yaw).matrix();
        let position = pivot + r * (self.position - pivot);
        let mut rotation = r * self.rotation;
        // re-orthonormalize so long chains of orbits stay within tolerance
        let svd = rotation.svd(true, true);
        if let (Some(u), Some(vt)) = (svd.u, svd.v_t) {
            rotation = u * vt;
        }
        Self::new(position, rotation, self.intrinsics)
    }

    pub fn to_record(&self) -> CameraRecord {
        let r = &self.rotation;
        CameraRecord {
            position: [self.position.x, self.position.y, self.position.z],
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            intrinsics: self.intrinsics,
        }
    }

    pub fn from_record(rec: &CameraRecord) -> Result<Self> {
        let m = &rec.rotation;
        let rotation = Mat3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        Self::new(Vec3::from(rec.position), rotation, rec.intrinsics)
    }
}

/// Serialized camera: the rotation is stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub position: [f64; 3],
    pub rotation: [[f64; 3]; 3],
    #[serde(flatten)]
    pub intrinsics: Intrinsics,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn intr(fov_deg: f64, w: usize, h: usize) -> Intrinsics {
        Intrinsics {
            fov_y: fov_deg.to_radians(),
            width: w,
            height: h,
            near: 0.5,
            far: 10.0,
        }
    }

    fn identity(w: usize, h: usize, fov: f64) -> Camera {
        Camera::new(Vec3::zeros(), Mat3::identity(), intr(fov, w, h)).unwrap()
    }

    fn orbit_cam() -> Camera {
        Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), intr(40.0, 64, 48)).unwrap()
    }

    #[test]
    fn single_pixel_principal_ray() {
        let rays = identity(1, 1, 40.0).make_rays();
        assert_eq!(rays.len(), 1);
        assert!((rays[0].direction - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn corner_rays_are_symmetric() {
        let rays = identity(2, 2, 90.0).make_rays();
        let d: Vec<Vec3> = rays.iter().map(|r| r.direction).collect();
        // row-major: top-left, top-right, bottom-left, bottom-right
        assert!(d[0].x < 0.0 && d[0].y > 0.0);
        assert!((d[0].x + d[1].x).abs() < 1e-12 && (d[0].y - d[1].y).abs() < 1e-12);
        assert!((d[0].y + d[2].y).abs() < 1e-12 && (d[0].x.abs() - d[0].y.abs()).abs() < 1e-12);
        assert!((d[0] + d[3] - 2.0 * d[0].z * Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn many_rays_are_unit() {
        let rays = orbit_cam().with_resolution(256, 256).unwrap().make_rays();
        assert_eq!(rays.len(), 65536);
        assert!(rays.iter().all(|r| (r.direction.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn rays_hit_their_pixel_centers() {
        let c = orbit_cam();
        for (k, r) in c.make_rays().iter().enumerate() {
            let (x, y, _) = c.project(&r.at(2.0)).unwrap();
            assert!((x - (k % 64) as f64 - 0.5).abs() < 1e-6);
            assert!((y - (k / 64) as f64 - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn unproject_principal_pixel() {
        let c = identity(4, 4, 60.0);
        let p = c.unproject(2.0, 2.0, 2.0).unwrap();
        assert!((p - Vec3::new(0.0, 0.0, -2.0)).norm() < 1e-12);
        let o = orbit_cam();
        let q = o.unproject(32.0, 24.0, 1.7).unwrap();
        assert!((q - (o.position() + 1.7 * o.forward())).norm() < 1e-12);
        assert!(c.unproject(1.0, 1.0, 0.0).is_err());
        assert!(c.unproject(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn depth_is_camera_z() {
        let c = orbit_cam();
        let r = c.pixel_ray(3, 40);
        let t = 2.5;
        let z = c.depth_of(&r, t);
        assert!(z < t);
        assert!((c.unproject(3.5, 40.5, z).unwrap() - r.at(t)).norm() < 1e-12);
        assert!((c.t_of_depth(&r, z) - t).abs() < 1e-12);
    }

    #[test]
    fn yaw_orbit_examples() {
        let c = orbit_cam();
        let same = c.yaw_orbit(0.0, &Vec3::zeros()).unwrap();
        assert!((same.rotation() - c.rotation()).abs().max() < 1e-12);
        let turned = c.yaw_orbit(0.4, &Vec3::zeros()).unwrap();
        let want = Vec3::new(3.0 * 0.4f64.sin(), 0.0, 3.0 * 0.4f64.cos());
        assert!((turned.position() - want).norm() < 1e-12);
        assert!((turned.forward() + want.normalize()).norm() < 1e-12);
        let back = turned.yaw_orbit(-0.4, &Vec3::zeros()).unwrap();
        assert!((back.position() - c.position()).norm() < 1e-9);
        assert!((back.rotation() - c.rotation()).abs().max() < 1e-9);
        assert!(c.yaw_orbit(4.0, &Vec3::zeros()).is_err());
    }

    #[test]
    fn rejects_bad_cameras() {
        assert!(Camera::new(Vec3::zeros(), Mat3::identity() * 1.01, intr(40.0, 4, 4)).is_err());
        assert!(Camera::new(Vec3::zeros(), Mat3::identity(), intr(180.0, 4, 4)).is_err());
        let mut i = intr(40.0, 4, 4);
        i.far = 0.2;
        assert!(Camera::new(Vec3::zeros(), Mat3::identity(), i).is_err());
        assert!(Camera::look_at(Vec3::zeros(), Vec3::y(), Vec3::y(), intr(40.0, 4, 4)).is_err());
    }

    #[test]
    fn record_roundtrip() {
        let c = orbit_cam().yaw_orbit(0.3, &Vec3::zeros()).unwrap();
        let json = serde_json::to_string(&c.to_record()).unwrap();
        let back = Camera::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    proptest! {
        #[test]
        fn project_unproject_roundtrip(x in 0.0f64..64.0, y in 0.0f64..48.0, z in 0.6f64..9.0, yaw in -1.0f64..1.0) {
            let c = orbit_cam().yaw_orbit(yaw, &Vec3::new(0.1, 0.0, -0.2)).unwrap();
            let p = c.unproject(x, y, z).unwrap();
            let (px, py, pz) = c.project(&p).unwrap();
            prop_assert!((px - x).abs() < 1e-6 && (py - y).abs() < 1e-6 && (pz - z).abs() < 1e-9);
            prop_assert!((c.unproject(px, py, pz).unwrap() - p).norm() < 1e-6);
        }
    }
}
