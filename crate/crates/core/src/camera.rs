//! Perspective camera, world/NDC transforms, per-pixel rays and ray clipping.
//!
//! Conventions used everywhere, including the VDI file format: right-handed
//! view space with the camera looking down -z, OpenGL-style NDC in `[-1, 1]^3`
//! with the near plane at z = -1 and the far plane at z = +1. Pixel `(ix, iy)`
//! has its center at `(ix + 0.5, iy + 0.5)` with row 0 at the top of the image.

use std::fs;
use std::path::Path;

use nalgebra::{
    Isometry3, Matrix4, Perspective3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3, Vector4,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("point projects with |w| < 1e-12")]
    DegenerateW,
    #[error("invalid camera: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Axis-aligned box in world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// A ray with its active parameter interval `[t_near, t_far]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: Vector3<f64>,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    /// Unbounded ray starting at `origin`; `dir` is normalized.
    pub fn new(origin: Point3<f64>, dir: Vector3<f64>) -> Self {
        Self {
            origin,
            dir: dir.normalize(),
            t_near: 0.0,
            t_far: f64::INFINITY,
        }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: Point3<f64>,
    /// Camera-to-world rotation.
    pub orientation: UnitQuaternion<f64>,
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
    pub viewport: (u32, u32),
}

impl Camera {
    pub const DEFAULT_NEAR: f64 = 0.1;

    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        fov_y: f64,
        near: f64,
        far: f64,
        viewport: (u32, u32),
    ) -> Self {
        let view = Isometry3::look_at_rh(&eye, &target, &up);
        Self {
            position: eye,
            orientation: view.rotation.inverse(),
            fov_y,
            near,
            far,
            viewport,
        }
    }

    /// Camera at `distance` from the box center along +z, looking at it, with
    /// near = 0.1 and far = 10x the box diagonal.
    pub fn framing(aabb: &Aabb, distance: f64, fov_y: f64, viewport: (u32, u32)) -> Self {
        let c = aabb.center();
        Self::look_at(
            c + Vector3::new(0.0, 0.0, distance),
            c,
            Vector3::y(),
            fov_y,
            Self::DEFAULT_NEAR,
            10.0 * aabb.diagonal(),
            viewport,
        )
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(CameraError::Invalid(format!(
                "need 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(CameraError::Invalid(format!("fov_y {} out of (0, pi)", self.fov_y)));
        }
        if self.viewport.0 == 0 || self.viewport.1 == 0 {
            return Err(CameraError::Invalid("empty viewport".into()));
        }
        Ok(())
    }

    pub fn with_viewport(mut self, viewport: (u32, u32)) -> Self {
        self.viewport = viewport;
        self
    }

    pub fn aspect(&self) -> f64 {
        self.viewport.0 as f64 / self.viewport.1 as f64
    }

    /// Unit vector the camera looks along.
    pub fn forward(&self) -> Vector3<f64> {
        self.orientation * -Vector3::z()
    }

    pub fn view_matrix(&self) -> Matrix4<f64> {
        Isometry3::from_parts(Translation3::from(self.position.coords), self.orientation)
            .inverse()
            .to_homogeneous()
    }

    pub fn projection_matrix(&self) -> Matrix4<f64> {
        Perspective3::new(self.aspect(), self.fov_y, self.near, self.far).to_homogeneous()
    }

    pub fn projector(&self) -> Projector {
        Projector::new(self)
    }

    pub fn world_to_ndc(&self, p: &Point3<f64>) -> Result<Vector3<f64>, CameraError> {
        self.projector().world_to_ndc(p)
    }

    pub fn ndc_to_world(&self, ndc: &Vector3<f64>) -> Result<Point3<f64>, CameraError> {
        self.projector().ndc_to_world(ndc)
    }

    /// NDC x, y of a pixel center.
    pub fn pixel_to_ndc(&self, ix: u32, iy: u32) -> (f64, f64) {
        let (w, h) = self.viewport;
        (
            2.0 * (ix as f64 + 0.5) / w as f64 - 1.0,
            1.0 - 2.0 * (iy as f64 + 0.5) / h as f64,
        )
    }

    /// Ray through the pixel center, starting on the near plane and ending on the far plane.
    pub fn generate_ray(&self, ix: u32, iy: u32) -> Ray {
        let (x, y) = self.pixel_to_ndc(ix, iy);
        self.projector().ray_through_ndc(x, y)
    }

    /// Positive view-space depth of an NDC z value.
    pub fn ndc_z_to_depth(&self, z: f64) -> f64 {
        ndc_z_to_depth(self.near, self.far, z)
    }

    pub fn depth_to_ndc_z(&self, depth: f64) -> f64 {
        depth_to_ndc_z(self.near, self.far, depth)
    }

    /// Rotates the whole camera rig by `angle` radians about `axis` through `center`.
    pub fn orbit(&self, center: &Point3<f64>, axis: &Vector3<f64>, angle: f64) -> Self {
        let rot = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Self {
            position: center + rot * (self.position - center),
            orientation: rot * self.orientation,
            ..*self
        }
    }

    /// Angle in degrees between the viewing directions of two cameras.
    pub fn deviation_deg(&self, other: &Camera) -> f64 {
        self.forward().angle(&other.forward()).to_degrees()
    }

    /// Bit-level equality of the pose and projection parameters.
    pub fn same_pose(&self, other: &Camera) -> bool {
        let a = self.to_block();
        let b = other.to_block();
        a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
    }

    /// `[px, py, pz, qx, qy, qz, qw, fov_y, near, far]`, the binary camera block.
    pub fn to_block(&self) -> [f64; 10] {
        let q = self.orientation.quaternion();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.i,
            q.j,
            q.k,
            q.w,
            self.fov_y,
            self.near,
            self.far,
        ]
    }

    /// Inverse of [`Camera::to_block`]. The quaternion is taken as stored, without renormalizing.
    pub fn from_block(b: &[f64; 10], viewport: (u32, u32)) -> Self {
        Self {
            position: Point3::new(b[0], b[1], b[2]),
            orientation: UnitQuaternion::new_unchecked(Quaternion::new(b[6], b[3], b[4], b[5])),
            fov_y: b[7],
            near: b[8],
            far: b[9],
            viewport,
        }
    }
}

pub fn ndc_z_to_depth(near: f64, far: f64, z: f64) -> f64 {
    2.0 * far * near / ((far + near) - z * (far - near))
}

pub fn depth_to_ndc_z(near: f64, far: f64, depth: f64) -> f64 {
    ((far + near) - 2.0 * far * near / depth) / (far - near)
}

/// Cached view-projection matrix and its inverse for hot loops.
#[derive(Debug, Clone, Copy)]
pub struct Projector {
    pub view_proj: Matrix4<f64>,
    pub inv_view_proj: Matrix4<f64>,
}

impl Projector {
    pub fn new(cam: &Camera) -> Self {
        let view_proj = cam.projection_matrix() * cam.view_matrix();
        let inv_view_proj = view_proj.try_inverse().expect("camera view-projection is invertible");
        Self {
            view_proj,
            inv_view_proj,
        }
    }

    pub fn world_to_clip(&self, p: &Point3<f64>) -> Vector4<f64> {
        self.view_proj * p.to_homogeneous()
    }

    pub fn world_to_ndc(&self, p: &Point3<f64>) -> Result<Vector3<f64>, CameraError> {
        let c = self.world_to_clip(p);
        if c.w.abs() < 1e-12 {
            return Err(CameraError::DegenerateW);
        }
        Ok(c.xyz() / c.w)
    }

    pub fn ndc_to_world(&self, ndc: &Vector3<f64>) -> Result<Point3<f64>, CameraError> {
        let h = self.inv_view_proj * Vector4::new(ndc.x, ndc.y, ndc.z, 1.0);
        if h.w.abs() < 1e-12 {
            return Err(CameraError::DegenerateW);
        }
        Ok(Point3::from(h.xyz() / h.w))
    }

    /// Un-projection for points known to lie inside the frustum.
    #[inline]
    pub fn unproject(&self, x: f64, y: f64, z: f64) -> Point3<f64> {
        let h = self.inv_view_proj * Vector4::new(x, y, z, 1.0);
        Point3::from(h.xyz() / h.w)
    }

    /// NDC z of a world point known to lie in front of the camera.
    #[inline]
    pub fn ndc_z(&self, p: &Point3<f64>) -> f64 {
        let m = &self.view_proj;
        let z = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)] * p.z + m[(2, 3)];
        let w = m[(3, 0)] * p.x + m[(3, 1)] * p.y + m[(3, 2)] * p.z + m[(3, 3)];
        z / w
    }

    /// Ray from the near-plane point to the far-plane point at NDC `(x, y)`.
    pub fn ray_through_ndc(&self, x: f64, y: f64) -> Ray {
        let o = self.unproject(x, y, -1.0);
        let f = self.unproject(x, y, 1.0);
        let d = f - o;
        let len = d.norm();
        Ray {
            origin: o,
            dir: d / len,
            t_near: 0.0,
            t_far: len,
        }
    }
}

/// Slab test of `ray` against `aabb`, restricted to the ray's active interval.
pub fn clip_ray(ray: &Ray, aabb: &Aabb) -> Option<(f64, f64)> {
    let mut t0 = ray.t_near;
    let mut t1 = ray.t_far;
    for a in 0..3 {
        let o = ray.origin[a];
        let d = ray.dir[a];
        if d == 0.0 {
            if o < aabb.min[a] || o > aabb.max[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut ta, mut tb) = ((aabb.min[a] - o) * inv, (aabb.max[a] - o) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Interval of `ray` inside the view frustum of `proj`, restricted to the ray's active interval.
///
/// Clip-space coordinates are affine in `t`, so each of the six planes
/// `-w <= x, y, z <= w` is a linear inequality in `t`.
pub fn clip_ray_to_frustum(ray: &Ray, proj: &Projector) -> Option<(f64, f64)> {
    let c0 = proj.world_to_clip(&ray.origin);
    let c1 = proj.view_proj * ray.dir.to_homogeneous();
    let mut t0 = ray.t_near;
    let mut t1 = ray.t_far;
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            // w - sign * axis >= 0
            let a = c0.w - sign * c0[axis];
            let b = c1.w - sign * c1[axis];
            if b == 0.0 {
                if a < 0.0 {
                    return None;
                }
            } else if b > 0.0 {
                t0 = t0.max(-a / b);
            } else {
                t1 = t1.min(-a / b);
            }
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((t0, t1))
}

/// JSON camera record: pose and projection, optionally with a viewport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub position: [f64; 3],
    /// `[qx, qy, qz, qw]`.
    pub orientation: [f64; 4],
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viewport: Option<[u32; 2]>,
}

impl CameraRecord {
    pub fn from_camera(cam: &Camera) -> Self {
        let q = cam.orientation.quaternion();
        Self {
            position: [cam.position.x, cam.position.y, cam.position.z],
            orientation: [q.i, q.j, q.k, q.w],
            fov_y: cam.fov_y,
            near: cam.near,
            far: cam.far,
            viewport: Some([cam.viewport.0, cam.viewport.1]),
        }
    }

    /// `fallback_viewport` applies when the record carries none.
    pub fn to_camera(&self, fallback_viewport: (u32, u32)) -> Result<Camera, CameraError> {
        let [qx, qy, qz, qw] = self.orientation;
        let q = Quaternion::new(qw, qx, qy, qz);
        if q.norm() < 1e-12 {
            return Err(CameraError::Invalid("zero quaternion".into()));
        }
        let cam = Camera {
            position: Point3::from(self.position),
            orientation: UnitQuaternion::from_quaternion(q),
            fov_y: self.fov_y,
            near: self.near,
            far: self.far,
            viewport: self.viewport.map(|[w, h]| (w, h)).unwrap_or(fallback_viewport),
        };
        cam.validate()?;
        Ok(cam)
    }
}

pub fn load_camera(path: impl AsRef<Path>, fallback_viewport: (u32, u32)) -> Result<Camera, CameraError> {
    let rec: CameraRecord = serde_json::from_str(&fs::read_to_string(path)?)?;
    rec.to_camera(fallback_viewport)
}

pub fn save_camera(path: impl AsRef<Path>, cam: &Camera) -> Result<(), CameraError> {
    fs::write(path, serde_json::to_string_pretty(&CameraRecord::from_camera(cam))?)?;
    Ok(())
}

/// Ordered camera poses, replayed by the bench harness.
pub fn load_camera_path(path: impl AsRef<Path>, viewport: (u32, u32)) -> Result<Vec<Camera>, CameraError> {
    let recs: Vec<CameraRecord> = serde_json::from_str(&fs::read_to_string(path)?)?;
    recs.iter().map(|r| r.to_camera(viewport)).collect()
}

pub fn save_camera_path(path: impl AsRef<Path>, cams: &[Camera]) -> Result<(), CameraError> {
    let recs: Vec<CameraRecord> = cams.iter().map(CameraRecord::from_camera).collect();
    fs::write(path, serde_json::to_string_pretty(&recs)?)?;
    Ok(())
}

/// Cameras rotated about the box center around the up axis by each of `angles_deg`.
pub fn orbit_path(base: &Camera, center: &Point3<f64>, angles_deg: &[f64]) -> Vec<Camera> {
    angles_deg
        .iter()
        .map(|a| base.orbit(center, &Vector3::y(), a.to_radians()))
        .collect()
}
