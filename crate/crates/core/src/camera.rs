use crate::math::{Ray, Vec3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("need 0 < near < far, got near={near} far={far}")]
    DepthRange { near: f64, far: f64 },
    #[error("vertical field of view must lie in (0, pi), got {0}")]
    FieldOfView(f64),
    #[error("viewport must be at least 1x1, got {0}x{1}")]
    Viewport(usize, usize),
    #[error("degenerate view frame (eye == look-at or up parallel to view direction)")]
    Frame,
}

/// Pinhole camera. View space is x right, y up, z forward (depth increases away from the eye).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub eye: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        eye: Vec3,
        look_at: Vec3,
        up: Vec3,
        fov_y: f64,
        near: f64,
        far: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, CameraError> {
        let cam = Self {
            eye,
            look_at,
            up,
            fov_y,
            near,
            far,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(CameraError::DepthRange {
                near: self.near,
                far: self.far,
            });
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(CameraError::FieldOfView(self.fov_y));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Viewport(self.width, self.height));
        }
        let f = self.look_at - self.eye;
        if f.try_normalize().is_none() || f.cross(self.up).try_normalize().is_none() {
            return Err(CameraError::Frame);
        }
        Ok(())
    }

    /// Orthonormal (right, up, forward) frame.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (self.look_at - self.eye).normalize();
        let right = forward.cross(self.up).normalize();
        let up = right.cross(forward);
        (right, up, forward)
    }

    pub fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    pub fn tan_half_fov(&self) -> f64 {
        (0.5 * self.fov_y).tan()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn view_transform(&self) -> ViewTransform {
        let (right, up, forward) = self.basis();
        let th = self.tan_half_fov();
        ViewTransform {
            eye: self.eye,
            right,
            up,
            forward,
            sx: 0.5 * self.width as f64 / (th * self.aspect()),
            sy: 0.5 * self.height as f64 / th,
            half_w: 0.5 * self.width as f64,
            half_h: 0.5 * self.height as f64,
        }
    }

    /// Primary ray through continuous screen position `(x, y)` (pixel units, y down).
    /// Pixel `(i, j)` is sampled at `(i + 0.5, j + 0.5)`.
    pub fn screen_ray(&self, x: f64, y: f64) -> Ray {
        self.view_transform().screen_ray(x, y)
    }

    pub fn pixel_ray(&self, px: usize, py: usize) -> Ray {
        self.screen_ray(px as f64 + 0.5, py as f64 + 0.5)
    }
}

/// Precomputed world→view→screen mapping.
#[derive(Debug, Clone, Copy)]
pub struct ViewTransform {
    pub eye: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
    sx: f64,
    sy: f64,
    half_w: f64,
    half_h: f64,
}

impl ViewTransform {
    pub fn to_view(&self, p: Vec3) -> Vec3 {
        let d = p - self.eye;
        Vec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.forward))
    }

    /// Primary ray through screen position `(x, y)`.
    pub fn screen_ray(&self, x: f64, y: f64) -> Ray {
        let dir = self.forward + self.right * ((x - self.half_w) / self.sx) + self.up * ((self.half_h - y) / self.sy);
        Ray::new(self.eye, dir)
    }

    /// Screen position of a view-space point with positive depth.
    pub fn project(&self, v: Vec3) -> (f64, f64) {
        (self.half_w + v.x / v.z * self.sx, self.half_h - v.y / v.z * self.sy)
    }
}
