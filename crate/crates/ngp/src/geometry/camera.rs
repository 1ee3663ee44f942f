//! Pinhole camera: intrinsics from a 35mm-equivalent focal length, extrinsics
//! sampled on a fixed-radius sphere looking at the origin with no roll.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::uniform;

use super::vec3::{vec3, Mat3, Vec3};
use super::{GeometryError, Result};

/// Width of a full-frame 35mm sensor in millimeters; focal lengths are
/// expressed relative to it.
const FILM_WIDTH_MM: f64 = 36.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// Rotation rows are the camera axes (x right, y down, z forward).
    pub rotation: Mat3,
    /// Translation: `x_cam = R p + t`.
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
    /// 35mm-equivalent focal length.
    pub focal_mm: f64,
}

/// Camera sampling ranges (degrees). `theta` is elevation above the horizon,
/// `phi` the horizontal angle from the object face direction (+z).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ViewDistribution {
    pub radius: f64,
    pub theta_deg: (f64, f64),
    pub phi_deg: (f64, f64),
    pub focal_mm: f64,
}

impl Default for ViewDistribution {
    fn default() -> Self {
        Self {
            radius: 2.0,
            theta_deg: (0.0, 20.0),
            phi_deg: (-90.0, 90.0),
            focal_mm: 50.0,
        }
    }
}

impl Camera {
    /// Camera on the view sphere at (theta, phi) degrees, looking at the
    /// origin with world-up as the roll reference.
    pub fn look_at_origin(
        radius: f64,
        theta_deg: f64,
        phi_deg: f64,
        width: usize,
        height: usize,
        focal_mm: f64,
    ) -> Camera {
        let theta = theta_deg.to_radians();
        let phi = phi_deg.to_radians();
        let center = vec3(
            radius * theta.cos() * phi.sin(),
            radius * theta.sin(),
            radius * theta.cos() * phi.cos(),
        );
        let forward = (-center).normalized();
        let mut up = vec3(0.0, 1.0, 0.0);
        if forward.cross(up).norm() < 1e-9 {
            up = vec3(0.0, 0.0, 1.0);
        }
        let right = forward.cross(up).normalized();
        let down = forward.cross(right);
        let rotation = Mat3::from_rows(right, down, forward);
        let translation = -rotation.mul_vec(center);
        Camera {
            rotation,
            translation,
            width,
            height,
            focal_mm,
        }
    }

    pub fn center(&self) -> Vec3 {
        -self.rotation.transpose().mul_vec(self.translation)
    }

    pub fn fx(&self) -> f64 {
        self.focal_mm / FILM_WIDTH_MM * self.width as f64
    }

    pub fn fy(&self) -> f64 {
        // square pixels
        self.fx()
    }

    pub fn cx(&self) -> f64 {
        self.width as f64 / 2.0
    }

    pub fn cy(&self) -> f64 {
        self.height as f64 / 2.0
    }

    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn to_object(&self, p_cam: Vec3) -> Vec3 {
        self.rotation.transpose().mul_vec(p_cam - self.translation)
    }

    /// Project an object-space point to continuous pixel coordinates and
    /// camera depth. Pixel (i, j) covers [i, i+1) x [j, j+1).
    pub fn project(&self, p: Vec3) -> (f64, f64, f64) {
        let c = self.to_camera(p);
        (
            self.fx() * c.x / c.z + self.cx(),
            self.fy() * c.y / c.z + self.cy(),
            c.z,
        )
    }

    /// Back-project a pixel coordinate at a given camera depth.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if self.fx().abs() < 1e-12 || self.fy().abs() < 1e-12 {
            return Err(GeometryError::SingularIntrinsics);
        }
        let cam = vec3(
            (u - self.cx()) / self.fx() * depth,
            (v - self.cy()) / self.fy() * depth,
            depth,
        );
        Ok(self.to_object(cam))
    }

    /// Unit vector from the origin-facing surface toward the camera,
    /// expressed in the view frame (this is the renderer's V).
    pub fn view_dir(&self) -> [f64; 3] {
        // the camera looks along +z_cam, so toward-viewer is -z_cam = (0,0,1)
        // in the view frame by construction
        [0.0, 0.0, 1.0]
    }

    /// Rotate an object-space direction into the view frame
    /// (x image-right, y image-up, z toward viewer).
    pub fn dir_to_view(&self, d: Vec3) -> Vec3 {
        let c = self.rotation.mul_vec(d);
        vec3(c.x, -c.y, -c.z)
    }

    /// R orthonormal with det +1; sampled cameras also satisfy the
    /// fixed-radius and look-at constraints.
    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = r.rows[i].dot(r.rows[j]) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(d.abs());
            }
        }
        if worst > 1e-6 || (r.det() - 1.0).abs() > 1e-6 {
            return Err(GeometryError::BadViewRange {
                detail: format!("rotation not orthonormal (err {worst:.2e}, det {})", r.det()),
            });
        }
        Ok(())
    }
}

/// Draw a camera from the view distribution: fixed distance to the origin,
/// uniform angles, look-at origin, roll-free.
pub fn sample_camera(
    rng: &mut impl Rng,
    dist: &ViewDistribution,
    width: usize,
    height: usize,
) -> Result<Camera> {
    if dist.radius <= 0.0
        || dist.theta_deg.0 > dist.theta_deg.1
        || dist.phi_deg.0 > dist.phi_deg.1
    {
        return Err(GeometryError::BadViewRange {
            detail: format!("{dist:?}"),
        });
    }
    let theta = uniform(rng, dist.theta_deg.0, dist.theta_deg.1);
    let phi = uniform(rng, dist.phi_deg.0, dist.phi_deg.1);
    Ok(Camera::look_at_origin(
        dist.radius,
        theta,
        phi,
        width,
        height,
        dist.focal_mm,
    ))
}

/// Serializable camera description (per-sample sidecar in datasets).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CameraSpec {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub width: usize,
    pub height: usize,
    pub focal_mm: f64,
}

impl From<&Camera> for CameraSpec {
    fn from(c: &Camera) -> Self {
        let r = |v: Vec3| [v.x, v.y, v.z];
        CameraSpec {
            rotation: [r(c.rotation.rows[0]), r(c.rotation.rows[1]), r(c.rotation.rows[2])],
            translation: r(c.translation),
            width: c.width,
            height: c.height,
            focal_mm: c.focal_mm,
        }
    }
}

impl From<&CameraSpec> for Camera {
    fn from(s: &CameraSpec) -> Self {
        let v = |a: [f64; 3]| vec3(a[0], a[1], a[2]);
        Camera {
            rotation: Mat3::from_rows(v(s.rotation[0]), v(s.rotation[1]), v(s.rotation[2])),
            translation: v(s.translation),
            width: s.width,
            height: s.height,
            focal_mm: s.focal_mm,
        }
    }
}
