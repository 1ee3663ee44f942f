//! Coarse geometry: procedural shape sampling, camera model, depth
//! rasterization, and the derived per-view maps (mask, normalized object
//! coordinates, coarse normals).
//!
//! Conventions used throughout:
//! - object space is right-handed, y up, +z is the object face direction;
//!   every shape fits inside the unit sphere at the origin
//! - camera space is x right, y down, z forward (pinhole, `x_cam = R p + t`)
//! - depth maps store camera-space z in meters with 0 marking background
//! - normal maps live in the view frame: x image-right, y image-up,
//!   z toward the viewer

mod camera;
mod maps;
mod obj;
mod raster;
mod shape;
mod vec3;

pub use camera::{sample_camera, Camera, CameraSpec, ViewDistribution};
pub use maps::{
    coarse_normals_from_depth, depth_mask, noc_coefficients, noc_from_depth, pixel_to_object,
    DepthMap, Mask, NocMap, NormalMap,
};
pub use obj::{read_obj, write_obj};
pub use raster::{pixel_ray, rasterize_depth, rasterize_gbuffer, GBuffer};
pub use shape::{sample_coarse_shape, sample_coarse_shape_parts, ShapeFamilyConfig, ShapeParams};
pub use vec3::{vec3, Mat3, Vec3};

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    NonFiniteLatent,
    EmptyMesh,
    InvalidTriangle { index: usize, detail: String },
    SingularIntrinsics,
    ResolutionTooSmall { width: usize, height: usize },
    BadViewRange { detail: String },
    ObjParse { line: usize, detail: String },
    Io(String),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFiniteLatent => write!(f, "shape latent contains non-finite values"),
            Self::EmptyMesh => write!(f, "mesh has no triangles"),
            Self::InvalidTriangle { index, detail } => {
                write!(f, "invalid triangle {index}: {detail}")
            }
            Self::SingularIntrinsics => write!(f, "camera intrinsics are singular"),
            Self::ResolutionTooSmall { width, height } => {
                write!(f, "resolution {width}x{height} below 8x8 minimum")
            }
            Self::BadViewRange { detail } => write!(f, "invalid view distribution: {detail}"),
            Self::ObjParse { line, detail } => write!(f, "obj parse error at line {line}: {detail}"),
            Self::Io(msg) => write!(f, "geometry io: {msg}"),
        }
    }
}

impl std::error::Error for GeometryError {}

impl From<std::io::Error> for GeometryError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Indexed triangle soup in object space (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        for (i, t) in self.triangles.iter().enumerate() {
            for &v in t {
                if v >= self.vertices.len() {
                    return Err(GeometryError::InvalidTriangle {
                        index: i,
                        detail: format!("vertex index {v} out of range {}", self.vertices.len()),
                    });
                }
            }
            if self.triangle_area(i) <= 1e-14 {
                return Err(GeometryError::InvalidTriangle {
                    index: i,
                    detail: "degenerate (zero area)".into(),
                });
            }
        }
        Ok(())
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangles[i];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(c - a).norm() * 0.5
    }

    /// Outward geometric normal (winding order is outward by construction).
    pub fn triangle_normal(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.triangles[i];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(c - a).normalized()
    }

    pub fn max_vertex_norm(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests;
