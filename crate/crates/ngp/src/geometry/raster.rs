//! Software depth rasterizer: screen-space barycentric coverage at pixel
//! centers with perspective-correct 1/z interpolation and min-compositing.
//!
//! All arithmetic runs in f64; depth values are rounded to f32 only when the
//! map is materialized. Triangles with any vertex at or behind the camera
//! plane are skipped (scene content lives well in front of the camera).

use super::maps::DepthMap;
use super::vec3::Vec3;
use super::{Camera, GeometryError, Result, TriangleMesh};
use crate::tensor::Tensor;

const NEAR: f64 = 1e-4;
const INSIDE_EPS: f64 = -1e-12;

/// Depth plus per-pixel triangle index (background: usize::MAX).
pub struct GBuffer {
    pub depth: Vec<f64>,
    pub tri_index: Vec<usize>,
    pub width: usize,
    pub height: usize,
}

impl GBuffer {
    pub fn depth_map(&self) -> DepthMap {
        let data: Vec<f32> = self.depth.iter().map(|&d| d as f32).collect();
        DepthMap {
            values: Tensor::new(vec![1, self.height, self.width], data).expect("gbuffer shape"),
        }
    }

    /// True when no triangle covered any pixel.
    pub fn is_empty(&self) -> bool {
        self.tri_index.iter().all(|&t| t == usize::MAX)
    }
}

fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Rasterize depth and triangle indices. Every covered pixel holds the
/// minimum camera-space depth among the triangles containing its center.
pub fn rasterize_gbuffer(mesh: &TriangleMesh, cam: &Camera) -> Result<GBuffer> {
    if cam.width < 8 || cam.height < 8 {
        return Err(GeometryError::ResolutionTooSmall {
            width: cam.width,
            height: cam.height,
        });
    }
    mesh.validate()?;

    let (w, h) = (cam.width, cam.height);
    let mut depth = vec![0.0f64; w * h];
    let mut tri_index = vec![usize::MAX; w * h];

    let projected: Vec<(f64, f64, f64)> = mesh
        .vertices
        .iter()
        .map(|&p| {
            let c = cam.to_camera(p);
            if c.z > NEAR {
                (
                    cam.fx() * c.x / c.z + cam.cx(),
                    cam.fy() * c.y / c.z + cam.cy(),
                    c.z,
                )
            } else {
                (f64::NAN, f64::NAN, c.z)
            }
        })
        .collect();

    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let (a, b, c) = (projected[tri[0]], projected[tri[1]], projected[tri[2]]);
        if a.2 <= NEAR || b.2 <= NEAR || c.2 <= NEAR {
            continue;
        }
        let area = edge(a.0, a.1, b.0, b.1, c.0, c.1);
        if area.abs() < 1e-14 {
            continue;
        }
        let min_x = a.0.min(b.0).min(c.0).floor().max(0.0) as usize;
        let max_x = (a.0.max(b.0).max(c.0).ceil() as isize).min(w as isize - 1);
        let min_y = a.1.min(b.1).min(c.1).floor().max(0.0) as usize;
        let max_y = (a.1.max(b.1).max(c.1).ceil() as isize).min(h as isize - 1);
        if max_x < 0 || max_y < 0 {
            continue;
        }
        for py in min_y..=(max_y as usize) {
            let cy = py as f64 + 0.5;
            for px in min_x..=(max_x as usize) {
                let cx = px as f64 + 0.5;
                let l0 = edge(b.0, b.1, c.0, c.1, cx, cy) / area;
                let l1 = edge(c.0, c.1, a.0, a.1, cx, cy) / area;
                let l2 = edge(a.0, a.1, b.0, b.1, cx, cy) / area;
                if l0 < INSIDE_EPS || l1 < INSIDE_EPS || l2 < INSIDE_EPS {
                    continue;
                }
                let inv_z = l0 / a.2 + l1 / b.2 + l2 / c.2;
                let z = 1.0 / inv_z;
                let idx = py * w + px;
                if tri_index[idx] == usize::MAX || z < depth[idx] {
                    depth[idx] = z;
                    tri_index[idx] = ti;
                }
            }
        }
    }

    Ok(GBuffer {
        depth,
        tri_index,
        width: w,
        height: h,
    })
}

/// Depth-only projection of the mesh under the camera. An all-background map
/// (mesh projecting outside the frustum) is returned as-is; callers can test
/// emptiness through the mask.
pub fn rasterize_depth(mesh: &TriangleMesh, cam: &Camera) -> Result<DepthMap> {
    Ok(rasterize_gbuffer(mesh, cam)?.depth_map())
}

/// Ray direction (object space) through a pixel center, plus camera center.
/// Shared by the normal-map generation in datagen; the test-side ray-cast
/// oracle independently reimplements the intersection itself.
pub fn pixel_ray(cam: &Camera, px: usize, py: usize) -> (Vec3, Vec3) {
    let u = px as f64 + 0.5;
    let v = py as f64 + 0.5;
    let dir_cam = Vec3 {
        x: (u - cam.cx()) / cam.fx(),
        y: (v - cam.cy()) / cam.fy(),
        z: 1.0,
    };
    let dir = cam.rotation.transpose().mul_vec(dir_cam).normalized();
    (cam.center(), dir)
}
