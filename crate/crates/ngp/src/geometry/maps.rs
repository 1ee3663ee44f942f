//! Per-view maps derived from depth: binary mask, normalized object
//! coordinates, and coarse normals from depth differences.

use super::vec3::{vec3, Vec3};
use super::{Camera, GeometryError, Result};
use crate::tensor::Tensor;

/// Camera-space depth, meters; 0 marks background. Shape `[1, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Tensor<f32>,
}

/// Normalized object coordinates `(p + 1) / 2`, in `[0,1]^3` on the
/// foreground and 0 on background. Shape `[3, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NocMap {
    pub values: Tensor<f32>,
}

/// View-frame unit normals on the foreground, 0 on background. `[3, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub values: Tensor<f32>,
}

/// Foreground indicator (1.0 / 0.0). Shape `[1, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub values: Tensor<f32>,
}

impl DepthMap {
    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }
    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values.data()[y * self.width() + x]
    }
}

impl Mask {
    pub fn coverage(&self) -> f64 {
        let d = self.values.data();
        d.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64
    }
}

/// mask = 1 where depth > 0.
pub fn depth_mask(d: &DepthMap) -> Mask {
    Mask {
        values: d.values.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
    }
}

/// Per-pixel affine coefficients `noc = a * depth + b` for a camera, so the
/// same conversion can run on plain maps here and inside the training graph
/// on generated depth. Returns `(a, b)`, each `[3, H, W]`.
pub fn noc_coefficients(cam: &Camera) -> Result<(Tensor<f32>, Tensor<f32>)> {
    if cam.fx().abs() < 1e-12 || cam.fy().abs() < 1e-12 {
        return Err(GeometryError::SingularIntrinsics);
    }
    let (w, h) = (cam.width, cam.height);
    let rt = cam.rotation.transpose();
    let mut a = vec![0.0f32; 3 * h * w];
    let mut b = vec![0.0f32; 3 * h * w];
    for py in 0..h {
        for px in 0..w {
            // p_obj = R^T (K^{-1} [u v 1] d) - R^T t = d * R^T k + offset
            let u = px as f64 + 0.5;
            let v = py as f64 + 0.5;
            let k = vec3((u - cam.cx()) / cam.fx(), (v - cam.cy()) / cam.fy(), 1.0);
            let dir = rt.mul_vec(k);
            let off = rt.mul_vec(-cam.translation);
            let idx = py * w + px;
            // noc = (p + 1) / 2
            for (c, (dv, ov)) in [(dir.x, off.x), (dir.y, off.y), (dir.z, off.z)]
                .into_iter()
                .enumerate()
            {
                a[c * h * w + idx] = (dv / 2.0) as f32;
                b[c * h * w + idx] = ((ov + 1.0) / 2.0) as f32;
            }
        }
    }
    Ok((
        Tensor::new(vec![3, h, w], a).expect("noc coeff shape"),
        Tensor::new(vec![3, h, w], b).expect("noc coeff shape"),
    ))
}

/// NOC map of a depth map produced under the same camera: foreground pixels
/// encode the back-projected object point as `(p + 1) / 2`, background is 0.
pub fn noc_from_depth(d: &DepthMap, cam: &Camera) -> Result<NocMap> {
    let (a, b) = noc_coefficients(cam)?;
    let (w, h) = (d.width(), d.height());
    let dd = d.values.data();
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0f32; 3 * h * w];
    for i in 0..h * w {
        if dd[i] > 0.0 {
            for c in 0..3 {
                out[c * h * w + i] = ad[c * h * w + i] * dd[i] + bd[c * h * w + i];
            }
        }
    }
    Ok(NocMap {
        values: Tensor::new(vec![3, h, w], out).expect("noc shape"),
    })
}

/// Back-project one pixel of a depth map to its object-space point.
pub fn pixel_to_object(d: &DepthMap, cam: &Camera, px: usize, py: usize) -> Result<Vec3> {
    cam.back_project(px as f64 + 0.5, py as f64 + 0.5, d.get(px, py) as f64)
}

/// Coarse normals from central differences of back-projected positions,
/// expressed in the view frame and oriented toward the viewer. One-sided
/// differences at the mask boundary; background stays 0.
pub fn coarse_normals_from_depth(d: &DepthMap, cam: &Camera) -> Result<NormalMap> {
    let (w, h) = (d.width(), d.height());
    let dd = d.values.data();
    let fg = |x: isize, y: isize| -> bool {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && dd[y as usize * w + x as usize] > 0.0
    };
    // cache back-projected positions in CAMERA space (differences there avoid
    // one rotation per pixel; the normal rotates afterwards)
    let mut pos = vec![Vec3::ZERO; w * h];
    for py in 0..h {
        for px in 0..w {
            let z = dd[py * w + px] as f64;
            if z > 0.0 {
                let u = px as f64 + 0.5;
                let v = py as f64 + 0.5;
                pos[py * w + px] = vec3(
                    (u - cam.cx()) / cam.fx() * z,
                    (v - cam.cy()) / cam.fy() * z,
                    z,
                );
            }
        }
    }

    let mut out = vec![0.0f32; 3 * h * w];
    for py in 0..h as isize {
        for px in 0..w as isize {
            if !fg(px, py) {
                continue;
            }
            let p = pos[py as usize * w + px as usize];
            let du = match (fg(px + 1, py), fg(px - 1, py)) {
                (true, true) => {
                    (pos[py as usize * w + px as usize + 1]
                        - pos[py as usize * w + px as usize - 1])
                        * 0.5
                }
                (true, false) => pos[py as usize * w + px as usize + 1] - p,
                (false, true) => p - pos[py as usize * w + px as usize - 1],
                (false, false) => Vec3::ZERO,
            };
            let dv = match (fg(px, py + 1), fg(px, py - 1)) {
                (true, true) => {
                    (pos[(py as usize + 1) * w + px as usize]
                        - pos[(py as usize - 1) * w + px as usize])
                        * 0.5
                }
                (true, false) => pos[(py as usize + 1) * w + px as usize] - p,
                (false, true) => p - pos[(py as usize - 1) * w + px as usize],
                (false, false) => Vec3::ZERO,
            };
            // camera-space surface normal; toward the camera means -z there
            let mut n_cam = du.cross(dv).normalized();
            if n_cam == Vec3::ZERO {
                // isolated pixel: face the viewer
                n_cam = vec3(0.0, 0.0, -1.0);
            }
            // view frame: x right, y up, z toward viewer
            let mut n = vec3(n_cam.x, -n_cam.y, -n_cam.z);
            if n.z < 0.0 {
                n = -n;
            }
            let idx = py as usize * w + px as usize;
            out[idx] = n.x as f32;
            out[h * w + idx] = n.y as f32;
            out[2 * h * w + idx] = n.z as f32;
        }
    }
    Ok(NormalMap {
        values: Tensor::new(vec![3, h, w], out).expect("normal shape"),
    })
}
