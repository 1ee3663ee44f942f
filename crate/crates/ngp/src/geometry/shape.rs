//! Procedural coarse-shape family: a superellipsoid body with optional box
//! and cylinder parts, every dimension a smooth function of the latent code.
//! Nearby latents therefore give nearby meshes, and the same latent always
//! gives the identical mesh.

use serde::{Deserialize, Serialize};

use super::vec3::{vec3, Vec3};
use super::{GeometryError, Result, TriangleMesh};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShapeFamilyConfig {
    /// Latent dimension; extra dimensions beyond the consumed 8 are ignored.
    pub latent_dim: usize,
    /// Latitude rings of the body tessellation (excluding poles).
    pub rings: usize,
    /// Longitude segments of the body tessellation.
    pub segments: usize,
    /// Attach the box and cylinder parts.
    pub parts: bool,
}

impl Default for ShapeFamilyConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            rings: 17,
            segments: 24,
            parts: true,
        }
    }
}

/// Resolved smooth parameters of one family member.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeParams {
    /// Superellipsoid exponents (north-south, east-west); 2 is an ellipsoid.
    pub exponents: (f64, f64),
    /// Body semi-axes (x width, y height, z length).
    pub semi_axes: Vec3,
    /// Box part scale in (0,1).
    pub box_scale: f64,
    /// Box part z offset.
    pub box_shift: f64,
    /// Cylinder part radius scale in (0,1).
    pub cyl_scale: f64,
    /// Cylinder part z position control.
    pub cyl_shift: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ShapeParams {
    /// Deterministic map from latent to parameters; z = 0 gives the family
    /// default (exponents exactly 2, base semi-axes, parts at mid scale).
    pub fn from_latent(z: &[f64]) -> ShapeParams {
        let zi = |i: usize| z.get(i).copied().unwrap_or(0.0);
        ShapeParams {
            exponents: (
                2.0 * (0.45 * zi(0).tanh()).exp(),
                2.0 * (0.45 * zi(1).tanh()).exp(),
            ),
            semi_axes: vec3(
                0.38 * (1.0 + 0.25 * zi(2).tanh()),
                0.30 * (1.0 + 0.25 * zi(3).tanh()),
                0.62 * (1.0 + 0.20 * zi(4).tanh()),
            ),
            box_scale: sigmoid(zi(5)),
            box_shift: 0.12 * zi(6).tanh(),
            cyl_scale: sigmoid(zi(7)),
            cyl_shift: 0.15 * zi(6).tanh(),
        }
    }
}

/// Signed power `sgn(w)|w|^m` used by the superellipsoid parameterization.
fn spow(w: f64, m: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w.signum() * w.abs().powf(m)
    }
}

fn superellipsoid(p: &ShapeParams, cfg: &ShapeFamilyConfig, mesh: &mut TriangleMesh) {
    let (n_exp, e_exp) = p.exponents;
    let (rings, segs) = (cfg.rings.max(3), cfg.segments.max(3));
    let a = p.semi_axes;

    // vertex at (v latitude, u longitude); poles handled separately
    let vertex = |vi: usize, ui: usize| -> Vec3 {
        let v = -std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * (vi as f64) / (rings as f64);
        let u = -std::f64::consts::PI
            + 2.0 * std::f64::consts::PI * (ui as f64) / (segs as f64);
        let (cv, sv) = (v.cos(), v.sin());
        let (cu, su) = (u.cos(), u.sin());
        vec3(
            a.x * spow(cv, 2.0 / n_exp) * spow(cu, 2.0 / e_exp),
            a.y * spow(sv, 2.0 / n_exp),
            a.z * spow(cv, 2.0 / n_exp) * spow(su, 2.0 / e_exp),
        )
    };

    let base = mesh.vertices.len();
    let south = base;
    mesh.vertices.push(vec3(0.0, -a.y, 0.0));
    for vi in 1..rings {
        for ui in 0..segs {
            mesh.vertices.push(vertex(vi, ui));
        }
    }
    let north = mesh.vertices.len();
    mesh.vertices.push(vec3(0.0, a.y, 0.0));

    let ring = |vi: usize, ui: usize| base + 1 + (vi - 1) * segs + (ui % segs);

    // south fan: outward winding for y-down cap
    for ui in 0..segs {
        mesh.triangles.push([south, ring(1, ui), ring(1, ui + 1)]);
    }
    // quad strips
    for vi in 1..rings - 1 {
        for ui in 0..segs {
            let (q00, q01) = (ring(vi, ui), ring(vi, ui + 1));
            let (q10, q11) = (ring(vi + 1, ui), ring(vi + 1, ui + 1));
            mesh.triangles.push([q00, q11, q01]);
            mesh.triangles.push([q00, q10, q11]);
        }
    }
    // north fan
    for ui in 0..segs {
        mesh.triangles.push([north, ring(rings - 1, ui + 1), ring(rings - 1, ui)]);
    }
}

/// Axis-aligned box with outward winding.
fn push_box(center: Vec3, half: Vec3, mesh: &mut TriangleMesh) {
    let base = mesh.vertices.len();
    for &sx in &[-1.0, 1.0] {
        for &sy in &[-1.0, 1.0] {
            for &sz in &[-1.0, 1.0] {
                mesh.vertices.push(vec3(
                    center.x + sx * half.x,
                    center.y + sy * half.y,
                    center.z + sz * half.z,
                ));
            }
        }
    }
    // index: ((sx>0)<<2 | (sy>0)<<1 | (sz>0))
    const FACES: [[usize; 4]; 6] = [
        [0, 1, 3, 2], // -x
        [4, 6, 7, 5], // +x
        [0, 4, 5, 1], // -y
        [2, 3, 7, 6], // +y
        [0, 2, 6, 4], // -z
        [1, 5, 7, 3], // +z
    ];
    for face in FACES {
        mesh.triangles
            .push([base + face[0], base + face[1], base + face[2]]);
        mesh.triangles
            .push([base + face[0], base + face[2], base + face[3]]);
    }
}

/// Capped cylinder with its axis along x, outward winding.
fn push_cylinder(center: Vec3, radius: f64, half_len: f64, segs: usize, mesh: &mut TriangleMesh) {
    let base = mesh.vertices.len();
    for &end in &[-1.0f64, 1.0] {
        for s in 0..segs {
            let ang = 2.0 * std::f64::consts::PI * (s as f64) / (segs as f64);
            mesh.vertices.push(vec3(
                center.x + end * half_len,
                center.y + radius * ang.cos(),
                center.z + radius * ang.sin(),
            ));
        }
    }
    let lo = mesh.vertices.len();
    mesh.vertices.push(vec3(center.x - half_len, center.y, center.z));
    let hi = mesh.vertices.len();
    mesh.vertices.push(vec3(center.x + half_len, center.y, center.z));

    let at = |end: usize, s: usize| base + end * segs + (s % segs);
    for s in 0..segs {
        // side quad; -x end is ring 0
        let (a0, a1) = (at(0, s), at(0, s + 1));
        let (b0, b1) = (at(1, s), at(1, s + 1));
        mesh.triangles.push([a0, b1, b0]);
        mesh.triangles.push([a0, a1, b1]);
        // caps
        mesh.triangles.push([lo, at(0, s + 1), at(0, s)]);
        mesh.triangles.push([hi, at(1, s), at(1, s + 1)]);
    }
}

/// Deterministic coarse mesh from a latent code. The result always fits
/// inside the unit sphere; identical input gives the identical mesh.
pub fn sample_coarse_shape(z: &[f64], cfg: &ShapeFamilyConfig) -> Result<TriangleMesh> {
    Ok(sample_coarse_shape_parts(z, cfg)?.0)
}

/// Like [`sample_coarse_shape`] but also returns named triangle ranges per
/// part, used for part-aware painting of training maps.
pub fn sample_coarse_shape_parts(
    z: &[f64],
    cfg: &ShapeFamilyConfig,
) -> Result<(TriangleMesh, Vec<(&'static str, std::ops::Range<usize>)>)> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFiniteLatent);
    }
    let p = ShapeParams::from_latent(z);
    let mut mesh = TriangleMesh {
        vertices: Vec::new(),
        triangles: Vec::new(),
    };
    let mut parts = Vec::new();
    superellipsoid(&p, cfg, &mut mesh);
    parts.push(("body", 0..mesh.triangles.len()));

    if cfg.parts {
        let a = p.semi_axes;
        // cabin box riding on top of the body
        let half = vec3(0.55 * a.x, 0.38 * a.y, 0.42 * a.z) * (0.35 + 0.65 * p.box_scale);
        let center = vec3(0.0, a.y * 0.78, p.box_shift);
        let start = mesh.triangles.len();
        push_box(center, half, &mut mesh);
        parts.push(("box", start..mesh.triangles.len()));
        // low axle cylinder across x
        let radius = a.y * (0.25 + 0.35 * p.cyl_scale);
        let center = vec3(0.0, -a.y * 0.72, a.z * 0.45 + p.cyl_shift);
        let start = mesh.triangles.len();
        push_cylinder(center, radius, a.x * 1.02, 16, &mut mesh);
        parts.push(("cylinder", start..mesh.triangles.len()));
    }

    // keep everything inside the unit sphere; scaling is continuous in the
    // latent so this preserves smoothness of the family
    let max_norm = mesh.max_vertex_norm();
    if max_norm > 0.98 {
        let s = 0.98 / max_norm;
        for v in &mut mesh.vertices {
            *v = *v * s;
        }
    }

    mesh.validate()?;
    Ok((mesh, parts))
}
