//! Fixed differentiable Blinn-Phong image formation.
//!
//! Per light: `k_d (N.L) I_da + k_s (N.H)^alpha I_sa`, with `H` the
//! normalized half vector of the light direction and the per-image view
//! direction, `N.L` and `N.H` clamped below at zero, contributions summed
//! over lights, multiplied by the foreground mask and clamped to `[0,1]`.
//! All vectors live in the view frame (x right, y up, z toward viewer).
//!
//! The shading functions build tape graphs, so gradients flow to the normal,
//! albedo and roughness maps; plain-tensor wrappers evaluate through a
//! throwaway tape.

use serde::{Deserialize, Serialize};

use crate::geometry::DepthMap;
use crate::tensor::{Scalar, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq)]
pub enum ShadingError {
    EmptyRig,
    BadLight { detail: String },
    Tensor(TensorError),
}

impl std::fmt::Display for ShadingError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::EmptyRig => write!(f, "light rig is empty"),
            Self::BadLight { detail } => write!(f, "bad light: {detail}"),
            Self::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ShadingError {}

impl From<TensorError> for ShadingError {
    fn from(e: TensorError) -> Self {
        Self::Tensor(e)
    }
}

pub type Result<T> = std::result::Result<T, ShadingError>;

/// White directional light; `direction` points from the surface toward the
/// light and is stored normalized.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DirectionalLight {
    pub direction: [f64; 3],
    pub intensity: f64,
    pub color: [f64; 3],
}

impl DirectionalLight {
    pub fn new(direction: [f64; 3], intensity: f64, color: [f64; 3]) -> Result<Self> {
        let n = (direction[0].powi(2) + direction[1].powi(2) + direction[2].powi(2)).sqrt();
        if n < 1e-9 || !n.is_finite() {
            return Err(ShadingError::BadLight {
                detail: format!("direction {direction:?} not normalizable"),
            });
        }
        if intensity < 0.0 {
            return Err(ShadingError::BadLight {
                detail: format!("negative intensity {intensity}"),
            });
        }
        Ok(Self {
            direction: [direction[0] / n, direction[1] / n, direction[2] / n],
            intensity,
            color,
        })
    }

    pub fn white(direction: [f64; 3], intensity: f64) -> Result<Self> {
        Self::new(direction, intensity, [1.0, 1.0, 1.0])
    }

    /// From azimuth/elevation degrees: azimuth 0 points toward the viewer
    /// side (+z), rotating toward +x; elevation raises toward +y.
    pub fn from_angles(azimuth_deg: f64, elevation_deg: f64, intensity: f64) -> Result<Self> {
        let az = azimuth_deg.to_radians();
        let el = elevation_deg.to_radians();
        Self::white(
            [el.cos() * az.sin(), el.sin(), el.cos() * az.cos()],
            intensity,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = (self.direction[0].powi(2) + self.direction[1].powi(2) + self.direction[2].powi(2))
            .sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(ShadingError::BadLight {
                detail: format!("direction norm {n}"),
            });
        }
        if self.intensity < 0.0 {
            return Err(ShadingError::BadLight {
                detail: "negative intensity".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LightRig {
    pub lights: Vec<DirectionalLight>,
}

impl LightRig {
    pub fn new(lights: Vec<DirectionalLight>) -> Self {
        Self { lights }
    }

    /// Training rig: 4 overhead white directional lights at azimuths
    /// 0/90/180/270 degrees, elevation 60 degrees, intensity 1.
    pub fn training_default() -> Self {
        let lights = [0.0, 90.0, 180.0, 270.0]
            .iter()
            .map(|&az| DirectionalLight::from_angles(az, 60.0, 1.0).expect("fixed rig"))
            .collect();
        Self { lights }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lights: self
                .lights
                .iter()
                .map(|l| DirectionalLight {
                    intensity: l.intensity * factor,
                    ..l.clone()
                })
                .collect(),
        }
    }
}

/// Named `(k_d, k_s)` presets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ReflectanceProfile {
    pub k_d: f64,
    pub k_s: f64,
}

impl ReflectanceProfile {
    pub const CAR: ReflectanceProfile = ReflectanceProfile { k_d: 0.6, k_s: 0.4 };
    pub const CHAIR: ReflectanceProfile = ReflectanceProfile { k_d: 0.8, k_s: 0.2 };
}

/// Per-view reflectance maps as plain tensors.
#[derive(Debug, Clone)]
pub struct ReflectanceMaps {
    /// View-frame unit normals on foreground, `[3,H,W]`.
    pub normal: Tensor<f32>,
    /// `[3,H,W]` in `[0,1]`.
    pub diffuse_albedo: Tensor<f32>,
    /// `[3,H,W]` in `[0,1]`.
    pub specular_albedo: Tensor<f32>,
    /// `[1,H,W]`, positive on foreground.
    pub roughness: Tensor<f32>,
    /// `[1,H,W]` binary.
    pub mask: Tensor<f32>,
}

impl ReflectanceMaps {
    pub fn validate(&self) -> Result<()> {
        let hw = self.mask.numel();
        let nd = self.normal.data();
        let md = self.mask.data();
        for i in 0..hw {
            if md[i] > 0.0 {
                let n2: f32 = (0..3).map(|c| nd[c * hw + i] * nd[c * hw + i]).sum();
                if (n2.sqrt() - 1.0).abs() > 1e-4 {
                    return Err(ShadingError::BadLight {
                        detail: format!("foreground normal norm {} at {i}", n2.sqrt()),
                    });
                }
            }
        }
        for t in [&self.diffuse_albedo, &self.specular_albedo] {
            if t.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(ShadingError::BadLight {
                    detail: "albedo outside [0,1]".into(),
                });
            }
        }
        Ok(())
    }
}

/// Tape handles for the maps entering the renderer.
#[derive(Debug, Clone, Copy)]
pub struct MapVars {
    pub normal: Var,
    pub diffuse_albedo: Var,
    pub specular_albedo: Var,
    pub roughness: Var,
    pub mask: Var,
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn const_dir<T: Scalar>(tape: &mut Tape<T>, v: [f64; 3]) -> Var {
    tape.constant(Tensor::new(vec![3, 1, 1], v.iter().map(|&x| T::from_f64(x)).collect()).unwrap())
}

/// `relu(sum_c N_c * d_c)` as a `[1,H,W]` map.
fn clamped_dot<T: Scalar>(
    tape: &mut Tape<T>,
    normal: Var,
    dir: [f64; 3],
) -> crate::tensor::Result<Var> {
    let shape = tape.shape(normal).to_vec();
    let d = const_dir(tape, dir);
    let db = tape.broadcast(d, &shape)?;
    let prod = tape.mul(normal, db)?;
    let dot = tape.sum_axis(prod, 0)?;
    tape.relu(dot)
}

/// Pre-clamp shading; `include_specular` distinguishes the full model from
/// the diffuse component. Differentiable w.r.t. all map vars.
fn shade<T: Scalar>(
    tape: &mut Tape<T>,
    maps: &MapVars,
    rig: &LightRig,
    view: [f64; 3],
    k_d: f64,
    k_s: f64,
    include_specular: bool,
) -> Result<Var> {
    if rig.lights.is_empty() {
        return Err(ShadingError::EmptyRig);
    }
    for l in &rig.lights {
        l.validate()?;
    }
    let img_shape = tape.shape(maps.diffuse_albedo).to_vec();
    let view = normalize3(view);

    let mut total: Option<Var> = None;
    for light in &rig.lights {
        // diffuse: k_d (N.L) I_da * intensity * color
        let ndl = clamped_dot(tape, maps.normal, light.direction)?;
        let ndl3 = tape.broadcast(ndl, &img_shape)?;
        let dterm = tape.mul(ndl3, maps.diffuse_albedo)?;
        let dcol = const_dir(
            tape,
            [
                k_d * light.intensity * light.color[0],
                k_d * light.intensity * light.color[1],
                k_d * light.intensity * light.color[2],
            ],
        );
        let dcol3 = tape.broadcast(dcol, &img_shape)?;
        let mut contrib = tape.mul(dterm, dcol3)?;

        if include_specular {
            // specular: k_s (N.H)^alpha I_sa * intensity * color
            let half = normalize3([
                light.direction[0] + view[0],
                light.direction[1] + view[1],
                light.direction[2] + view[2],
            ]);
            let ndh = clamped_dot(tape, maps.normal, half)?;
            let powed = tape.pow(ndh, maps.roughness)?;
            let powed3 = tape.broadcast(powed, &img_shape)?;
            let sterm = tape.mul(powed3, maps.specular_albedo)?;
            let scol = const_dir(
                tape,
                [
                    k_s * light.intensity * light.color[0],
                    k_s * light.intensity * light.color[1],
                    k_s * light.intensity * light.color[2],
                ],
            );
            let scol3 = tape.broadcast(scol, &img_shape)?;
            let sc = tape.mul(sterm, scol3)?;
            contrib = tape.add(contrib, sc)?;
        }

        total = Some(match total {
            Some(acc) => tape.add(acc, contrib)?,
            None => contrib,
        });
    }

    // background renders to zero regardless of map contents
    let mask3 = tape.broadcast(maps.mask, &img_shape)?;
    Ok(tape.mul(total.expect("nonempty rig"), mask3)?)
}

/// Pre-clamp full Blinn-Phong image (linear in light intensity and additive
/// over lights).
pub fn shade_blinn_phong<T: Scalar>(
    tape: &mut Tape<T>,
    maps: &MapVars,
    rig: &LightRig,
    view: [f64; 3],
    k_d: f64,
    k_s: f64,
) -> Result<Var> {
    shade(tape, maps, rig, view, k_d, k_s, true)
}

/// Full Blinn-Phong render, clamped to `[0,1]`.
pub fn render_blinn_phong<T: Scalar>(
    tape: &mut Tape<T>,
    maps: &MapVars,
    rig: &LightRig,
    view: [f64; 3],
    k_d: f64,
    k_s: f64,
) -> Result<Var> {
    let raw = shade_blinn_phong(tape, maps, rig, view, k_d, k_s)?;
    Ok(tape.clamp(raw, 0.0, 1.0)?)
}

/// Pre-clamp diffuse component (no specular term).
pub fn shade_diffuse<T: Scalar>(
    tape: &mut Tape<T>,
    maps: &MapVars,
    rig: &LightRig,
    k_d: f64,
) -> Result<Var> {
    shade(tape, maps, rig, [0.0, 0.0, 1.0], k_d, 0.0, false)
}

/// Diffuse render, clamped to `[0,1]`. Equals `render_blinn_phong` with
/// `k_s = 0` bit for bit.
pub fn render_diffuse<T: Scalar>(
    tape: &mut Tape<T>,
    maps: &MapVars,
    rig: &LightRig,
    k_d: f64,
) -> Result<Var> {
    let raw = shade_diffuse(tape, maps, rig, k_d)?;
    Ok(tape.clamp(raw, 0.0, 1.0)?)
}

/// Image blending: additive with a `[0,1]` clamp. Commutative, and the
/// identity when the specular map is zero.
pub fn blend<T: Scalar>(tape: &mut Tape<T>, diffuse: Var, specular: Var) -> Result<Var> {
    let sum = tape.add(diffuse, specular)?;
    Ok(tape.clamp(sum, 0.0, 1.0)?)
}

/// White specular albedo on the depth mask: `c * M(d)` with c = (1,1,1).
pub fn constant_specular_albedo(d: &DepthMap) -> Tensor<f32> {
    let (h, w) = (d.height(), d.width());
    let dd = d.values.data();
    let mut out = vec![0.0f32; 3 * h * w];
    for i in 0..h * w {
        if dd[i] > 0.0 {
            out[i] = 1.0;
            out[h * w + i] = 1.0;
            out[2 * h * w + i] = 1.0;
        }
    }
    Tensor::new(vec![3, h, w], out).expect("albedo shape")
}

/// Constant roughness of 4.0 on the depth mask, 0 on background.
pub const ROUGHNESS_DEFAULT: f64 = 4.0;

pub fn constant_roughness(d: &DepthMap) -> Tensor<f32> {
    d.values
        .map(|v| if v > 0.0 { ROUGHNESS_DEFAULT as f32 } else { 0.0 })
}

/// Evaluate a render of plain tensors through a throwaway tape.
pub fn eval_blinn_phong(
    maps: &ReflectanceMaps,
    rig: &LightRig,
    view: [f64; 3],
    profile: ReflectanceProfile,
) -> Result<Tensor<f32>> {
    let mut tape = Tape::<f32>::new();
    let vars = leaf_maps(&mut tape, maps, false);
    let img = render_blinn_phong(&mut tape, &vars, rig, view, profile.k_d, profile.k_s)?;
    Ok(tape.value(img).clone())
}

pub fn eval_diffuse(maps: &ReflectanceMaps, rig: &LightRig, k_d: f64) -> Result<Tensor<f32>> {
    let mut tape = Tape::<f32>::new();
    let vars = leaf_maps(&mut tape, maps, false);
    let img = render_diffuse(&mut tape, &vars, rig, k_d)?;
    Ok(tape.value(img).clone())
}

/// Register reflectance maps on a tape, as gradient leaves or constants.
pub fn leaf_maps<T: Scalar>(tape: &mut Tape<T>, maps: &ReflectanceMaps, grad: bool) -> MapVars {
    let mut put = |t: &Tensor<f32>| {
        let cast = t.cast::<T>();
        if grad {
            tape.leaf(cast)
        } else {
            tape.constant(cast)
        }
    };
    MapVars {
        normal: put(&maps.normal),
        diffuse_albedo: put(&maps.diffuse_albedo),
        specular_albedo: put(&maps.specular_albedo),
        roughness: put(&maps.roughness),
        mask: put(&maps.mask),
    }
}
