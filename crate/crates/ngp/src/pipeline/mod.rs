//! Pipeline assembly: controllable inference (camera, illumination, shape,
//! appearance handles), sweeps, appearance transfer, and the ablation
//! report.

mod variants;

pub use variants::{ImageFormation, VariantRegistry};

use serde::{Deserialize, Serialize};

use crate::geometry::{
    coarse_normals_from_depth, depth_mask, noc_from_depth, rasterize_depth, sample_coarse_shape,
    Camera, DepthMap, Mask, NocMap, NormalMap, ShapeFamilyConfig,
};
use crate::metrics::{fid_lite, FeatureExtractor};
use crate::nets::LatentCode;
use crate::shading::{DirectionalLight, LightRig, ReflectanceProfile};
use crate::tensor::Tensor;
use crate::training::Models;

#[derive(Debug)]
pub enum PipelineError {
    UnknownVariant { name: String, known: String },
    EmptyRigRequest,
    Geometry(crate::geometry::GeometryError),
    Shading(crate::shading::ShadingError),
    Net(crate::nets::NetError),
    Tensor(crate::tensor::TensorError),
    Metrics(crate::metrics::MetricsError),
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::UnknownVariant { name, known } => {
                write!(f, "unknown variant `{name}` (known: {known})")
            }
            Self::EmptyRigRequest => write!(f, "inference request has an empty light rig"),
            Self::Geometry(e) => write!(f, "{e}"),
            Self::Shading(e) => write!(f, "{e}"),
            Self::Net(e) => write!(f, "{e}"),
            Self::Tensor(e) => write!(f, "{e}"),
            Self::Metrics(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PipelineError {}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for PipelineError {
            fn from(e: $ty) -> Self {
                Self::$variant(e)
            }
        }
    };
}

from_err!(Geometry, crate::geometry::GeometryError);
from_err!(Shading, crate::shading::ShadingError);
from_err!(Net, crate::nets::NetError);
from_err!(Tensor, crate::tensor::TensorError);
from_err!(Metrics, crate::metrics::MetricsError);

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Camera handle: view-sphere angles or an explicit pose.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CameraHandle {
    Angles { theta_deg: f64, phi_deg: f64 },
    Explicit(crate::geometry::CameraSpec),
}

impl Default for CameraHandle {
    fn default() -> Self {
        Self::Angles {
            theta_deg: 10.0,
            phi_deg: 0.0,
        }
    }
}

/// Everything one controllable generation needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub z_shape: Vec<f64>,
    pub camera: CameraHandle,
    pub z_da: Vec<f32>,
    /// Base illumination; defaults to the training rig.
    pub rig: LightRig,
    /// Extra lights consumed by `ngp-plus` / `ngp-bp`.
    pub extra_lights: Vec<DirectionalLight>,
    pub variant: String,
}

impl Default for InferenceRequest {
    fn default() -> Self {
        Self {
            z_shape: vec![0.0; 8],
            camera: CameraHandle::default(),
            z_da: vec![0.0; 8],
            rig: LightRig::training_default(),
            extra_lights: Vec::new(),
            variant: "ngp".to_string(),
        }
    }
}

/// Inputs handed to a formation variant.
pub struct FormationContext<'a> {
    pub models: &'a Models,
    pub depth: &'a DepthMap,
    pub mask: &'a Mask,
    pub noc: &'a NocMap,
    pub coarse_normal: &'a NormalMap,
    pub z_da: &'a LatentCode,
    pub base_rig: &'a LightRig,
    pub extra_rig: &'a LightRig,
    pub profile: ReflectanceProfile,
    pub view: [f64; 3],
}

/// The full panel of per-view maps a generation produces.
#[derive(Debug, Clone)]
pub struct IntermediateMaps {
    pub depth: Tensor<f32>,
    pub mask: Tensor<f32>,
    pub noc: Tensor<f32>,
    pub coarse_normal: Tensor<f32>,
    /// Normal map actually used by the variant.
    pub normal: Tensor<f32>,
    pub albedo: Tensor<f32>,
    pub specular_albedo: Tensor<f32>,
    pub roughness: Tensor<f32>,
    pub diffuse: Option<Tensor<f32>>,
    pub respec: Option<Tensor<f32>>,
}

pub struct FormedImage {
    pub final_image: Tensor<f32>,
    pub maps: IntermediateMaps,
}

pub struct InferenceResult {
    pub image: Tensor<f32>,
    pub maps: IntermediateMaps,
    pub camera: Camera,
}

/// Geometry settings shared by inference entry points.
#[derive(Debug, Clone)]
pub struct InferenceSetup {
    pub shape: ShapeFamilyConfig,
    pub view_radius: f64,
    pub focal_mm: f64,
    pub resolution: usize,
    pub profile: ReflectanceProfile,
}

impl InferenceSetup {
    fn camera(&self, handle: &CameraHandle) -> Camera {
        match handle {
            CameraHandle::Angles { theta_deg, phi_deg } => Camera::look_at_origin(
                self.view_radius,
                *theta_deg,
                *phi_deg,
                self.resolution,
                self.resolution,
                self.focal_mm,
            ),
            CameraHandle::Explicit(spec) => Camera::from(spec),
        }
    }
}

/// Controllable generation: coarse shape from the latent, depth projection,
/// learned maps, and the requested formation variant.
pub fn infer(
    models: &Models,
    registry: &VariantRegistry,
    setup: &InferenceSetup,
    req: &InferenceRequest,
) -> Result<InferenceResult> {
    if req.rig.lights.is_empty() {
        return Err(PipelineError::EmptyRigRequest);
    }
    let variant = registry.get(&req.variant)?;
    let mesh = sample_coarse_shape(&req.z_shape, &setup.shape)?;
    let camera = setup.camera(&req.camera);
    let depth = rasterize_depth(&mesh, &camera)?;
    let mask = depth_mask(&depth);
    let noc = noc_from_depth(&depth, &camera)?;
    let coarse_normal = coarse_normals_from_depth(&depth, &camera)?;
    let z_da = LatentCode {
        values: req.z_da.clone(),
    };
    let extra_rig = LightRig::new(req.extra_lights.clone());
    let ctx = FormationContext {
        models,
        depth: &depth,
        mask: &mask,
        noc: &noc,
        coarse_normal: &coarse_normal,
        z_da: &z_da,
        base_rig: &req.rig,
        extra_rig: &extra_rig,
        profile: setup.profile,
        view: [0.0, 0.0, 1.0],
    };
    let formed = variant.form(&ctx)?;
    Ok(InferenceResult {
        image: formed.final_image,
        maps: formed.maps,
        camera,
    })
}

/// Camera sweep: hold shape, appearance and lights fixed; one generation per
/// (theta, phi) stop.
pub fn sweep_camera(
    models: &Models,
    registry: &VariantRegistry,
    setup: &InferenceSetup,
    req: &InferenceRequest,
    stops: &[(f64, f64)],
) -> Result<Vec<InferenceResult>> {
    stops
        .iter()
        .map(|&(theta_deg, phi_deg)| {
            let mut r = req.clone();
            r.camera = CameraHandle::Angles { theta_deg, phi_deg };
            infer(models, registry, setup, &r)
        })
        .collect()
}

/// Light sweep: hold everything but the rig fixed.
pub fn sweep_lights(
    models: &Models,
    registry: &VariantRegistry,
    setup: &InferenceSetup,
    req: &InferenceRequest,
    rigs: &[LightRig],
) -> Result<Vec<InferenceResult>> {
    rigs.iter()
        .map(|rig| {
            let mut r = req.clone();
            r.rig = rig.clone();
            infer(models, registry, setup, &r)
        })
        .collect()
}

/// Appearance transfer: condition the albedo generator on the exemplar's
/// encoded code (the mean of the encoder's Gaussian).
pub fn transfer_appearance(
    models: &Models,
    registry: &VariantRegistry,
    setup: &InferenceSetup,
    req: &InferenceRequest,
    exemplar: &Tensor<f32>,
) -> Result<InferenceResult> {
    let mut tape = crate::tensor::Tape::<f32>::new();
    let bind = models.e_diffa.params.bind(&mut tape, false);
    let img = tape.constant(exemplar.clone());
    let (mu, _) = models.e_diffa.forward(&mut tape, &bind, img)?;
    let mut r = req.clone();
    r.z_da = tape.value(mu).data().to_vec();
    infer(models, registry, setup, &r)
}

/// Ablation variants evaluated by `run_ablation`, in report order.
pub const ABLATION_VARIANTS: [&str; 4] =
    ["ngp", "ngp-wo-gnorm", "ngp-wo-gdiffa", "ngp-wo-grespec"];

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub scores: Vec<(String, f64)>,
    pub samples_per_variant: usize,
    pub target_size: usize,
}

/// FID-lite of each ablation variant against a target image set. Sampling is
/// seeded so the same request set feeds every variant.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    models: &Models,
    registry: &VariantRegistry,
    setup: &InferenceSetup,
    target: &[Tensor<f32>],
    extractor: &FeatureExtractor,
    view: &crate::geometry::ViewDistribution,
    samples: usize,
    seed: u64,
) -> Result<AblationReport> {
    // shared request set
    let mut rng = crate::rng::seeded(seed);
    let mut requests = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z_shape: Vec<f64> = (0..setup.shape.latent_dim)
            .map(|_| crate::rng::normal_f64(&mut rng))
            .collect();
        let theta = crate::rng::uniform(&mut rng, view.theta_deg.0, view.theta_deg.1);
        let phi = crate::rng::uniform(&mut rng, view.phi_deg.0, view.phi_deg.1);
        let z_da = LatentCode::sample(8, &mut rng);
        requests.push(InferenceRequest {
            z_shape,
            camera: CameraHandle::Angles {
                theta_deg: theta,
                phi_deg: phi,
            },
            z_da: z_da.values,
            ..Default::default()
        });
    }

    let mut scores = Vec::new();
    for name in ABLATION_VARIANTS {
        let mut images = Vec::with_capacity(samples);
        for req in &requests {
            let mut r = req.clone();
            r.variant = name.to_string();
            images.push(infer(models, registry, setup, &r)?.image);
        }
        let fid = fid_lite(extractor, &images, target)?;
        scores.push((name.to_string(), fid));
    }
    Ok(AblationReport {
        scores,
        samples_per_variant: samples,
        target_size: target.len(),
    })
}
