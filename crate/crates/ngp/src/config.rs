//! One JSON document configures a whole experiment. Top-level `seed` and
//! `resolution` are authoritative: `resolve()` propagates them (plus the
//! shape family, view distribution and reflectance profile) into the nested
//! sections, so a stored config can never disagree with itself.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::DataGenConfig;
use crate::geometry::{ShapeFamilyConfig, ViewDistribution};
use crate::metrics::{EXTRACTOR_SEED, FEATURE_DIM};
use crate::pipeline::InferenceSetup;
use crate::shading::ReflectanceProfile;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DataSection {
    /// Samples per pool in the reflectance corpus (depth set and maps set).
    pub reflectance_count: usize,
    /// Samples in the realistic image corpus.
    pub realistic_count: usize,
    /// Held-out maps samples for evaluation.
    pub eval_count: usize,
    pub bump_amplitude: f64,
    pub extra_lights: usize,
    pub previews: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            reflectance_count: 500,
            realistic_count: 500,
            eval_count: 64,
            bump_amplitude: 0.10,
            extra_lights: 2,
            previews: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsSection {
    pub feature_dim: usize,
    pub extractor_seed: u64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            feature_dim: FEATURE_DIM,
            extractor_seed: EXTRACTOR_SEED,
        }
    }
}

/// Distribution of optional random extra lights (off by default).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExtraLightDistribution {
    pub count: usize,
    pub elevation_deg: (f64, f64),
    pub intensity: (f64, f64),
}

impl Default for ExtraLightDistribution {
    fn default() -> Self {
        Self {
            count: 0,
            elevation_deg: (30.0, 80.0),
            intensity: (0.2, 0.6),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InferSection {
    pub default_variant: String,
    pub random_extra_lights: ExtraLightDistribution,
    /// Ablation report sample count per variant.
    pub ablation_samples: usize,
}

impl Default for InferSection {
    fn default() -> Self {
        Self {
            default_variant: "ngp".to_string(),
            random_extra_lights: ExtraLightDistribution::default(),
            ablation_samples: 48,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub shape: ShapeFamilyConfig,
    #[serde(default)]
    pub view: ViewDistribution,
    #[serde(default = "default_profile")]
    pub profile: ReflectanceProfile,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub infer: InferSection,
}

fn default_seed() -> u64 {
    7
}

fn default_resolution() -> usize {
    64
}

fn default_profile() -> ReflectanceProfile {
    ReflectanceProfile::CAR
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            resolution: default_resolution(),
            shape: ShapeFamilyConfig::default(),
            view: ViewDistribution::default(),
            profile: default_profile(),
            data: DataSection::default(),
            train: TrainConfig::default(),
            metrics: MetricsSection::default(),
            infer: InferSection::default(),
        }
    }
}

impl RunConfig {
    /// Named profile presets accepted on the CLI.
    pub fn profile_preset(name: &str) -> Option<ReflectanceProfile> {
        match name {
            "car" => Some(ReflectanceProfile::CAR),
            "chair" => Some(ReflectanceProfile::CHAIR),
            _ => None,
        }
    }

    /// Propagate the authoritative top-level fields into the sections. The
    /// training resolution stays independent (training runs desk-scale even
    /// when inference renders larger).
    pub fn resolve(mut self) -> RunConfig {
        self.train.seed = self.seed;
        self.train.profile = self.profile;
        self
    }

    pub fn load(path: &Path) -> crate::io::Result<RunConfig> {
        let cfg: RunConfig = crate::io::read_json(path)?;
        Ok(cfg.resolve())
    }

    pub fn save(&self, path: &Path) -> crate::io::Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn datagen_config(&self) -> DataGenConfig {
        DataGenConfig {
            resolution: self.resolution,
            shape: self.shape.clone(),
            view: self.view.clone(),
            profile: self.profile,
            bump_amplitude: self.data.bump_amplitude,
            extra_lights: self.data.extra_lights,
            previews: self.data.previews,
        }
    }

    /// Datagen config at the training resolution (the corpora feed training
    /// directly, so they are emitted at `train.resolution` if it differs).
    pub fn train_datagen_config(&self) -> DataGenConfig {
        DataGenConfig {
            resolution: self.train.resolution,
            ..self.datagen_config()
        }
    }

    pub fn inference_setup(&self) -> InferenceSetup {
        InferenceSetup {
            shape: self.shape.clone(),
            view_radius: self.view.radius,
            focal_mm: self.view.focal_mm,
            resolution: self.resolution,
            profile: self.profile,
        }
    }
}
