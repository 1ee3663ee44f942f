//! Two-stage unpaired training with a joint fine-tune: the reflectance stage
//! links the depth domain and the reflectance-map domain via adversarial and
//! cycle losses; the specular stage trains the realistic-specular pair
//! against the image set; the joint stage runs both objectives.

mod adam;
mod checkpoint;
mod stages;

pub use adam::{adam_step, AdamConfig, AdamError, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainState};
pub use stages::{
    generate_composites, generate_diffuse_images, joint_finetune, joint_finetune_chunk,
    prepare_reflectance_data, train_reflectance_chunk, train_reflectance_stage,
    train_specular_chunk, train_specular_stage, DepthItem, MapsItem, PreparedReflectance,
    TrainLog,
};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::losses::{GanObjective, LossWeights};
use crate::nets::{
    ArchDescriptor, Discriminator, DiscriminatorCfg, Encoder, EncoderCfg, Generator, GeneratorCfg,
    Head, RfsClass,
};
use crate::shading::ReflectanceProfile;

#[derive(Debug)]
pub enum TrainError {
    Adam(AdamError),
    Net(crate::nets::NetError),
    Loss(crate::losses::LossError),
    Shading(crate::shading::ShadingError),
    Tensor(crate::tensor::TensorError),
    Geometry(crate::geometry::GeometryError),
    Io(crate::io::IoError),
    TensorIo(crate::tensor::TensorIoError),
    EmptyDataset { which: &'static str },
    NonFiniteLoss { iteration: usize, stage: &'static str },
    BadCheckpoint { detail: String },
}

impl std::fmt::Display for TrainError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Adam(e) => write!(f, "{e}"),
            Self::Net(e) => write!(f, "{e}"),
            Self::Loss(e) => write!(f, "{e}"),
            Self::Shading(e) => write!(f, "{e}"),
            Self::Tensor(e) => write!(f, "{e}"),
            Self::Geometry(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "{e}"),
            Self::TensorIo(e) => write!(f, "{e}"),
            Self::EmptyDataset { which } => write!(f, "empty dataset: {which}"),
            Self::NonFiniteLoss { iteration, stage } => {
                write!(f, "non-finite loss at iteration {iteration} of {stage} stage")
            }
            Self::BadCheckpoint { detail } => write!(f, "bad checkpoint: {detail}"),
        }
    }
}

impl std::error::Error for TrainError {}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for TrainError {
            fn from(e: $ty) -> Self {
                Self::$variant(e)
            }
        }
    };
}

from_err!(Adam, AdamError);
from_err!(Net, crate::nets::NetError);
from_err!(Loss, crate::losses::LossError);
from_err!(Shading, crate::shading::ShadingError);
from_err!(Tensor, crate::tensor::TensorError);
from_err!(Geometry, crate::geometry::GeometryError);
from_err!(Io, crate::io::IoError);
from_err!(TensorIo, crate::tensor::TensorIoError);

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub iters_reflectance: usize,
    pub iters_specular: usize,
    pub iters_joint: usize,
    pub seed: u64,
    pub resolution: usize,
    pub profile: ReflectanceProfile,
    pub weights: LossWeights,
    pub objective: GanObjective,
    pub base_channels: usize,
    pub res_blocks: usize,
    pub z_dim: usize,
    /// Emit one JSON loss line every N iterations (1 = every iteration).
    pub log_every: usize,
    /// Save an intermediate checkpoint every N iterations (0 = stage end
    /// only). Resuming is bit-exact, so chunked and straight runs agree.
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 1,
            iters_reflectance: 2000,
            iters_specular: 1000,
            iters_joint: 500,
            seed: 7,
            resolution: 32,
            profile: ReflectanceProfile::CAR,
            weights: LossWeights::default(),
            objective: GanObjective::LeastSquares,
            base_channels: 32,
            res_blocks: 1,
            z_dim: 8,
            log_every: 1,
            checkpoint_every: 0,
        }
    }
}

/// Every network of the 2D setup.
#[derive(Clone)]
pub struct Models {
    pub g_norm: Generator,
    pub g_diffa: Generator,
    pub e_diffa: Encoder,
    pub g_depth: Generator,
    pub g_respec: Generator,
    pub g_despec: Generator,
    pub d_norm: Discriminator,
    pub d_diffa: Discriminator,
    pub d_diff: Discriminator,
    pub d_depth: Discriminator,
    pub d_noc: Discriminator,
    pub d_real: Discriminator,
}

pub const GENERATOR_NETS: [&str; 4] = ["g_norm", "g_diffa", "e_diffa", "g_depth"];
pub const SPECULAR_NETS: [&str; 2] = ["g_respec", "g_despec"];
pub const REFLECTANCE_DISCRIMINATORS: [&str; 5] =
    ["d_norm", "d_diffa", "d_diff", "d_depth", "d_noc"];

impl Models {
    /// Deterministic initialization from the config seed stream.
    pub fn init(cfg: &TrainConfig, rng: &mut impl Rng) -> Models {
        let (b, r, z) = (cfg.base_channels, cfg.res_blocks, cfg.z_dim);
        let gen_cfg = |inc, outc, zd, head| GeneratorCfg {
            in_channels: inc,
            out_channels: outc,
            base_channels: b,
            res_blocks: r,
            z_dim: zd,
            head,
        };
        let disc_cfg = |inc, rfs| DiscriminatorCfg {
            in_channels: inc,
            rfs,
        };
        Models {
            g_norm: Generator::init(gen_cfg(1, 3, 0, Head::UnitNormals), rng),
            g_diffa: Generator::init(gen_cfg(6, 3, z, Head::Sigmoid), rng),
            e_diffa: Encoder::init(
                EncoderCfg {
                    in_channels: 3,
                    base_channels: b,
                    z_dim: z,
                },
                rng,
            ),
            g_depth: Generator::init(gen_cfg(3, 1, 0, Head::Softplus), rng),
            g_respec: Generator::init(gen_cfg(6, 3, 0, Head::Relu), rng),
            g_despec: Generator::init(gen_cfg(3, 3, 0, Head::Sigmoid), rng),
            d_norm: Discriminator::init(disc_cfg(3, RfsClass::Mid), rng),
            d_diffa: Discriminator::init(disc_cfg(3, RfsClass::Small), rng),
            d_diff: Discriminator::init(disc_cfg(3, RfsClass::Large), rng),
            d_depth: Discriminator::init(disc_cfg(1, RfsClass::Large), rng),
            d_noc: Discriminator::init(disc_cfg(3, RfsClass::Mid), rng),
            d_real: Discriminator::init(disc_cfg(3, RfsClass::Mid), rng),
        }
    }

    pub fn descriptor(&self) -> ArchDescriptor {
        let mut generators = BTreeMap::new();
        let mut encoders = BTreeMap::new();
        let mut discriminators = BTreeMap::new();
        for (name, g) in self.generators() {
            generators.insert(name.to_string(), g.cfg.clone());
        }
        encoders.insert("e_diffa".to_string(), self.e_diffa.cfg.clone());
        for (name, d) in self.discriminators() {
            discriminators.insert(name.to_string(), d.cfg.clone());
        }
        ArchDescriptor {
            generators,
            encoders,
            discriminators,
        }
    }

    pub fn generators(&self) -> Vec<(&'static str, &Generator)> {
        vec![
            ("g_norm", &self.g_norm),
            ("g_diffa", &self.g_diffa),
            ("g_depth", &self.g_depth),
            ("g_respec", &self.g_respec),
            ("g_despec", &self.g_despec),
        ]
    }

    pub fn discriminators(&self) -> Vec<(&'static str, &Discriminator)> {
        vec![
            ("d_norm", &self.d_norm),
            ("d_diffa", &self.d_diffa),
            ("d_diff", &self.d_diff),
            ("d_depth", &self.d_depth),
            ("d_noc", &self.d_noc),
            ("d_real", &self.d_real),
        ]
    }

    pub fn params_of(&self, net: &str) -> Option<&crate::nets::Params> {
        Some(match net {
            "g_norm" => &self.g_norm.params,
            "g_diffa" => &self.g_diffa.params,
            "e_diffa" => &self.e_diffa.params,
            "g_depth" => &self.g_depth.params,
            "g_respec" => &self.g_respec.params,
            "g_despec" => &self.g_despec.params,
            "d_norm" => &self.d_norm.params,
            "d_diffa" => &self.d_diffa.params,
            "d_diff" => &self.d_diff.params,
            "d_depth" => &self.d_depth.params,
            "d_noc" => &self.d_noc.params,
            "d_real" => &self.d_real.params,
            _ => return None,
        })
    }

    pub fn params_of_mut(&mut self, net: &str) -> Option<&mut crate::nets::Params> {
        Some(match net {
            "g_norm" => &mut self.g_norm.params,
            "g_diffa" => &mut self.g_diffa.params,
            "e_diffa" => &mut self.e_diffa.params,
            "g_depth" => &mut self.g_depth.params,
            "g_respec" => &mut self.g_respec.params,
            "g_despec" => &mut self.g_despec.params,
            "d_norm" => &mut self.d_norm.params,
            "d_diffa" => &mut self.d_diffa.params,
            "d_diff" => &mut self.d_diff.params,
            "d_depth" => &mut self.d_depth.params,
            "d_noc" => &mut self.d_noc.params,
            "d_real" => &mut self.d_real.params,
            _ => return None,
        })
    }

    pub const ALL: [&'static str; 12] = [
        "g_norm", "g_diffa", "e_diffa", "g_depth", "g_respec", "g_despec", "d_norm", "d_diffa",
        "d_diff", "d_depth", "d_noc", "d_real",
    ];
}

/// One Adam state per network.
#[derive(Clone, Default)]
pub struct Optimizers {
    pub states: BTreeMap<String, AdamState>,
}

impl Optimizers {
    pub fn state_of(&mut self, net: &str) -> &mut AdamState {
        self.states.entry(net.to_string()).or_default()
    }
}

/// Depth maps are normalized by this factor before entering any network
/// (content at distance 2 inside the unit sphere keeps depth below 3).
pub const DEPTH_INPUT_SCALE: f64 = 1.0 / 3.0;
