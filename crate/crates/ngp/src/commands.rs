//! CLI-facing operations. Each command owns one output directory, embeds the
//! resolved run configuration in it, and is byte-reproducible for a fixed
//! seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::datagen::{self, DatasetManifest};
use crate::io::{read_png, write_json, write_png};
use crate::metrics::{fid_lite, FeatureExtractor};
use crate::pipeline::{
    infer, run_ablation, sweep_camera, sweep_lights, transfer_appearance, InferenceRequest,
    InferenceResult, VariantRegistry,
};
use crate::rng;
use crate::shading::LightRig;
use crate::tensor::{write_tensor_f32, Tensor};
use crate::training::{
    joint_finetune_chunk, load_checkpoint, prepare_reflectance_data, save_checkpoint,
    train_reflectance_chunk, train_specular_chunk, Checkpoint, Models, Optimizers, TrainLog,
    TrainState,
};

#[derive(Debug)]
pub enum CommandError {
    Config(String),
    Datagen(crate::datagen::DatagenError),
    Train(crate::training::TrainError),
    Pipeline(crate::pipeline::PipelineError),
    Metrics(crate::metrics::MetricsError),
    Io(crate::io::IoError),
    TensorIo(crate::tensor::TensorIoError),
    Shading(crate::shading::ShadingError),
    MissingInput { what: String },
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "config: {msg}"),
            Self::Datagen(e) => write!(f, "{e}"),
            Self::Train(e) => write!(f, "{e}"),
            Self::Pipeline(e) => write!(f, "{e}"),
            Self::Metrics(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "{e}"),
            Self::TensorIo(e) => write!(f, "{e}"),
            Self::Shading(e) => write!(f, "{e}"),
            Self::MissingInput { what } => write!(f, "missing input: {what}"),
        }
    }
}

impl std::error::Error for CommandError {}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for CommandError {
            fn from(e: $ty) -> Self {
                Self::$variant(e)
            }
        }
    };
}

from_err!(Datagen, crate::datagen::DatagenError);
from_err!(Train, crate::training::TrainError);
from_err!(Pipeline, crate::pipeline::PipelineError);
from_err!(Metrics, crate::metrics::MetricsError);
from_err!(Io, crate::io::IoError);
from_err!(TensorIo, crate::tensor::TensorIoError);
from_err!(Shading, crate::shading::ShadingError);

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(crate::io::IoError::Io(e))
    }
}

impl CommandError {
    /// Machine-readable form emitted on stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            Self::Config(_) => "config",
            Self::Datagen(_) => "datagen",
            Self::Train(_) => "train",
            Self::Pipeline(_) => "pipeline",
            Self::Metrics(_) => "metrics",
            Self::Io(_) | Self::TensorIo(_) => "io",
            Self::Shading(_) => "shading",
            Self::MissingInput { .. } => "missing_input",
        };
        json!({"error": self.to_string(), "kind": kind})
    }
}

pub type Result<T> = std::result::Result<T, CommandError>;

fn embed_config(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    cfg.save(&out.join("config.json"))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct GenDataSummary {
    pub reflectance: usize,
    pub realistic: usize,
    pub eval: usize,
    pub root: PathBuf,
}

/// Generate all training corpora: the unpaired reflectance pools, the
/// realistic image set, and a held-out eval split, at the training
/// resolution.
pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<GenDataSummary> {
    embed_config(out, cfg)?;
    let dg = cfg.train_datagen_config();
    datagen::make_reflectance_dataset(out, cfg.data.reflectance_count, cfg.seed, &dg)?;
    datagen::make_realistic_image_set(out, cfg.data.realistic_count, cfg.seed ^ 0x5eed, &dg)?;
    // held-out maps for evaluation, disjoint seed stream
    let eval_dir = out.join("eval");
    fs::create_dir_all(&eval_dir)?;
    let (de, me) = datagen::make_reflectance_dataset(
        &eval_dir,
        cfg.data.eval_count,
        cfg.seed ^ 0xe7a1,
        &dg,
    )?;
    let _ = (de, me);
    Ok(GenDataSummary {
        reflectance: cfg.data.reflectance_count,
        realistic: cfg.data.realistic_count,
        eval: cfg.data.eval_count,
        root: out.to_path_buf(),
    })
}

pub struct LoadedCorpora {
    pub prepared: crate::training::PreparedReflectance,
    pub real_images: Vec<Tensor<f32>>,
}

pub fn load_corpora(cfg: &RunConfig, data_dir: &Path) -> Result<LoadedCorpora> {
    let dm = load_manifest(data_dir, "depth_manifest.json")?;
    let mm = load_manifest(data_dir, "maps_manifest.json")?;
    let rm = load_manifest(data_dir, "real_manifest.json")?;
    let depths = datagen::load_depth_set(data_dir, &dm)?;
    let maps = datagen::load_maps_set(data_dir, &mm)?;
    let real_images = datagen::load_image_set(data_dir, &rm)?;
    let prepared = prepare_reflectance_data(
        &depths,
        &maps,
        &LightRig::training_default(),
        cfg.profile.k_d,
    )?;
    Ok(LoadedCorpora {
        prepared,
        real_images,
    })
}

fn load_manifest(dir: &Path, name: &str) -> Result<DatasetManifest> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(CommandError::MissingInput {
            what: path.display().to_string(),
        });
    }
    Ok(crate::io::read_json(&path)?)
}

fn write_train_outputs(
    out: &Path,
    cfg: &RunConfig,
    ckpt: &Checkpoint,
    log: &TrainLog,
) -> Result<()> {
    embed_config(out, cfg)?;
    save_checkpoint(&out.join("checkpoint"), ckpt)?;
    fs::write(out.join("loss_log.jsonl"), log.to_jsonl())?;
    Ok(())
}

/// Iteration chunk sizes honoring `checkpoint_every` (0 = one chunk).
fn chunks_of(total: usize, every: usize) -> Vec<usize> {
    if every == 0 || every >= total {
        return vec![total];
    }
    let mut out = Vec::new();
    let mut left = total;
    while left > 0 {
        let n = left.min(every);
        out.push(n);
        left -= n;
    }
    out
}

/// Save a periodic checkpoint under `out/checkpoint_<iter>`.
fn periodic_save(
    out: &Path,
    cfg: &RunConfig,
    models: &Models,
    optim: &Optimizers,
    state: &TrainState,
    done: usize,
) -> Result<()> {
    let snapshot = Checkpoint {
        models: models.clone(),
        optim: optim.clone(),
        config: cfg.train.clone(),
        state: state.clone(),
    };
    save_checkpoint(&out.join(format!("checkpoint_{done:06}")), &snapshot)?;
    Ok(())
}

/// Stage 1: train the reflectance networks from scratch.
pub fn train_reflectance(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<()> {
    let corpora = load_corpora(cfg, data_dir)?;
    fs::create_dir_all(out)?;
    let mut rng = rng::seeded(cfg.seed);
    let mut models = Models::init(&cfg.train, &mut rng);
    let mut optim = Optimizers::default();
    let mut log = TrainLog::default();
    let mut state = TrainState::new(cfg.seed);
    let mut done = 0usize;
    for chunk in chunks_of(cfg.train.iters_reflectance, cfg.train.checkpoint_every) {
        let chunk_cfg = crate::training::TrainConfig {
            iters_reflectance: chunk,
            ..cfg.train.clone()
        };
        train_reflectance_chunk(
            &mut models,
            &mut optim,
            &corpora.prepared,
            &chunk_cfg,
            &mut rng,
            &mut log,
            done,
        )?;
        done += chunk;
        state.capture_rng(&rng);
        state.iters_done_reflectance = done;
        if done < cfg.train.iters_reflectance {
            periodic_save(out, cfg, &models, &optim, &state, done)?;
        }
    }
    write_train_outputs(
        out,
        cfg,
        &Checkpoint {
            models,
            optim,
            config: cfg.train.clone(),
            state,
        },
        &log,
    )
}

/// Stage 2: train the specular pair on top of a reflectance checkpoint.
pub fn train_specular(cfg: &RunConfig, data_dir: &Path, ckpt_in: &Path, out: &Path) -> Result<()> {
    let corpora = load_corpora(cfg, data_dir)?;
    let mut ckpt = load_checkpoint(ckpt_in)?;
    let mut rng = ckpt.state.restore_rng();
    let mut log = TrainLog::default();
    fs::create_dir_all(out)?;
    let mut done = 0usize;
    for chunk in chunks_of(cfg.train.iters_specular, cfg.train.checkpoint_every) {
        let chunk_cfg = crate::training::TrainConfig {
            iters_specular: chunk,
            ..cfg.train.clone()
        };
        train_specular_chunk(
            &mut ckpt.models,
            &mut ckpt.optim,
            &corpora.prepared,
            &corpora.real_images,
            &chunk_cfg,
            &mut rng,
            &mut log,
            done,
        )?;
        done += chunk;
        ckpt.state.capture_rng(&rng);
        ckpt.state.iters_done_specular += chunk;
        if done < cfg.train.iters_specular {
            periodic_save(out, cfg, &ckpt.models, &ckpt.optim, &ckpt.state, done)?;
        }
    }
    ckpt.config = cfg.train.clone();
    write_train_outputs(out, cfg, &ckpt, &log)
}

/// Stage 3: joint fine-tune of the whole 2D setup.
pub fn finetune(cfg: &RunConfig, data_dir: &Path, ckpt_in: &Path, out: &Path) -> Result<()> {
    let corpora = load_corpora(cfg, data_dir)?;
    let mut ckpt = load_checkpoint(ckpt_in)?;
    let mut rng = ckpt.state.restore_rng();
    let mut log = TrainLog::default();
    fs::create_dir_all(out)?;
    let mut done = 0usize;
    for chunk in chunks_of(cfg.train.iters_joint, cfg.train.checkpoint_every) {
        let chunk_cfg = crate::training::TrainConfig {
            iters_joint: chunk,
            ..cfg.train.clone()
        };
        joint_finetune_chunk(
            &mut ckpt.models,
            &mut ckpt.optim,
            &corpora.prepared,
            &corpora.real_images,
            &chunk_cfg,
            &mut rng,
            &mut log,
            done,
        )?;
        done += chunk;
        ckpt.state.capture_rng(&rng);
        ckpt.state.iters_done_joint += chunk;
        if done < cfg.train.iters_joint {
            periodic_save(out, cfg, &ckpt.models, &ckpt.optim, &ckpt.state, done)?;
        }
    }
    ckpt.config = cfg.train.clone();
    write_train_outputs(out, cfg, &ckpt, &log)
}

fn dump_result(out: &Path, prefix: &str, res: &InferenceResult) -> Result<()> {
    fs::create_dir_all(out)?;
    write_png(&out.join(format!("{prefix}final.png")), &res.image)?;
    write_tensor_f32(&out.join(format!("{prefix}final")), &res.image)?;
    let maps = &res.maps;
    let pairs: Vec<(&str, &Tensor<f32>)> = vec![
        ("depth", &maps.depth),
        ("mask", &maps.mask),
        ("noc", &maps.noc),
        ("coarse_normal", &maps.coarse_normal),
        ("normal", &maps.normal),
        ("albedo", &maps.albedo),
        ("specular_albedo", &maps.specular_albedo),
        ("roughness", &maps.roughness),
    ];
    for (name, t) in pairs {
        write_tensor_f32(&out.join(format!("{prefix}{name}")), t)?;
    }
    if let Some(d) = &maps.diffuse {
        write_tensor_f32(&out.join(format!("{prefix}diffuse")), d)?;
        write_png(&out.join(format!("{prefix}diffuse.png")), d)?;
    }
    if let Some(r) = &maps.respec {
        write_tensor_f32(&out.join(format!("{prefix}respec")), r)?;
    }
    // image-like previews of the interpretable maps
    write_png(&out.join(format!("{prefix}albedo.png")), &maps.albedo)?;
    let normal_preview = maps.normal.map(|v| (v + 1.0) * 0.5);
    write_png(&out.join(format!("{prefix}normal.png")), &normal_preview)?;
    Ok(())
}

/// Controllable inference; emits the final image plus the full map panel.
pub fn infer_cmd(
    cfg: &RunConfig,
    ckpt_dir: &Path,
    req: &InferenceRequest,
    out: &Path,
) -> Result<()> {
    embed_config(out, cfg)?;
    write_json(&out.join("request.json"), req)?;
    let ckpt = load_checkpoint(ckpt_dir)?;
    let registry = VariantRegistry::builtin();
    let res = infer(&ckpt.models, &registry, &cfg.inference_setup(), req)?;
    let mesh = crate::geometry::sample_coarse_shape(&req.z_shape, &cfg.shape)
        .map_err(crate::pipeline::PipelineError::Geometry)?;
    crate::geometry::write_obj(&out.join("shape.obj"), &mesh)
        .map_err(crate::pipeline::PipelineError::Geometry)?;
    dump_result(out, "", &res)
}

/// Camera sweep at evenly spaced stops over the view distribution.
pub fn sweep_camera_cmd(
    cfg: &RunConfig,
    ckpt_dir: &Path,
    req: &InferenceRequest,
    steps: usize,
    out: &Path,
) -> Result<()> {
    embed_config(out, cfg)?;
    write_json(&out.join("request.json"), req)?;
    let ckpt = load_checkpoint(ckpt_dir)?;
    let registry = VariantRegistry::builtin();
    let (plo, phi) = cfg.view.phi_deg;
    let theta = 0.5 * (cfg.view.theta_deg.0 + cfg.view.theta_deg.1);
    let stops: Vec<(f64, f64)> = (0..steps.max(1))
        .map(|i| {
            let t = if steps <= 1 {
                0.5
            } else {
                i as f64 / (steps - 1) as f64
            };
            (theta, plo + t * (phi - plo))
        })
        .collect();
    let results = sweep_camera(&ckpt.models, &registry, &cfg.inference_setup(), req, &stops)?;
    for (i, r) in results.iter().enumerate() {
        dump_result(out, &format!("{i:03}_"), r)?;
    }
    write_json(&out.join("stops.json"), &stops)?;
    Ok(())
}

/// Light sweep with explicit rigs.
pub fn sweep_lights_cmd(
    cfg: &RunConfig,
    ckpt_dir: &Path,
    req: &InferenceRequest,
    rigs: &[LightRig],
    out: &Path,
) -> Result<()> {
    embed_config(out, cfg)?;
    write_json(&out.join("request.json"), req)?;
    let ckpt = load_checkpoint(ckpt_dir)?;
    let registry = VariantRegistry::builtin();
    let results = sweep_lights(&ckpt.models, &registry, &cfg.inference_setup(), req, rigs)?;
    for (i, r) in results.iter().enumerate() {
        dump_result(out, &format!("{i:03}_"), r)?;
    }
    write_json(&out.join("rigs.json"), &rigs.to_vec())?;
    Ok(())
}

/// Appearance transfer from an exemplar image file (PNG or raw tensor stem).
pub fn transfer_cmd(
    cfg: &RunConfig,
    ckpt_dir: &Path,
    req: &InferenceRequest,
    exemplar: &Path,
    out: &Path,
) -> Result<()> {
    embed_config(out, cfg)?;
    let image = if exemplar.extension().is_some_and(|e| e == "png") {
        read_png(exemplar)?
    } else {
        crate::tensor::read_tensor_f32(exemplar)?
    };
    let ckpt = load_checkpoint(ckpt_dir)?;
    let registry = VariantRegistry::builtin();
    let res = transfer_appearance(&ckpt.models, &registry, &cfg.inference_setup(), req, &image)?;
    write_json(&out.join("request.json"), req)?;
    dump_result(out, "", &res)
}

/// Ablation report: FID-lite of each variant against the realistic set.
pub fn ablate_cmd(cfg: &RunConfig, ckpt_dir: &Path, data_dir: &Path, out: &Path) -> Result<()> {
    embed_config(out, cfg)?;
    let ckpt = load_checkpoint(ckpt_dir)?;
    let registry = VariantRegistry::builtin();
    let rm = load_manifest(data_dir, "real_manifest.json")?;
    let target = datagen::load_image_set(data_dir, &rm)?;
    let extractor = FeatureExtractor::new(cfg.metrics.feature_dim, cfg.metrics.extractor_seed);
    // evaluate at the corpus resolution so variants and target match scale
    let mut setup = cfg.inference_setup();
    setup.resolution = rm.resolution;
    let report = run_ablation(
        &ckpt.models,
        &registry,
        &setup,
        &target,
        &extractor,
        &cfg.view,
        cfg.infer.ablation_samples,
        cfg.seed ^ 0xab1a,
    )?;
    write_json(&out.join("ablation.json"), &report)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct FidReport {
    pub fid_lite: f64,
    pub n_a: usize,
    pub n_b: usize,
    #[serde(rename = "F")]
    pub feature_dim: usize,
}

fn load_image_dir(dir: &Path) -> Result<Vec<Tensor<f32>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CommandError::MissingInput {
            what: format!("no .png files in {}", dir.display()),
        });
    }
    paths.iter().map(|p| Ok(read_png(p)?)).collect()
}

/// FID-lite between two PNG directories.
pub fn fid_cmd(dir_a: &Path, dir_b: &Path, feature_dim: usize, seed: u64) -> Result<FidReport> {
    let a = load_image_dir(dir_a)?;
    let b = load_image_dir(dir_b)?;
    let extractor = FeatureExtractor::new(feature_dim, seed);
    let fid = fid_lite(&extractor, &a, &b)?;
    Ok(FidReport {
        fid_lite: fid,
        n_a: a.len(),
        n_b: b.len(),
        feature_dim,
    })
}
