//! `ngp` command-line interface.
//!
//! Every subcommand takes an optional `--config` JSON file (defaults
//! otherwise) plus a few overrides, writes its outputs under `--out`, and
//! exits nonzero with a machine-readable JSON error on stderr on failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ngp::commands::{self, CommandError};
use ngp::config::RunConfig;
use ngp::pipeline::{CameraHandle, InferenceRequest};
use ngp::shading::{DirectionalLight, LightRig};

#[derive(Parser)]
#[command(name = "ngp", about = "controllable image generation pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the reflectance profile preset (car, chair).
    #[arg(long)]
    profile: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RequestArgs {
    /// Shape latent as comma-separated floats; zeros when omitted.
    #[arg(long)]
    z_shape: Option<String>,
    /// Appearance latent as comma-separated floats; zeros when omitted.
    #[arg(long)]
    z_da: Option<String>,
    /// Camera elevation in degrees.
    #[arg(long, default_value_t = 10.0)]
    theta: f64,
    /// Camera azimuth in degrees.
    #[arg(long, default_value_t = 0.0)]
    phi: f64,
    /// Formation variant (ngp, ngp-bp, ngp-plus, ngp-wo-gnorm,
    /// ngp-wo-gdiffa, ngp-wo-grespec).
    #[arg(long, default_value = "ngp")]
    variant: String,
    /// Extra lights as JSON (list of {direction, intensity, color}).
    #[arg(long)]
    extra_lights: Option<String>,
    /// Base rig as JSON; the 4-light training rig when omitted.
    #[arg(long)]
    rig: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the unpaired training corpora and the eval split.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Stage 1: train the reflectance map generators.
    TrainReflectance {
        #[command(flatten)]
        common: Common,
        /// Directory produced by gen-data.
        #[arg(long)]
        data: PathBuf,
    },
    /// Stage 2: train the realistic specular pair.
    TrainSpecular {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint directory from the previous stage.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Stage 3: joint fine-tune of the whole 2D setup.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Controllable generation of one image plus all intermediate maps.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        request: RequestArgs,
    },
    /// Camera sweep holding shape, appearance and lights fixed.
    SweepCamera {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        request: RequestArgs,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// Light sweep holding everything but the rig fixed.
    SweepLights {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        request: RequestArgs,
        /// JSON list of rigs (each a list of lights).
        #[arg(long)]
        rigs: Option<String>,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// Appearance transfer from an exemplar image.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        request: RequestArgs,
        /// Exemplar PNG (or raw tensor stem).
        #[arg(long)]
        exemplar: PathBuf,
    },
    /// FID-lite report of the formation variants against the realistic set.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// FID-lite between two PNG directories.
    Fid {
        #[arg(long)]
        dir_a: PathBuf,
        #[arg(long)]
        dir_b: PathBuf,
        /// Feature dimensionality of the substitute extractor.
        #[arg(long, default_value_t = 64)]
        feature_dim: usize,
        /// Extractor seed.
        #[arg(long, default_value_t = 17)]
        extractor_seed: u64,
        /// Optional JSON report path (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_floats(s: &str) -> Result<Vec<f64>, CommandError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| CommandError::Config(format!("bad float `{t}`: {e}")))
        })
        .collect()
}

fn load_config(common: &Common) -> Result<RunConfig, CommandError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(CommandError::Io)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(name) = &common.profile {
        cfg.profile = RunConfig::profile_preset(name)
            .ok_or_else(|| CommandError::Config(format!("unknown profile preset `{name}`")))?;
    }
    Ok(cfg.resolve())
}

fn build_request(cfg: &RunConfig, args: &RequestArgs) -> Result<InferenceRequest, CommandError> {
    let mut req = InferenceRequest {
        camera: CameraHandle::Angles {
            theta_deg: args.theta,
            phi_deg: args.phi,
        },
        variant: args.variant.clone(),
        ..Default::default()
    };
    req.z_shape = match &args.z_shape {
        Some(s) => parse_floats(s)?,
        None => vec![0.0; cfg.shape.latent_dim],
    };
    req.z_da = match &args.z_da {
        Some(s) => parse_floats(s)?.into_iter().map(|v| v as f32).collect(),
        None => vec![0.0; cfg.train.z_dim],
    };
    if let Some(json) = &args.rig {
        let lights: Vec<DirectionalLight> = serde_json::from_str(json)
            .map_err(|e| CommandError::Config(format!("bad --rig JSON: {e}")))?;
        req.rig = LightRig::new(lights);
    }
    if let Some(json) = &args.extra_lights {
        req.extra_lights = serde_json::from_str(json)
            .map_err(|e| CommandError::Config(format!("bad --extra-lights JSON: {e}")))?;
    }
    Ok(req)
}

/// Default light sweep when no rigs are given: one white light orbiting in
/// azimuth at fixed elevation.
fn default_sweep_rigs(steps: usize) -> Vec<LightRig> {
    (0..steps.max(1))
        .map(|i| {
            let az = 360.0 * i as f64 / steps.max(1) as f64;
            LightRig::new(vec![
                DirectionalLight::from_angles(az, 55.0, 1.0).expect("fixed sweep light")
            ])
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::GenData { common } => {
            let cfg = load_config(&common)?;
            let summary = commands::gen_data(&cfg, &common.out)?;
            println!("{}", serde_json::to_string(&summary).unwrap());
            Ok(())
        }
        Command::TrainReflectance { common, data } => {
            let cfg = load_config(&common)?;
            commands::train_reflectance(&cfg, &data, &common.out)
        }
        Command::TrainSpecular {
            common,
            data,
            checkpoint,
        } => {
            let cfg = load_config(&common)?;
            commands::train_specular(&cfg, &data, &checkpoint, &common.out)
        }
        Command::Finetune {
            common,
            data,
            checkpoint,
        } => {
            let cfg = load_config(&common)?;
            commands::finetune(&cfg, &data, &checkpoint, &common.out)
        }
        Command::Infer {
            common,
            checkpoint,
            request,
        } => {
            let cfg = load_config(&common)?;
            let req = build_request(&cfg, &request)?;
            commands::infer_cmd(&cfg, &checkpoint, &req, &common.out)
        }
        Command::SweepCamera {
            common,
            checkpoint,
            request,
            steps,
        } => {
            let cfg = load_config(&common)?;
            let req = build_request(&cfg, &request)?;
            commands::sweep_camera_cmd(&cfg, &checkpoint, &req, steps, &common.out)
        }
        Command::SweepLights {
            common,
            checkpoint,
            request,
            rigs,
            steps,
        } => {
            let cfg = load_config(&common)?;
            let req = build_request(&cfg, &request)?;
            let rigs: Vec<LightRig> = match rigs {
                Some(json) => serde_json::from_str(&json)
                    .map_err(|e| CommandError::Config(format!("bad --rigs JSON: {e}")))?,
                None => default_sweep_rigs(steps),
            };
            commands::sweep_lights_cmd(&cfg, &checkpoint, &req, &rigs, &common.out)
        }
        Command::Transfer {
            common,
            checkpoint,
            request,
            exemplar,
        } => {
            let cfg = load_config(&common)?;
            let req = build_request(&cfg, &request)?;
            commands::transfer_cmd(&cfg, &checkpoint, &req, &exemplar, &common.out)
        }
        Command::Ablate {
            common,
            checkpoint,
            data,
        } => {
            let cfg = load_config(&common)?;
            commands::ablate_cmd(&cfg, &checkpoint, &data, &common.out)
        }
        Command::Fid {
            dir_a,
            dir_b,
            feature_dim,
            extractor_seed,
            out,
        } => {
            let report = commands::fid_cmd(&dir_a, &dir_b, feature_dim, extractor_seed)?;
            let text = serde_json::to_string_pretty(&report).unwrap();
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
