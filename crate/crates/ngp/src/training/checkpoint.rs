//! Checkpoint format: a directory with the architecture descriptor, one raw
//! tensor file per parameter and optimizer moment, and a state file carrying
//! the iteration counters plus the RNG stream position, so a resumed run
//! reproduces the uninterrupted one exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{Models, Optimizers, Result, TrainConfig, TrainError};
use crate::io::{read_json, write_json};
use crate::nets::{Discriminator, Encoder, Generator};
use crate::tensor::{read_tensor_f32, write_tensor_f32};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainState {
    pub seed: u64,
    /// ChaCha word position, lower/upper halves (u128 split for JSON).
    pub rng_word_pos: (u64, u64),
    pub iters_done_reflectance: usize,
    pub iters_done_specular: usize,
    pub iters_done_joint: usize,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng_word_pos: (0, 0),
            iters_done_reflectance: 0,
            iters_done_specular: 0,
            iters_done_joint: 0,
        }
    }

    pub fn capture_rng(&mut self, rng: &ChaCha20Rng) {
        let pos = rng.get_word_pos();
        self.rng_word_pos = ((pos & u64::MAX as u128) as u64, (pos >> 64) as u64);
    }

    pub fn restore_rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let pos = (self.rng_word_pos.1 as u128) << 64 | self.rng_word_pos.0 as u128;
        rng.set_word_pos(pos);
        rng
    }
}

/// In-memory checkpoint: models, optimizer states, config echo, train state.
pub struct Checkpoint {
    pub models: Models,
    pub optim: Optimizers,
    pub config: TrainConfig,
    pub state: TrainState,
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    let params_dir = dir.join("params");
    let optim_dir = dir.join("optim");
    fs::create_dir_all(&params_dir).map_err(io_err)?;
    fs::create_dir_all(&optim_dir).map_err(io_err)?;

    write_json(&dir.join("descriptor.json"), &ckpt.models.descriptor())?;
    write_json(&dir.join("config.json"), &ckpt.config)?;
    write_json(&dir.join("state.json"), &ckpt.state)?;

    for net in Models::ALL {
        let params = ckpt.models.params_of(net).expect("known net");
        for (name, t) in params.iter() {
            write_tensor_f32(&params_dir.join(format!("{net}__{name}")), t)?;
        }
        if let Some(state) = ckpt.optim.states.get(net) {
            let mut steps = BTreeMap::new();
            steps.insert("step".to_string(), state.step);
            write_json(&optim_dir.join(format!("{net}.step.json")), &steps)?;
            for (name, (m, v)) in &state.moments {
                write_tensor_f32(&optim_dir.join(format!("{net}__{name}.m")), m)?;
                write_tensor_f32(&optim_dir.join(format!("{net}__{name}.v")), v)?;
            }
        }
    }
    Ok(())
}

fn io_err(e: std::io::Error) -> TrainError {
    TrainError::Io(crate::io::IoError::Io(e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let descriptor: crate::nets::ArchDescriptor = read_json(&dir.join("descriptor.json"))?;
    let config: TrainConfig = read_json(&dir.join("config.json"))?;
    let state: TrainState = read_json(&dir.join("state.json"))?;

    // rebuild empty models from the descriptor, then overwrite every tensor
    let mut seed_rng = ChaCha20Rng::seed_from_u64(0);
    let mut models = Models::init(&config, &mut seed_rng);
    for (name, cfg) in &descriptor.generators {
        let g = Generator::init(cfg.clone(), &mut seed_rng);
        match name.as_str() {
            "g_norm" => models.g_norm = g,
            "g_diffa" => models.g_diffa = g,
            "g_depth" => models.g_depth = g,
            "g_respec" => models.g_respec = g,
            "g_despec" => models.g_despec = g,
            other => {
                return Err(TrainError::BadCheckpoint {
                    detail: format!("unknown generator `{other}`"),
                })
            }
        }
    }
    for (name, cfg) in &descriptor.encoders {
        if name != "e_diffa" {
            return Err(TrainError::BadCheckpoint {
                detail: format!("unknown encoder `{name}`"),
            });
        }
        models.e_diffa = Encoder::init(cfg.clone(), &mut seed_rng);
    }
    for (name, cfg) in &descriptor.discriminators {
        let d = Discriminator::init(cfg.clone(), &mut seed_rng);
        match name.as_str() {
            "d_norm" => models.d_norm = d,
            "d_diffa" => models.d_diffa = d,
            "d_diff" => models.d_diff = d,
            "d_depth" => models.d_depth = d,
            "d_noc" => models.d_noc = d,
            "d_real" => models.d_real = d,
            other => {
                return Err(TrainError::BadCheckpoint {
                    detail: format!("unknown discriminator `{other}`"),
                })
            }
        }
    }

    let params_dir = dir.join("params");
    for net in Models::ALL {
        let names: Vec<String> = models
            .params_of(net)
            .expect("known net")
            .names()
            .cloned()
            .collect();
        let params = models.params_of_mut(net).expect("known net");
        for name in names {
            let stem = params_dir.join(format!("{net}__{name}"));
            let t = read_tensor_f32(&stem)?;
            let expected = params.get(&name)?.shape().to_vec();
            if t.shape() != expected {
                return Err(TrainError::BadCheckpoint {
                    detail: format!(
                        "parameter {net}.{name} shape {:?} != descriptor {:?}",
                        t.shape(),
                        expected
                    ),
                });
            }
            params.set(&name, t);
        }
    }

    let mut optim = Optimizers::default();
    let optim_dir = dir.join("optim");
    for net in Models::ALL {
        let step_path = optim_dir.join(format!("{net}.step.json"));
        if !step_path.exists() {
            continue;
        }
        let steps: BTreeMap<String, u64> = read_json(&step_path)?;
        let state = optim.state_of(net);
        state.step = *steps.get("step").unwrap_or(&0);
        let names: Vec<String> = models
            .params_of(net)
            .expect("known net")
            .names()
            .cloned()
            .collect();
        for name in names {
            let m_stem = optim_dir.join(format!("{net}__{name}.m"));
            if m_stem.with_file_name(format!("{net}__{name}.m.bin")).exists() {
                let m = read_tensor_f32(&m_stem)?;
                let v = read_tensor_f32(&optim_dir.join(format!("{net}__{name}.v")))?;
                state.moments.insert(name, (m, v));
            }
        }
    }

    Ok(Checkpoint {
        models,
        optim,
        config,
        state,
    })
}
