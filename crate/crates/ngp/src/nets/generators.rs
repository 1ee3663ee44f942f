//! Generators and the albedo-code encoder.
//!
//! All generators share one ResNet encoder-decoder skeleton:
//! stem conv -> strided down conv -> residual blocks -> transpose-conv up ->
//! head conv with a per-role output activation. A latent code, when
//! configured, is broadcast and concatenated to the input of every encoder
//! stage.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blocks::{
    conv_in_act, init_conv_params, init_tconv_params, inject_code, res_block, tconv_in_relu, Act,
};
use super::{Binding, NetError, Params, Result};
use crate::tensor::{Scalar, Tape, Var};

/// Output activation of a generator head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// `[0,1]` maps (albedo, de-specularized image).
    Sigmoid,
    /// Non-negative with an exact zero for zero pre-activation (specular
    /// residual).
    Relu,
    /// Non-negative depth.
    Softplus,
    /// Per-pixel L2 normalization: structural unit normals.
    UnitNormals,
    /// Raw scores.
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorCfg {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_channels: usize,
    pub res_blocks: usize,
    /// 0 disables code injection.
    pub z_dim: usize,
    pub head: Head,
}

/// ResNet encoder-decoder generator.
#[derive(Debug, Clone)]
pub struct Generator {
    pub cfg: GeneratorCfg,
    pub params: Params,
}

impl Generator {
    pub fn init(cfg: GeneratorCfg, rng: &mut impl Rng) -> Self {
        let mut p = Params::new();
        let z = cfg.z_dim;
        let (b1, b2) = (cfg.base_channels, cfg.base_channels * 2);
        init_conv_params(&mut p, "stem", cfg.in_channels + z, b1, 3, false, rng);
        init_conv_params(&mut p, "down", b1 + z, b2, 3, false, rng);
        for i in 0..cfg.res_blocks {
            init_conv_params(&mut p, &format!("res{i}.conv1"), b2, b2, 3, false, rng);
            init_conv_params(&mut p, &format!("res{i}.conv2"), b2, b2, 3, false, rng);
        }
        init_tconv_params(&mut p, "up", b2, b1, 3, rng);
        init_conv_params(&mut p, "head", b1, cfg.out_channels, 3, true, rng);
        Generator { cfg, params: p }
    }

    /// Forward pass. `z` is required iff the generator was configured with
    /// code injection; `mask` (when given) multiplies the output so the
    /// background stays zero.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        b: &Binding,
        input: Var,
        z: Option<Var>,
        mask: Option<Var>,
    ) -> Result<Var> {
        let needs_z = self.cfg.z_dim > 0;
        if needs_z != z.is_some() {
            return Err(NetError::BadDescriptor {
                detail: format!("z_dim {} but z given: {}", self.cfg.z_dim, z.is_some()),
            });
        }

        let mut x = input;
        if let Some(zv) = z {
            x = inject_code(tape, x, zv)?;
        }
        x = conv_in_act(tape, b, "stem", x, 1, 1, true, Act::Relu)?;
        if let Some(zv) = z {
            x = inject_code(tape, x, zv)?;
        }
        x = conv_in_act(tape, b, "down", x, 2, 1, true, Act::Relu)?;
        for i in 0..self.cfg.res_blocks {
            x = res_block(tape, b, &format!("res{i}"), x)?;
        }
        x = tconv_in_relu(tape, b, "up", x)?;
        x = conv_in_act(tape, b, "head", x, 1, 1, false, Act::None)?;

        let mut out = match self.cfg.head {
            Head::Sigmoid => tape.sigmoid(x)?,
            Head::Relu => tape.relu(x)?,
            Head::Softplus => tape.softplus(x)?,
            Head::UnitNormals => tape.normalize_l2_channel(x)?,
            Head::None => x,
        };
        if let Some(m) = mask {
            let shape = tape.shape(out).to_vec();
            let mb = tape.broadcast(m, &shape)?;
            out = tape.mul(out, mb)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EncoderCfg {
    pub in_channels: usize,
    pub base_channels: usize,
    pub z_dim: usize,
}

/// ResNet encoder emitting a Gaussian code: global average features mapped
/// to `(mu, logvar)`, each `[z_dim, 1, 1]`. Cycles consume `mu`.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderCfg,
    pub params: Params,
}

impl Encoder {
    pub fn init(cfg: EncoderCfg, rng: &mut impl Rng) -> Self {
        let mut p = Params::new();
        let (b1, b2) = (cfg.base_channels, cfg.base_channels * 2);
        init_conv_params(&mut p, "stem", cfg.in_channels, b1, 3, false, rng);
        init_conv_params(&mut p, "down", b1, b2, 3, false, rng);
        init_conv_params(&mut p, "res0.conv1", b2, b2, 3, false, rng);
        init_conv_params(&mut p, "res0.conv2", b2, b2, 3, false, rng);
        init_conv_params(&mut p, "head", b2, 2 * cfg.z_dim, 1, true, rng);
        Encoder { cfg, params: p }
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        b: &Binding,
        image: Var,
    ) -> Result<(Var, Var)> {
        let x = conv_in_act(tape, b, "stem", image, 1, 1, true, Act::Relu)?;
        let x = conv_in_act(tape, b, "down", x, 2, 1, true, Act::Relu)?;
        let x = res_block(tape, b, "res0", x)?;
        // global average pool to [c,1,1]
        let x = tape.mean_axis(x, 2)?;
        let x = tape.mean_axis(x, 1)?;
        let x = conv_in_act(tape, b, "head", x, 1, 0, false, Act::None)?;
        let mu = tape.slice(x, 0, 0, self.cfg.z_dim)?;
        let logvar = tape.slice(x, 0, self.cfg.z_dim, self.cfg.z_dim)?;
        Ok((mu, logvar))
    }
}
