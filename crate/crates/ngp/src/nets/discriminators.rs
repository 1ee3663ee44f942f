//! Patch discriminators with three receptive-field classes. The class
//! controls how many strided stages precede the score head: more stages mean
//! a larger receptive field and a coarser score map, biasing the
//! discriminator toward structure over texture.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blocks::{conv_in_act, init_conv_params, Act};
use super::{Binding, Params, Result};
use crate::tensor::{Scalar, Tape, Var};

/// Receptive-field class of a patch discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfsClass {
    /// Local texture statistics (10 px): diffuse albedo.
    Small,
    /// Mid-level structure (18 px).
    Mid,
    /// Global structure (38 px).
    Large,
}

/// (kernel, stride, out_channels, instance_norm) per conv stage; the score
/// head is a 1x1 conv appended after these.
fn layer_plan(class: RfsClass) -> Vec<(usize, usize, usize, bool)> {
    match class {
        RfsClass::Small => vec![(4, 2, 16, false), (4, 1, 32, true)],
        RfsClass::Mid => vec![(4, 2, 16, false), (4, 2, 32, true), (3, 1, 64, true)],
        RfsClass::Large => vec![
            (4, 2, 16, false),
            (4, 2, 32, true),
            (4, 2, 64, true),
            (3, 1, 64, true),
        ],
    }
}

/// Receptive field of one output score in input pixels, from the layer list:
/// rf += (k - 1) * jump, jump *= stride.
pub fn receptive_field(class: RfsClass) -> usize {
    let mut rf = 1usize;
    let mut jump = 1usize;
    for (k, s, _, _) in layer_plan(class) {
        rf += (k - 1) * jump;
        jump *= s;
    }
    rf // the 1x1 head adds nothing
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiscriminatorCfg {
    pub in_channels: usize,
    pub rfs: RfsClass,
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub cfg: DiscriminatorCfg,
    pub params: Params,
}

impl Discriminator {
    pub fn init(cfg: DiscriminatorCfg, rng: &mut impl Rng) -> Self {
        let mut p = Params::new();
        let mut cin = cfg.in_channels;
        for (i, (k, _, cout, norm)) in layer_plan(cfg.rfs).into_iter().enumerate() {
            init_conv_params(&mut p, &format!("l{i}"), cin, cout, k, !norm, rng);
            cin = cout;
        }
        init_conv_params(&mut p, "score", cin, 1, 1, true, rng);
        Discriminator { cfg, params: p }
    }

    /// Patch-wise real/fake scores, unbounded reals `[1, h', w']`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, b: &Binding, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, (k, s, _, norm)) in layer_plan(self.cfg.rfs).into_iter().enumerate() {
            let pad = (k - 1) / 2;
            h = conv_in_act(tape, b, &format!("l{i}"), h, s, pad, norm, Act::Leaky)?;
        }
        conv_in_act(tape, b, "score", h, 1, 0, false, Act::None)
    }
}
