//! Layer builders shared by generators and discriminators.

use super::{Binding, Params, Result};
use crate::tensor::{Scalar, Tape, Var};

pub(super) enum Act {
    Relu,
    Leaky,
    None,
}

/// conv(3x3 or kxk, pad keeps size at stride 1) without bias, then
/// instance norm, then activation.
pub(super) fn conv_in_act<T: Scalar>(
    tape: &mut Tape<T>,
    b: &Binding,
    name: &str,
    x: Var,
    stride: usize,
    pad: usize,
    norm: bool,
    act: Act,
) -> Result<Var> {
    let w = b.var(&format!("{name}.weight"))?;
    let mut y = tape.conv2d(x, w, stride, pad)?;
    if !norm {
        let bias = b.var(&format!("{name}.bias"))?;
        let shape = tape.shape(y).to_vec();
        let bb = tape.broadcast(bias, &shape)?;
        y = tape.add(y, bb)?;
    }
    if norm {
        y = tape.instance_norm(y)?;
    }
    Ok(match act {
        Act::Relu => tape.relu(y)?,
        Act::Leaky => tape.leaky_relu(y, 0.2)?,
        Act::None => y,
    })
}

pub(super) fn tconv_in_relu<T: Scalar>(
    tape: &mut Tape<T>,
    b: &Binding,
    name: &str,
    x: Var,
) -> Result<Var> {
    let w = b.var(&format!("{name}.weight"))?;
    let y = tape.transpose_conv2d(x, w, 2, 1, 1)?;
    let y = tape.instance_norm(y)?;
    Ok(tape.relu(y)?)
}

/// Two 3x3 convs with instance norm, relu in between, additive skip.
pub(super) fn res_block<T: Scalar>(
    tape: &mut Tape<T>,
    b: &Binding,
    name: &str,
    x: Var,
) -> Result<Var> {
    let h = conv_in_act(tape, b, &format!("{name}.conv1"), x, 1, 1, true, Act::Relu)?;
    let h = conv_in_act(tape, b, &format!("{name}.conv2"), h, 1, 1, true, Act::None)?;
    Ok(tape.add(x, h)?)
}

pub(super) fn init_conv_params(
    p: &mut Params,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    bias: bool,
    rng: &mut impl rand::Rng,
) {
    p.init_conv(&format!("{name}.weight"), &[cout, cin, k, k], rng);
    if bias {
        p.init_zeros(&format!("{name}.bias"), &[cout, 1, 1]);
    }
}

pub(super) fn init_tconv_params(
    p: &mut Params,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    rng: &mut impl rand::Rng,
) {
    // transpose conv weight layout is [cin, cout, kh, kw]
    p.init_conv(&format!("{name}.weight"), &[cin, cout, k, k], rng);
}

/// Broadcast a `[z,1,1]` code over the spatial extent of `x` and concatenate
/// along channels.
pub(super) fn inject_code<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    z: Var,
) -> crate::tensor::Result<Var> {
    let xs = tape.shape(x).to_vec();
    let zs = tape.shape(z).to_vec();
    let zb = tape.broadcast(z, &[zs[0], xs[1], xs[2]])?;
    tape.concat(&[x, zb], 0)
}
