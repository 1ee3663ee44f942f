//! Central-finite-difference verification of the analytic gradients.
//!
//! Always runs in `f64`; the relative error floor of 1 in the denominator
//! keeps near-zero gradients from blowing up the ratio.

use super::{Result, Tape, Tensor, TensorError, Var};

/// Max over coordinates of `|analytic - central difference| / max(1, |analytic|)`
/// for a scalar-valued function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    grad_check_multi(|tape, vars| f(tape, vars[0]), &[x.clone()], eps)
}

/// Multi-input variant; checks the gradient of every input.
pub fn grad_check_multi<F>(f: F, xs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    assert!(eps > 0.0, "grad_check eps must be positive");
    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let value = tape.value(loss);
    if !value.is_scalar() {
        return Err(TensorError::NonScalarLoss {
            shape: value.shape().to_vec(),
        });
    }
    if !value.item().is_finite() {
        return Err(TensorError::NonFinite {
            context: "grad_check loss".into(),
        });
    }
    let grads = tape.backward(loss)?;

    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let v = tape.value(loss).item();
        if !v.is_finite() {
            return Err(TensorError::NonFinite {
                context: "grad_check perturbed loss".into(),
            });
        }
        Ok(v)
    };

    let mut worst = 0.0f64;
    for (xi, var) in xs.iter().enumerate() {
        let analytic = grads.expect(vars[xi]);
        for coord in 0..var.numel() {
            let mut probe: Vec<Tensor<f64>> = xs.to_vec();
            let mut plus = var.data().to_vec();
            plus[coord] += eps;
            probe[xi] = Tensor::new(var.shape().to_vec(), plus)?;
            let fp = eval(&probe)?;

            let mut minus = var.data().to_vec();
            minus[coord] -= eps;
            probe[xi] = Tensor::new(var.shape().to_vec(), minus)?;
            let fm = eval(&probe)?;

            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic.data()[coord];
            let err = (a - numeric).abs() / 1.0f64.max(a.abs());
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}
