//! Training objectives: least-squares adversarial terms, L1 cycle terms, the
//! latent cycle, the KL regularizer, and the weighted 2D total with its
//! per-term breakdown.

use serde::{Deserialize, Serialize};

use crate::tensor::{Scalar, Tape, TensorError, Var};

#[derive(Debug, Clone, PartialEq)]
pub enum LossError {
    MissingTerms { names: Vec<&'static str> },
    Tensor(TensorError),
}

impl std::fmt::Display for LossError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::MissingTerms { names } => write!(f, "missing loss terms: {}", names.join(", ")),
            Self::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for LossError {}

impl From<TensorError> for LossError {
    fn from(e: TensorError) -> Self {
        Self::Tensor(e)
    }
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Weights of the 2D modeling total.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LossWeights {
    pub depth_cyc: f64,
    pub noc_cyc: f64,
    pub normal_cyc: f64,
    pub diffa_cyc: f64,
    pub diff_img_cyc: f64,
    pub latent_cyc: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            depth_cyc: 10.0,
            noc_cyc: 10.0,
            normal_cyc: 25.0,
            diffa_cyc: 25.0,
            diff_img_cyc: 25.0,
            latent_cyc: 1.0,
            kl: 0.001,
        }
    }
}

/// Adversarial objective family. Least squares is the default; the
/// cross-entropy form is kept behind this switch for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GanObjective {
    #[default]
    LeastSquares,
    CrossEntropy,
}

/// Generator side: mean((fake - 1)^2).
pub fn lsgan_g_loss<T: Scalar>(tape: &mut Tape<T>, fake_scores: Var) -> Result<Var> {
    let shifted = tape.add_scalar(fake_scores, -1.0)?;
    let sq = tape.mul(shifted, shifted)?;
    Ok(tape.mean_all(sq)?)
}

/// Discriminator side: 0.5 mean((real - 1)^2) + 0.5 mean(fake^2).
pub fn lsgan_d_loss<T: Scalar>(tape: &mut Tape<T>, real_scores: Var, fake_scores: Var) -> Result<Var> {
    let rs = tape.add_scalar(real_scores, -1.0)?;
    let rsq = tape.mul(rs, rs)?;
    let rterm = tape.mean_all(rsq)?;
    let fsq = tape.mul(fake_scores, fake_scores)?;
    let fterm = tape.mean_all(fsq)?;
    let half_r = tape.scale(rterm, 0.5)?;
    let half_f = tape.scale(fterm, 0.5)?;
    Ok(tape.add(half_r, half_f)?)
}

/// mean(softplus(-x)) = mean(-log sigmoid(x)).
fn mean_softplus_neg<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let neg = tape.scale(x, -1.0)?;
    let sp = tape.softplus(neg)?;
    Ok(tape.mean_all(sp)?)
}

/// Generator adversarial loss under the chosen objective (cross entropy uses
/// the non-saturating form on raw scores).
pub fn gan_g_loss<T: Scalar>(tape: &mut Tape<T>, fake_scores: Var, obj: GanObjective) -> Result<Var> {
    match obj {
        GanObjective::LeastSquares => lsgan_g_loss(tape, fake_scores),
        GanObjective::CrossEntropy => mean_softplus_neg(tape, fake_scores),
    }
}

pub fn gan_d_loss<T: Scalar>(
    tape: &mut Tape<T>,
    real_scores: Var,
    fake_scores: Var,
    obj: GanObjective,
) -> Result<Var> {
    match obj {
        GanObjective::LeastSquares => lsgan_d_loss(tape, real_scores, fake_scores),
        GanObjective::CrossEntropy => {
            let r = mean_softplus_neg(tape, real_scores)?;
            let sp = tape.softplus(fake_scores)?;
            let f = tape.mean_all(sp)?;
            Ok(tape.add(r, f)?)
        }
    }
}

/// Mean absolute difference.
pub fn cycle_l1<T: Scalar>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    if tape.shape(a) != tape.shape(b) {
        return Err(LossError::Tensor(TensorError::ShapeMismatch {
            primitive: "cycle_l1",
            detail: format!("{:?} vs {:?}", tape.shape(a), tape.shape(b)),
        }));
    }
    let diff = tape.sub(a, b)?;
    let abs = tape.abs(diff)?;
    Ok(tape.mean_all(abs)?)
}

/// KL(N(mu, e^logvar) || N(0, 1)) = 0.5 sum(mu^2 + e^logvar - 1 - logvar).
pub fn kl_gaussian<T: Scalar>(tape: &mut Tape<T>, mu: Var, logvar: Var) -> Result<Var> {
    if tape.shape(mu) != tape.shape(logvar) {
        return Err(LossError::Tensor(TensorError::ShapeMismatch {
            primitive: "kl_gaussian",
            detail: format!("{:?} vs {:?}", tape.shape(mu), tape.shape(logvar)),
        }));
    }
    let mu2 = tape.mul(mu, mu)?;
    let var = tape.exp(logvar)?;
    let a = tape.add(mu2, var)?;
    let b = tape.add_scalar(a, -1.0)?;
    let c = tape.sub(b, logvar)?;
    let s = tape.sum_all(c)?;
    Ok(tape.scale(s, 0.5)?)
}

/// The 2D-modeling batch context: five generator-side adversarial terms and
/// every cycle term, each already computed from the training graph.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReflectanceTerms {
    pub adv_normal: Option<Var>,
    pub adv_diffa: Option<Var>,
    pub adv_diff_img: Option<Var>,
    pub adv_depth: Option<Var>,
    pub adv_noc: Option<Var>,
    pub cyc_depth: Option<Var>,
    pub cyc_noc: Option<Var>,
    pub cyc_normal: Option<Var>,
    pub cyc_diffa: Option<Var>,
    pub cyc_diff_img: Option<Var>,
    pub cyc_latent: Option<Var>,
    pub kl: Option<Var>,
}

/// One evaluated loss term: weighted contribution to the total.
#[derive(Debug, Clone, Serialize)]
pub struct LossBreakdown {
    pub terms: Vec<(String, f64)>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

/// Weighted total of all 2D terms plus a per-term breakdown whose entries
/// sum to the total. Adversarial terms carry weight 1.
pub fn total_2d_loss<T: Scalar>(
    tape: &mut Tape<T>,
    terms: &ReflectanceTerms,
    weights: &LossWeights,
) -> Result<(Var, LossBreakdown)> {
    let mut missing = Vec::new();
    let mut need = |name: &'static str, v: Option<Var>| {
        if v.is_none() {
            missing.push(name);
        }
        v.unwrap_or(Var { id: 0 })
    };
    let pairs: Vec<(&'static str, Var, f64)> = {
        let w = weights;
        vec![
            ("adv_normal", need("adv_normal", terms.adv_normal), 1.0),
            ("adv_diffa", need("adv_diffa", terms.adv_diffa), 1.0),
            ("adv_diff_img", need("adv_diff_img", terms.adv_diff_img), 1.0),
            ("adv_depth", need("adv_depth", terms.adv_depth), 1.0),
            ("adv_noc", need("adv_noc", terms.adv_noc), 1.0),
            ("cyc_depth", need("cyc_depth", terms.cyc_depth), w.depth_cyc),
            ("cyc_noc", need("cyc_noc", terms.cyc_noc), w.noc_cyc),
            ("cyc_normal", need("cyc_normal", terms.cyc_normal), w.normal_cyc),
            ("cyc_diffa", need("cyc_diffa", terms.cyc_diffa), w.diffa_cyc),
            (
                "cyc_diff_img",
                need("cyc_diff_img", terms.cyc_diff_img),
                w.diff_img_cyc,
            ),
            ("cyc_latent", need("cyc_latent", terms.cyc_latent), w.latent_cyc),
            ("kl", need("kl", terms.kl), w.kl),
        ]
    };
    if !missing.is_empty() {
        return Err(LossError::MissingTerms { names: missing });
    }

    let mut breakdown = Vec::with_capacity(pairs.len());
    let mut total: Option<Var> = None;
    for (name, var, weight) in pairs {
        let weighted = tape.scale(var, weight)?;
        breakdown.push((name.to_string(), tape.value(weighted).item().to_f64()));
        total = Some(match total {
            Some(acc) => tape.add(acc, weighted)?,
            None => weighted,
        });
    }
    let total = total.expect("twelve terms");
    Ok((
        total,
        LossBreakdown {
            terms: breakdown,
            total: tape.value(total).item().to_f64(),
        },
    ))
}
