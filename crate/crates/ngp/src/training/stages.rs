//! Stage loops. Each iteration alternates a generator step and a
//! discriminator step (1:1). Generated maps are detached between the two
//! steps by re-entering them as constants on a fresh tape.

use rand::{Rng, RngExt};
use serde_json::json;

use super::{
    adam_step, Models, Optimizers, Result, TrainConfig, TrainError, DEPTH_INPUT_SCALE,
    REFLECTANCE_DISCRIMINATORS,
};
use crate::datagen::{DepthSample, MapsSample};
use crate::geometry::noc_coefficients;
use crate::losses::{
    cycle_l1, gan_d_loss, gan_g_loss, kl_gaussian, total_2d_loss, LossBreakdown, ReflectanceTerms,
};
use crate::nets::{Binding, LatentCode};
use crate::shading::{blend, render_diffuse, LightRig, MapVars};
use crate::tensor::{Tape, Tensor, Var};

/// Per-iteration JSON loss records.
#[derive(Debug, Default)]
pub struct TrainLog {
    pub lines: Vec<serde_json::Value>,
}

impl TrainLog {
    pub fn push(&mut self, line: serde_json::Value) {
        self.lines.push(line);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    /// Total generator loss per logged iteration of one stage.
    pub fn total_series(&self, stage: &str) -> Vec<f64> {
        self.lines
            .iter()
            .filter(|l| l["stage"] == stage)
            .filter_map(|l| l["total"].as_f64())
            .collect()
    }

    /// Trailing moving average of the stage's total series.
    pub fn moving_average(&self, stage: &str, window: usize) -> Vec<f64> {
        let series = self.total_series(stage);
        series
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let lo = (i + 1).saturating_sub(window);
                let s: f64 = series[lo..=i].iter().sum();
                s / (i + 1 - lo) as f64
            })
            .collect()
    }
}

/// Depth-pool item with everything the graphs need precomputed.
pub struct DepthItem {
    pub depth_raw: Tensor<f32>,
    pub depth_in: Tensor<f32>,
    pub mask: Tensor<f32>,
    pub noc: Tensor<f32>,
    pub noc_a: Tensor<f32>,
    pub noc_b: Tensor<f32>,
}

/// Maps-pool item with its diffuse render under the training rig.
pub struct MapsItem {
    pub albedo: Tensor<f32>,
    pub normal: Tensor<f32>,
    pub mask: Tensor<f32>,
    pub diff_img: Tensor<f32>,
    pub noc_a: Tensor<f32>,
    pub noc_b: Tensor<f32>,
}

pub struct PreparedReflectance {
    pub depths: Vec<DepthItem>,
    pub maps: Vec<MapsItem>,
    pub rig: LightRig,
}

/// Precompute per-sample constants (scaled depth, NOC coefficients, real
/// diffuse renders) once before the loop.
pub fn prepare_reflectance_data(
    depths: &[DepthSample],
    maps: &[MapsSample],
    rig: &LightRig,
    k_d: f64,
) -> Result<PreparedReflectance> {
    if depths.is_empty() {
        return Err(TrainError::EmptyDataset { which: "depth" });
    }
    if maps.is_empty() {
        return Err(TrainError::EmptyDataset { which: "maps" });
    }
    let scale = DEPTH_INPUT_SCALE as f32;
    let depth_items = depths
        .iter()
        .map(|s| {
            let (a, b) = noc_coefficients(&s.camera)?;
            Ok(DepthItem {
                depth_raw: s.depth.values.clone(),
                depth_in: s.depth.values.map(|v| v * scale),
                mask: s.mask.values.clone(),
                noc: s.noc.values.clone(),
                noc_a: a,
                noc_b: b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let maps_items = maps
        .iter()
        .map(|s| {
            let (a, b) = noc_coefficients(&s.camera)?;
            let refl = crate::shading::ReflectanceMaps {
                normal: s.normal.clone(),
                diffuse_albedo: s.albedo.clone(),
                specular_albedo: Tensor::zeros(s.albedo.shape()),
                roughness: Tensor::zeros(s.mask.values.shape()),
                mask: s.mask.values.clone(),
            };
            let diff_img = crate::shading::eval_diffuse(&refl, rig, k_d)?;
            Ok(MapsItem {
                albedo: s.albedo.clone(),
                normal: s.normal.clone(),
                mask: s.mask.values.clone(),
                diff_img,
                noc_a: a,
                noc_b: b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedReflectance {
        depths: depth_items,
        maps: maps_items,
        rig: rig.clone(),
    })
}

/// MapVars for a diffuse-only render; the specular slots are never read by
/// the diffuse path.
fn diffuse_vars(normal: Var, albedo: Var, mask: Var) -> MapVars {
    MapVars {
        normal,
        diffuse_albedo: albedo,
        specular_albedo: albedo,
        roughness: mask,
        mask,
    }
}

/// `noc = (a * depth + b) * mask` on the tape (affine per pixel, so the
/// conversion stays differentiable through the depth).
fn noc_in_graph(
    tape: &mut Tape<f32>,
    depth: Var,
    noc_a: &Tensor<f32>,
    noc_b: &Tensor<f32>,
    mask: Var,
) -> crate::tensor::Result<Var> {
    let shape = noc_a.shape().to_vec();
    let a = tape.constant(noc_a.clone());
    let b = tape.constant(noc_b.clone());
    let d3 = tape.broadcast(depth, &shape)?;
    let ad = tape.mul(a, d3)?;
    let noc = tape.add(ad, b)?;
    let m3 = tape.broadcast(mask, &shape)?;
    tape.mul(noc, m3)
}

struct ReflectanceBindings {
    g_norm: Binding,
    g_diffa: Binding,
    e_diffa: Binding,
    g_depth: Binding,
    d_norm: Binding,
    d_diffa: Binding,
    d_diff: Binding,
    d_depth: Binding,
    d_noc: Binding,
}

fn bind_reflectance(
    models: &Models,
    tape: &mut Tape<f32>,
    generators_trainable: bool,
) -> ReflectanceBindings {
    ReflectanceBindings {
        g_norm: models.g_norm.params.bind(tape, generators_trainable),
        g_diffa: models.g_diffa.params.bind(tape, generators_trainable),
        e_diffa: models.e_diffa.params.bind(tape, generators_trainable),
        g_depth: models.g_depth.params.bind(tape, generators_trainable),
        d_norm: models.d_norm.params.bind(tape, false),
        d_diffa: models.d_diffa.params.bind(tape, false),
        d_diff: models.d_diff.params.bind(tape, false),
        d_depth: models.d_depth.params.bind(tape, false),
        d_noc: models.d_noc.params.bind(tape, false),
    }
}

/// Detached copies of the generated maps for the discriminator step.
struct ReflectanceFakes {
    normal: Tensor<f32>,
    albedo: Tensor<f32>,
    diff_img: Tensor<f32>,
    depth_scaled: Tensor<f32>,
    noc: Tensor<f32>,
}

/// Build both training cycles on the tape and return the loss terms plus the
/// generated maps.
#[allow(clippy::too_many_arguments)]
fn build_reflectance_terms(
    tape: &mut Tape<f32>,
    models: &Models,
    binds: &ReflectanceBindings,
    depth_item: &DepthItem,
    maps_item: &MapsItem,
    z: &LatentCode,
    rig: &LightRig,
    cfg: &TrainConfig,
) -> Result<(ReflectanceTerms, ReflectanceFakes)> {
    let k_d = cfg.profile.k_d;

    // ---- top cycle: real depth -> generated maps -> diffuse image -> depth
    let d_in = tape.constant(depth_item.depth_in.clone());
    let d_raw = tape.constant(depth_item.depth_raw.clone());
    let mask_d = tape.constant(depth_item.mask.clone());
    let noc_r = tape.constant(depth_item.noc.clone());
    let z_var = tape.constant(z.tensor());

    let n_g = models
        .g_norm
        .forward(tape, &binds.g_norm, d_in, None, Some(mask_d))?;
    let diffa_input = tape.concat(&[noc_r, n_g], 0)?;
    let i_da_g = models
        .g_diffa
        .forward(tape, &binds.g_diffa, diffa_input, Some(z_var), Some(mask_d))?;
    let i_df_g = render_diffuse(tape, &diffuse_vars(n_g, i_da_g, mask_d), rig, k_d)?;
    let d_g_top = models.g_depth.forward(tape, &binds.g_depth, i_df_g, None, None)?;
    let noc_g_top = noc_in_graph(tape, d_g_top, &depth_item.noc_a, &depth_item.noc_b, mask_d)?;

    let s_norm = models.d_norm.forward(tape, &binds.d_norm, n_g)?;
    let adv_normal = gan_g_loss(tape, s_norm, cfg.objective)?;
    let s_diffa = models.d_diffa.forward(tape, &binds.d_diffa, i_da_g)?;
    let adv_diffa = gan_g_loss(tape, s_diffa, cfg.objective)?;
    let s_diff = models.d_diff.forward(tape, &binds.d_diff, i_df_g)?;
    let adv_diff_img = gan_g_loss(tape, s_diff, cfg.objective)?;

    let cyc_depth = cycle_l1(tape, d_g_top, d_raw)?;
    let cyc_noc = cycle_l1(tape, noc_g_top, noc_r)?;
    let (mu_g, _lv_g) = models.e_diffa.forward(tape, &binds.e_diffa, i_da_g)?;
    let cyc_latent = cycle_l1(tape, mu_g, z_var)?;

    // ---- bottom cycle: real maps -> diffuse image -> depth -> maps
    let i_da_r = tape.constant(maps_item.albedo.clone());
    let n_r = tape.constant(maps_item.normal.clone());
    let mask_m = tape.constant(maps_item.mask.clone());
    let i_df_r = tape.constant(maps_item.diff_img.clone());

    let d_g_bot = models.g_depth.forward(tape, &binds.g_depth, i_df_r, None, None)?;
    let d_g_bot_scaled = tape.scale(d_g_bot, DEPTH_INPUT_SCALE)?;
    let s_depth = models.d_depth.forward(tape, &binds.d_depth, d_g_bot_scaled)?;
    let adv_depth = gan_g_loss(tape, s_depth, cfg.objective)?;

    let noc_g_bot = noc_in_graph(tape, d_g_bot, &maps_item.noc_a, &maps_item.noc_b, mask_m)?;
    let s_noc = models.d_noc.forward(tape, &binds.d_noc, noc_g_bot)?;
    let adv_noc = gan_g_loss(tape, s_noc, cfg.objective)?;

    let n_g_bot = models
        .g_norm
        .forward(tape, &binds.g_norm, d_g_bot_scaled, None, Some(mask_m))?;
    let cyc_normal = cycle_l1(tape, n_g_bot, n_r)?;

    let (mu_r, lv_r) = models.e_diffa.forward(tape, &binds.e_diffa, i_da_r)?;
    let diffa_bot_input = tape.concat(&[noc_g_bot, n_r], 0)?;
    let i_da_g_bot = models.g_diffa.forward(
        tape,
        &binds.g_diffa,
        diffa_bot_input,
        Some(mu_r),
        Some(mask_m),
    )?;
    let cyc_diffa = cycle_l1(tape, i_da_g_bot, i_da_r)?;

    let i_df_g_bot = render_diffuse(tape, &diffuse_vars(n_g_bot, i_da_g_bot, mask_m), rig, k_d)?;
    let cyc_diff_img = cycle_l1(tape, i_df_g_bot, i_df_r)?;

    let kl = kl_gaussian(tape, mu_r, lv_r)?;

    let terms = ReflectanceTerms {
        adv_normal: Some(adv_normal),
        adv_diffa: Some(adv_diffa),
        adv_diff_img: Some(adv_diff_img),
        adv_depth: Some(adv_depth),
        adv_noc: Some(adv_noc),
        cyc_depth: Some(cyc_depth),
        cyc_noc: Some(cyc_noc),
        cyc_normal: Some(cyc_normal),
        cyc_diffa: Some(cyc_diffa),
        cyc_diff_img: Some(cyc_diff_img),
        cyc_latent: Some(cyc_latent),
        kl: Some(kl),
    };
    let fakes = ReflectanceFakes {
        normal: tape.value(n_g).clone(),
        albedo: tape.value(i_da_g).clone(),
        diff_img: tape.value(i_df_g).clone(),
        depth_scaled: tape.value(d_g_bot_scaled).clone(),
        noc: tape.value(noc_g_bot).clone(),
    };
    Ok((terms, fakes))
}

/// Apply accumulated gradients of one tape to the named nets.
fn apply_gradients(
    models: &mut Models,
    optim: &mut Optimizers,
    tape: &Tape<f32>,
    grads: &crate::tensor::Gradients<f32>,
    bindings: &[(&str, &Binding)],
    cfg: &TrainConfig,
) -> Result<()> {
    let _ = tape;
    for (net, binding) in bindings {
        let mut per_net = std::collections::BTreeMap::new();
        for (name, &var) in binding.iter() {
            if let Some(g) = grads.get(var) {
                per_net.insert(name.clone(), g.clone());
            }
        }
        if per_net.is_empty() {
            continue;
        }
        let state = optim.state_of(net);
        let params = models
            .params_of_mut(net)
            .ok_or(TrainError::BadCheckpoint {
                detail: format!("unknown net {net}"),
            })?;
        adam_step(params, &per_net, state, &cfg.adam)?;
    }
    Ok(())
}

/// Discriminator step for the reflectance stage: all five discriminators
/// score their real sample against the detached fake.
fn reflectance_d_step(
    models: &mut Models,
    optim: &mut Optimizers,
    depth_item: &DepthItem,
    maps_item: &MapsItem,
    fakes: &ReflectanceFakes,
    cfg: &TrainConfig,
) -> Result<Vec<(&'static str, f64)>> {
    let mut tape = Tape::<f32>::new();
    let binds: Vec<(&'static str, Binding)> = REFLECTANCE_DISCRIMINATORS
        .iter()
        .map(|&net| {
            let params = models.params_of(net).expect("known net");
            (net, params.bind(&mut tape, true))
        })
        .collect();

    let scale = DEPTH_INPUT_SCALE as f32;
    let reals: Vec<Tensor<f32>> = vec![
        maps_item.normal.clone(),
        maps_item.albedo.clone(),
        maps_item.diff_img.clone(),
        depth_item.depth_raw.map(|v| v * scale),
        depth_item.noc.clone(),
    ];
    let fakes_t: Vec<&Tensor<f32>> = vec![
        &fakes.normal,
        &fakes.albedo,
        &fakes.diff_img,
        &fakes.depth_scaled,
        &fakes.noc,
    ];

    let mut total: Option<Var> = None;
    let mut report = Vec::new();
    for ((net, bind), (real, fake)) in binds.iter().zip(reals.iter().zip(fakes_t)) {
        let disc = match *net {
            "d_norm" => &models.d_norm,
            "d_diffa" => &models.d_diffa,
            "d_diff" => &models.d_diff,
            "d_depth" => &models.d_depth,
            "d_noc" => &models.d_noc,
            _ => unreachable!(),
        };
        let rv = tape.constant(real.clone());
        let fv = tape.constant(fake.clone());
        let rs = disc.forward(&mut tape, bind, rv)?;
        let fs = disc.forward(&mut tape, bind, fv)?;
        let loss = gan_d_loss(&mut tape, rs, fs, cfg.objective)?;
        report.push((*net, tape.value(loss).item() as f64));
        total = Some(match total {
            Some(acc) => tape.add(acc, loss)?,
            None => loss,
        });
    }
    let total = total.expect("five discriminators");
    let grads = tape.backward(total)?;
    let binds_ref: Vec<(&str, &Binding)> = binds.iter().map(|(n, b)| (*n, b)).collect();
    apply_gradients(models, optim, &tape, &grads, &binds_ref, cfg)?;
    Ok(report)
}

fn average_terms(
    tape: &mut Tape<f32>,
    batch: Vec<ReflectanceTerms>,
) -> crate::tensor::Result<ReflectanceTerms> {
    if batch.len() == 1 {
        return Ok(batch.into_iter().next().unwrap());
    }
    let n = batch.len() as f64;
    let mut avg = |pick: fn(&ReflectanceTerms) -> Option<Var>| -> crate::tensor::Result<Option<Var>> {
        let mut acc: Option<Var> = None;
        for t in &batch {
            let v = pick(t).expect("term present");
            acc = Some(match acc {
                Some(a) => tape.add(a, v)?,
                None => v,
            });
        }
        Ok(Some(tape.scale(acc.unwrap(), 1.0 / n)?))
    };
    Ok(ReflectanceTerms {
        adv_normal: avg(|t| t.adv_normal)?,
        adv_diffa: avg(|t| t.adv_diffa)?,
        adv_diff_img: avg(|t| t.adv_diff_img)?,
        adv_depth: avg(|t| t.adv_depth)?,
        adv_noc: avg(|t| t.adv_noc)?,
        cyc_depth: avg(|t| t.cyc_depth)?,
        cyc_noc: avg(|t| t.cyc_noc)?,
        cyc_normal: avg(|t| t.cyc_normal)?,
        cyc_diffa: avg(|t| t.cyc_diffa)?,
        cyc_diff_img: avg(|t| t.cyc_diff_img)?,
        cyc_latent: avg(|t| t.cyc_latent)?,
        kl: avg(|t| t.kl)?,
    })
}

/// One reflectance iteration: G step then D step (1:1).
fn reflectance_iteration(
    models: &mut Models,
    optim: &mut Optimizers,
    data: &PreparedReflectance,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    iteration: usize,
    stage: &'static str,
) -> Result<(LossBreakdown, Vec<(&'static str, f64)>)> {
    let mut tape = Tape::<f32>::new();
    let binds = bind_reflectance(models, &mut tape, true);

    let mut batch_terms = Vec::with_capacity(cfg.batch_size);
    let mut batch_pairs = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size.max(1) {
        let di = rng.random_range(0..data.depths.len());
        let mi = rng.random_range(0..data.maps.len());
        let z = LatentCode::sample(cfg.z_dim, rng);
        let (terms, fakes) = build_reflectance_terms(
            &mut tape,
            models,
            &binds,
            &data.depths[di],
            &data.maps[mi],
            &z,
            &data.rig,
            cfg,
        )?;
        batch_terms.push(terms);
        batch_pairs.push((di, mi, fakes));
    }
    let terms = average_terms(&mut tape, batch_terms)?;
    let (total, breakdown) = total_2d_loss(&mut tape, &terms, &cfg.weights)?;
    if !breakdown.total.is_finite() {
        return Err(TrainError::NonFiniteLoss { iteration, stage });
    }
    let grads = tape.backward(total)?;
    let g_binds: Vec<(&str, &Binding)> = vec![
        ("g_norm", &binds.g_norm),
        ("g_diffa", &binds.g_diffa),
        ("e_diffa", &binds.e_diffa),
        ("g_depth", &binds.g_depth),
    ];
    apply_gradients(models, optim, &tape, &grads, &g_binds, cfg)?;
    drop(tape);

    // D step over the same batch's detached fakes
    let mut d_report = Vec::new();
    for (di, mi, fakes) in &batch_pairs {
        d_report = reflectance_d_step(models, optim, &data.depths[*di], &data.maps[*mi], fakes, cfg)?;
    }
    Ok((breakdown, d_report))
}

/// Reflectance-stage training loop.
pub fn train_reflectance_stage(
    models: &mut Models,
    optim: &mut Optimizers,
    data: &PreparedReflectance,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    log: &mut TrainLog,
) -> Result<()> {
    train_reflectance_chunk(models, optim, data, cfg, rng, log, 0)
}

/// Reflectance loop with an iteration offset for chunked (periodically
/// checkpointed) runs.
pub fn train_reflectance_chunk(
    models: &mut Models,
    optim: &mut Optimizers,
    data: &PreparedReflectance,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    log: &mut TrainLog,
    start_iter: usize,
) -> Result<()> {
    for i in 0..cfg.iters_reflectance {
        let it = start_iter + i;
        let (breakdown, d_report) =
            reflectance_iteration(models, optim, data, cfg, rng, it, "reflectance")?;
        if it % cfg.log_every.max(1) == 0 {
            log.push(loss_line("reflectance", it, &breakdown, &d_report));
        }
    }
    Ok(())
}

fn loss_line(
    stage: &str,
    iteration: usize,
    breakdown: &LossBreakdown,
    d_report: &[(&'static str, f64)],
) -> serde_json::Value {
    let terms: serde_json::Map<String, serde_json::Value> = breakdown
        .terms
        .iter()
        .map(|(k, v)| (k.clone(), json!(v)))
        .collect();
    let ds: serde_json::Map<String, serde_json::Value> = d_report
        .iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    json!({
        "stage": stage,
        "iter": iteration,
        "total": breakdown.total,
        "terms": terms,
        "d_losses": ds,
    })
}

/// Specular-stage loss terms.
struct SpecularTerms {
    adv: Var,
    cyc: Var,
}

struct SpecularBindings<'a> {
    g_norm: &'a Binding,
    g_diffa: &'a Binding,
    g_respec: &'a Binding,
    g_despec: &'a Binding,
    d_real: &'a Binding,
}

/// Composite generation path: frozen (or jointly trained) reflectance nets
/// produce the diffuse image, the specular pair decorates it.
#[allow(clippy::too_many_arguments)]
fn build_specular_terms(
    tape: &mut Tape<f32>,
    models: &Models,
    binds: &SpecularBindings<'_>,
    depth_item: &DepthItem,
    z: &LatentCode,
    rig: &LightRig,
    cfg: &TrainConfig,
) -> Result<(SpecularTerms, Tensor<f32>, Tensor<f32>)> {
    let d_in = tape.constant(depth_item.depth_in.clone());
    let mask = tape.constant(depth_item.mask.clone());
    let noc = tape.constant(depth_item.noc.clone());
    let z_var = tape.constant(z.tensor());

    let n_g = models.g_norm.forward(tape, binds.g_norm, d_in, None, Some(mask))?;
    let diffa_in = tape.concat(&[noc, n_g], 0)?;
    let i_da_g = models
        .g_diffa
        .forward(tape, binds.g_diffa, diffa_in, Some(z_var), Some(mask))?;
    let i_df_g = render_diffuse(tape, &diffuse_vars(n_g, i_da_g, mask), rig, cfg.profile.k_d)?;

    let respec_in = tape.concat(&[n_g, i_df_g], 0)?;
    let i_rs = models
        .g_respec
        .forward(tape, binds.g_respec, respec_in, None, Some(mask))?;
    let composite = blend(tape, i_df_g, i_rs)?;

    let score = models.d_real.forward(tape, binds.d_real, composite)?;
    let adv = gan_g_loss(tape, score, cfg.objective)?;

    let despec = models
        .g_despec
        .forward(tape, binds.g_despec, composite, None, None)?;
    let cyc = cycle_l1(tape, despec, i_df_g)?;

    Ok((
        SpecularTerms { adv, cyc },
        tape.value(composite).clone(),
        tape.value(i_df_g).clone(),
    ))
}

fn specular_d_step(
    models: &mut Models,
    optim: &mut Optimizers,
    real_image: &Tensor<f32>,
    composite: &Tensor<f32>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut tape = Tape::<f32>::new();
    let bind = models.d_real.params.bind(&mut tape, true);
    let rv = tape.constant(real_image.clone());
    let fv = tape.constant(composite.clone());
    let rs = models.d_real.forward(&mut tape, &bind, rv)?;
    let fs = models.d_real.forward(&mut tape, &bind, fv)?;
    let loss = gan_d_loss(&mut tape, rs, fs, cfg.objective)?;
    let value = tape.value(loss).item() as f64;
    let grads = tape.backward(loss)?;
    apply_gradients(models, optim, &tape, &grads, &[("d_real", &bind)], cfg)?;
    Ok(value)
}

/// Specular-stage training loop: reflectance nets stay frozen; the specular
/// generator pair and the realistic-image discriminator train.
pub fn train_specular_stage(
    models: &mut Models,
    optim: &mut Optimizers,
    data: &PreparedReflectance,
    real_images: &[Tensor<f32>],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    log: &mut TrainLog,
) -> Result<()> {
    train_specular_chunk(models, optim, data, real_images, cfg, rng, log, 0)
}

#[allow(clippy::too_many_arguments)]
pub fn train_specular_chunk(
    models: &mut Models,
    optim: &mut Optimizers,
    data: &PreparedReflectance,
    real_images: &[Tensor<f32>],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    log: &mut TrainLog,
    start_iter: usize,
) -> Result<()> {
    if real_images.is_empty() {
        return Err(TrainError::EmptyDataset { which: "real images" });
    }
    for i in 0..cfg.iters_specular {
        let it = start_iter + i;
        let mut tape = Tape::<f32>::new();
        let own_g_norm = models.g_norm.params.bind(&mut tape, false);
        let own_g_diffa = models.g_diffa.params.bind(&mut tape, false);
        let own_g_respec = models.g_respec.params.bind(&mut tape, true);
        let own_g_despec = models.g_despec.params.bind(&mut tape, true);
        let own_d_real = models.d_real.params.bind(&mut tape, false);
        let binds = SpecularBindings {
            g_norm: &own_g_norm,
            g_diffa: &own_g_diffa,
            g_respec: &own_g_respec,
            g_despec: &own_g_despec,
            d_real: &own_d_real,
        };
        let di = rng.random_range(0..data.depths.len());
        let ri = rng.random_range(0..real_images.len());
        let z = LatentCode::sample(cfg.z_dim, rng);
        let (terms, composite, _) =
            build_specular_terms(&mut tape, models, &binds, &data.depths[di], &z, &data.rig, cfg)?;
        let weighted_cyc = tape.scale(terms.cyc, cfg.weights.diff_img_cyc)?;
        let total = tape.add(terms.adv, weighted_cyc)?;
        let total_v = tape.value(total).item() as f64;
        if !total_v.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                iteration: it,
                stage: "specular",
            });
        }
        let grads = tape.backward(total)?;
        let g_binds: Vec<(&str, &Binding)> =
            vec![("g_respec", &own_g_respec), ("g_despec", &own_g_despec)];
        let adv_v = tape.value(terms.adv).item() as f64;
        let cyc_v = tape.value(terms.cyc).item() as f64;
        apply_gradients(models, optim, &tape, &grads, &g_binds, cfg)?;
        drop(tape);

        let d_loss = specular_d_step(models, optim, &real_images[ri], &composite, cfg)?;
        if it % cfg.log_every.max(1) == 0 {
            log.push(json!({
                "stage": "specular",
                "iter": it,
                "total": total_v,
                "terms": {"adv_real": adv_v, "cyc_despec": cyc_v},
                "d_losses": {"d_real": d_loss},
            }));
        }
    }
    Ok(())
}

/// Joint fine-tune: one generator tape carries both objectives so every
/// generator (and the encoder) updates once per iteration; all six
/// discriminators then step.
pub fn joint_finetune(
    models: &mut Models,
    optim: &mut Optimizers,
    data: &PreparedReflectance,
    real_images: &[Tensor<f32>],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    log: &mut TrainLog,
) -> Result<()> {
    joint_finetune_chunk(models, optim, data, real_images, cfg, rng, log, 0)
}

#[allow(clippy::too_many_arguments)]
pub fn joint_finetune_chunk(
    models: &mut Models,
    optim: &mut Optimizers,
    data: &PreparedReflectance,
    real_images: &[Tensor<f32>],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    log: &mut TrainLog,
    start_iter: usize,
) -> Result<()> {
    if real_images.is_empty() {
        return Err(TrainError::EmptyDataset { which: "real images" });
    }
    for i in 0..cfg.iters_joint {
        let it = start_iter + i;
        let mut tape = Tape::<f32>::new();
        let refl_binds = bind_reflectance(models, &mut tape, true);
        let own_g_respec = models.g_respec.params.bind(&mut tape, true);
        let own_g_despec = models.g_despec.params.bind(&mut tape, true);
        let own_d_real = models.d_real.params.bind(&mut tape, false);
        let spec_binds = SpecularBindings {
            g_norm: &refl_binds.g_norm,
            g_diffa: &refl_binds.g_diffa,
            g_respec: &own_g_respec,
            g_despec: &own_g_despec,
            d_real: &own_d_real,
        };

        let di = rng.random_range(0..data.depths.len());
        let mi = rng.random_range(0..data.maps.len());
        let ri = rng.random_range(0..real_images.len());
        let z = LatentCode::sample(cfg.z_dim, rng);

        let (terms, fakes) = build_reflectance_terms(
            &mut tape,
            models,
            &refl_binds,
            &data.depths[di],
            &data.maps[mi],
            &z,
            &data.rig,
            cfg,
        )?;
        let (refl_total, mut breakdown) = total_2d_loss(&mut tape, &terms, &cfg.weights)?;

        let z2 = LatentCode::sample(cfg.z_dim, rng);
        let (spec_terms, composite, _) = build_specular_terms(
            &mut tape,
            models,
            &spec_binds,
            &data.depths[di],
            &z2,
            &data.rig,
            cfg,
        )?;
        let weighted_cyc = tape.scale(spec_terms.cyc, cfg.weights.diff_img_cyc)?;
        let spec_total = tape.add(spec_terms.adv, weighted_cyc)?;
        let total = tape.add(refl_total, spec_total)?;
        let total_v = tape.value(total).item() as f64;
        if !total_v.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                iteration: it,
                stage: "joint",
            });
        }
        breakdown
            .terms
            .push(("adv_real".into(), tape.value(spec_terms.adv).item() as f64));
        breakdown.terms.push((
            "cyc_despec".into(),
            tape.value(weighted_cyc).item() as f64,
        ));
        breakdown.total = total_v;

        let grads = tape.backward(total)?;
        // both binding sets reference the same logical nets; apply each once
        let g_binds: Vec<(&str, &Binding)> = vec![
            ("g_norm", &refl_binds.g_norm),
            ("g_diffa", &refl_binds.g_diffa),
            ("e_diffa", &refl_binds.e_diffa),
            ("g_depth", &refl_binds.g_depth),
            ("g_respec", &own_g_respec),
            ("g_despec", &own_g_despec),
        ];
        apply_gradients(models, optim, &tape, &grads, &g_binds, cfg)?;
        drop(tape);

        let d_report =
            reflectance_d_step(models, optim, &data.depths[di], &data.maps[mi], &fakes, cfg)?;
        let d_real_loss = specular_d_step(models, optim, &real_images[ri], &composite, cfg)?;
        if it % cfg.log_every.max(1) == 0 {
            let mut line = loss_line("joint", it, &breakdown, &d_report);
            line["d_losses"]["d_real"] = json!(d_real_loss);
            log.push(line);
        }
    }
    Ok(())
}

/// Generate diffuse images from trained reflectance nets for evaluation.
pub fn generate_diffuse_images(
    models: &Models,
    data: &PreparedReflectance,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    count: usize,
) -> Result<Vec<Tensor<f32>>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let di = rng.random_range(0..data.depths.len());
        let z = LatentCode::sample(cfg.z_dim, rng);
        let mut tape = Tape::<f32>::new();
        let own = frozen_bindings(models, &mut tape);
        let binds = SpecularBindings {
            g_norm: &own.0,
            g_diffa: &own.1,
            g_respec: &own.2,
            g_despec: &own.3,
            d_real: &own.4,
        };
        let (_, _, i_df) =
            build_specular_terms(&mut tape, models, &binds, &data.depths[di], &z, &data.rig, cfg)?;
        out.push(i_df);
    }
    Ok(out)
}

/// Generate composites (diffuse plus learned specular) for evaluation.
pub fn generate_composites(
    models: &Models,
    data: &PreparedReflectance,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    count: usize,
) -> Result<Vec<Tensor<f32>>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let di = rng.random_range(0..data.depths.len());
        let z = LatentCode::sample(cfg.z_dim, rng);
        let mut tape = Tape::<f32>::new();
        let own = frozen_bindings(models, &mut tape);
        let binds = SpecularBindings {
            g_norm: &own.0,
            g_diffa: &own.1,
            g_respec: &own.2,
            g_despec: &own.3,
            d_real: &own.4,
        };
        let (_, composite, _) =
            build_specular_terms(&mut tape, models, &binds, &data.depths[di], &z, &data.rig, cfg)?;
        out.push(composite);
    }
    Ok(out)
}

fn frozen_bindings(models: &Models, tape: &mut Tape<f32>) -> (Binding, Binding, Binding, Binding, Binding) {
    (
        models.g_norm.params.bind(tape, false),
        models.g_diffa.params.bind(tape, false),
        models.g_respec.params.bind(tape, false),
        models.g_despec.params.bind(tape, false),
        models.d_real.params.bind(tape, false),
    )
}
