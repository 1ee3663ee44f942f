//! Image-formation variants behind a common trait, registered by name and
//! selected at runtime. The paper-facing variants (`ngp`, `ngp-bp`,
//! `ngp-plus`) and the ablation variants (`ngp-wo-gnorm`, `ngp-wo-gdiffa`,
//! `ngp-wo-grespec`) all share the same generated-map plumbing and differ in
//! which maps they consume and how the final image is composited.

use std::collections::BTreeMap;

use crate::shading::{
    blend, render_blinn_phong, render_diffuse, shade_blinn_phong, MapVars,
};
use crate::tensor::{Tape, Tensor};

use super::{FormationContext, FormedImage, IntermediateMaps, PipelineError, Result};

/// One way of turning generated maps into a final image.
pub trait ImageFormation: Send + Sync {
    /// Registry key (CLI `--variant`).
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn form(&self, ctx: &FormationContext<'_>) -> Result<FormedImage>;
}

/// Name-keyed registry of formation strategies.
pub struct VariantRegistry {
    variants: BTreeMap<&'static str, Box<dyn ImageFormation>>,
}

impl VariantRegistry {
    pub fn empty() -> Self {
        Self {
            variants: BTreeMap::new(),
        }
    }

    /// All built-in variants.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Ngp));
        r.register(Box::new(NgpBp));
        r.register(Box::new(NgpPlus));
        r.register(Box::new(NgpWithoutGNorm));
        r.register(Box::new(NgpWithoutGDiffa));
        r.register(Box::new(NgpWithoutGRespec));
        r
    }

    pub fn register(&mut self, v: Box<dyn ImageFormation>) {
        self.variants.insert(v.name(), v);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ImageFormation> {
        self.variants
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| PipelineError::UnknownVariant {
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.variants.keys().copied().collect()
    }
}

/// Which normal/albedo sources feed the map generation.
struct MapChoices {
    coarse_normal: bool,
    white_albedo: bool,
}

/// Run the learned (or substituted) map generation common to every variant.
/// Returns the tape, the map vars for rendering, and the materialized maps.
fn generate_maps(
    ctx: &FormationContext<'_>,
    choices: &MapChoices,
) -> Result<(Tape<f32>, MapVars, IntermediateMaps)> {
    let models = ctx.models;
    let mut tape = Tape::<f32>::new();
    let b_norm = models.g_norm.params.bind(&mut tape, false);
    let b_diffa = models.g_diffa.params.bind(&mut tape, false);

    let scale = crate::training::DEPTH_INPUT_SCALE as f32;
    let d_in = tape.constant(ctx.depth.values.map(|v| v * scale));
    let mask = tape.constant(ctx.mask.values.clone());
    let noc = tape.constant(ctx.noc.values.clone());

    let normal = if choices.coarse_normal {
        tape.constant(ctx.coarse_normal.values.clone())
    } else {
        models
            .g_norm
            .forward(&mut tape, &b_norm, d_in, None, Some(mask))?
    };

    let albedo = if choices.white_albedo {
        let shape = tape.shape(normal).to_vec();
        let white = tape.constant(Tensor::full(&shape, 1.0f32));
        let m3 = tape.broadcast(mask, &shape)?;
        tape.mul(white, m3)?
    } else {
        let z = tape.constant(ctx.z_da.tensor());
        let input = tape.concat(&[noc, normal], 0)?;
        models
            .g_diffa
            .forward(&mut tape, &b_diffa, input, Some(z), Some(mask))?
    };

    let spec_albedo = tape.constant(crate::shading::constant_specular_albedo(ctx.depth));
    let roughness = tape.constant(crate::shading::constant_roughness(ctx.depth));

    let vars = MapVars {
        normal,
        diffuse_albedo: albedo,
        specular_albedo: spec_albedo,
        roughness,
        mask,
    };
    let maps = IntermediateMaps {
        depth: ctx.depth.values.clone(),
        mask: ctx.mask.values.clone(),
        noc: ctx.noc.values.clone(),
        coarse_normal: ctx.coarse_normal.values.clone(),
        normal: tape.value(normal).clone(),
        albedo: tape.value(albedo).clone(),
        specular_albedo: tape.value(spec_albedo).clone(),
        roughness: tape.value(roughness).clone(),
        diffuse: None,
        respec: None,
    };
    Ok((tape, vars, maps))
}

/// Diffuse image plus the learned specular residual, composited additively.
fn ngp_composite(
    ctx: &FormationContext<'_>,
    choices: &MapChoices,
    with_respec: bool,
) -> Result<FormedImage> {
    let (mut tape, vars, mut maps) = generate_maps(ctx, choices)?;
    let i_df = render_diffuse(&mut tape, &vars, ctx.base_rig, ctx.profile.k_d)?;
    maps.diffuse = Some(tape.value(i_df).clone());

    let final_var = if with_respec {
        let b_respec = ctx.models.g_respec.params.bind(&mut tape, false);
        let input = tape.concat(&[vars.normal, i_df], 0)?;
        let respec = ctx
            .models
            .g_respec
            .forward(&mut tape, &b_respec, input, None, Some(vars.mask))?;
        maps.respec = Some(tape.value(respec).clone());
        blend(&mut tape, i_df, respec)?
    } else {
        i_df
    };
    Ok(FormedImage {
        final_image: tape.value(final_var).clone(),
        maps,
    })
}

/// Default option: diffuse rendering under the base lights blended with the
/// learned realistic specular map (no analytic specular term).
struct Ngp;

impl ImageFormation for Ngp {
    fn name(&self) -> &'static str {
        "ngp"
    }
    fn describe(&self) -> &'static str {
        "diffuse render under base lights blended with the learned specular map"
    }
    fn form(&self, ctx: &FormationContext<'_>) -> Result<FormedImage> {
        ngp_composite(
            ctx,
            &MapChoices {
                coarse_normal: false,
                white_albedo: false,
            },
            true,
        )
    }
}

/// Depleted option: the full analytic Blinn-Phong renderer under base plus
/// extra lights, without the learned specular map.
struct NgpBp;

impl ImageFormation for NgpBp {
    fn name(&self) -> &'static str {
        "ngp-bp"
    }
    fn describe(&self) -> &'static str {
        "full Blinn-Phong under base plus extra lights, no learned specular"
    }
    fn form(&self, ctx: &FormationContext<'_>) -> Result<FormedImage> {
        let choices = MapChoices {
            coarse_normal: false,
            white_albedo: false,
        };
        let (mut tape, vars, mut maps) = generate_maps(ctx, &choices)?;
        let mut rig = ctx.base_rig.clone();
        rig.lights.extend(ctx.extra_rig.lights.iter().cloned());
        let img = render_blinn_phong(
            &mut tape,
            &vars,
            &rig,
            ctx.view,
            ctx.profile.k_d,
            ctx.profile.k_s,
        )?;
        maps.diffuse = Some(tape.value(img).clone());
        Ok(FormedImage {
            final_image: tape.value(img).clone(),
            maps,
        })
    }
}

/// Versatile option: the NGP image with the extra lights' analytic diffuse
/// and specular contributions layered on top. With no extra lights this is
/// the NGP image unchanged.
struct NgpPlus;

impl ImageFormation for NgpPlus {
    fn name(&self) -> &'static str {
        "ngp-plus"
    }
    fn describe(&self) -> &'static str {
        "ngp output plus analytic contributions of the extra lights"
    }
    fn form(&self, ctx: &FormationContext<'_>) -> Result<FormedImage> {
        let base = ngp_composite(
            ctx,
            &MapChoices {
                coarse_normal: false,
                white_albedo: false,
            },
            true,
        )?;
        if ctx.extra_rig.lights.is_empty() {
            return Ok(base);
        }
        let choices = MapChoices {
            coarse_normal: false,
            white_albedo: false,
        };
        let (mut tape, vars, _) = generate_maps(ctx, &choices)?;
        let extra = shade_blinn_phong(
            &mut tape,
            &vars,
            ctx.extra_rig,
            ctx.view,
            ctx.profile.k_d,
            ctx.profile.k_s,
        )?;
        let base_var = tape.constant(base.final_image.clone());
        let layered = blend(&mut tape, base_var, extra)?;
        Ok(FormedImage {
            final_image: tape.value(layered).clone(),
            maps: base.maps,
        })
    }
}

/// Ablation: the coarse normal map derived from the input shape replaces the
/// learned normal generator everywhere.
struct NgpWithoutGNorm;

impl ImageFormation for NgpWithoutGNorm {
    fn name(&self) -> &'static str {
        "ngp-wo-gnorm"
    }
    fn describe(&self) -> &'static str {
        "ngp with coarse depth-derived normals instead of the learned generator"
    }
    fn form(&self, ctx: &FormationContext<'_>) -> Result<FormedImage> {
        ngp_composite(
            ctx,
            &MapChoices {
                coarse_normal: true,
                white_albedo: false,
            },
            true,
        )
    }
}

/// Ablation: a white diffuse albedo map replaces the learned generator.
struct NgpWithoutGDiffa;

impl ImageFormation for NgpWithoutGDiffa {
    fn name(&self) -> &'static str {
        "ngp-wo-gdiffa"
    }
    fn describe(&self) -> &'static str {
        "ngp with a white diffuse albedo map instead of the learned generator"
    }
    fn form(&self, ctx: &FormationContext<'_>) -> Result<FormedImage> {
        ngp_composite(
            ctx,
            &MapChoices {
                coarse_normal: false,
                white_albedo: true,
            },
            true,
        )
    }
}

/// Ablation: no blending with the learned specular map.
struct NgpWithoutGRespec;

impl ImageFormation for NgpWithoutGRespec {
    fn name(&self) -> &'static str {
        "ngp-wo-grespec"
    }
    fn describe(&self) -> &'static str {
        "ngp without blending the learned specular map"
    }
    fn form(&self, ctx: &FormationContext<'_>) -> Result<FormedImage> {
        ngp_composite(
            ctx,
            &MapChoices {
                coarse_normal: false,
                white_albedo: false,
            },
            false,
        )
    }
}
