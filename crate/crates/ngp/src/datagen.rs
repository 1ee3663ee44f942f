//! Synthesizes the unpaired training corpora: a "real" depth set, a "real"
//! reflectance-map set (exact mesh normals with fine procedural detail plus
//! part-aware painted diffuse albedo), and a "realistic image" set of full
//! Blinn-Phong renders with baked extra-light speculars and mild grading.
//!
//! The depth pool, the maps pool and the image pool draw shapes from
//! disjoint seed streams, so no cross-set correspondence exists by
//! construction; manifests record the shape seeds so the disjointness can be
//! checked after the fact.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    depth_mask, noc_from_depth, rasterize_gbuffer, sample_camera, sample_coarse_shape_parts,
    Camera, CameraSpec, DepthMap, Mask, NocMap, ShapeFamilyConfig, Vec3, ViewDistribution,
};
use crate::io::{read_json, write_json, write_png};
use crate::rng::{derive, normal_f64, uniform};
use crate::shading::{
    eval_blinn_phong, eval_diffuse, constant_roughness, constant_specular_albedo,
    DirectionalLight, LightRig, ReflectanceMaps, ReflectanceProfile,
};
use crate::tensor::{read_tensor_f32, write_tensor_f32, Tensor};

#[derive(Debug)]
pub enum DatagenError {
    Geometry(crate::geometry::GeometryError),
    Shading(crate::shading::ShadingError),
    Io(crate::io::IoError),
    TensorIo(crate::tensor::ser::TensorIoError),
    Manifest { detail: String },
}

impl std::fmt::Display for DatagenError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Geometry(e) => write!(f, "{e}"),
            Self::Shading(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "{e}"),
            Self::TensorIo(e) => write!(f, "{e}"),
            Self::Manifest { detail } => write!(f, "manifest: {detail}"),
        }
    }
}

impl std::error::Error for DatagenError {}

impl From<crate::geometry::GeometryError> for DatagenError {
    fn from(e: crate::geometry::GeometryError) -> Self {
        Self::Geometry(e)
    }
}
impl From<crate::shading::ShadingError> for DatagenError {
    fn from(e: crate::shading::ShadingError) -> Self {
        Self::Shading(e)
    }
}
impl From<crate::io::IoError> for DatagenError {
    fn from(e: crate::io::IoError) -> Self {
        Self::Io(e)
    }
}
impl From<crate::tensor::ser::TensorIoError> for DatagenError {
    fn from(e: crate::tensor::ser::TensorIoError) -> Self {
        Self::TensorIo(e)
    }
}
impl From<std::io::Error> for DatagenError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(crate::io::IoError::Io(e))
    }
}

pub type Result<T> = std::result::Result<T, DatagenError>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DataGenConfig {
    pub resolution: usize,
    pub shape: ShapeFamilyConfig,
    pub view: ViewDistribution,
    pub profile: ReflectanceProfile,
    /// Amplitude of the fine procedural normal detail added to exact mesh
    /// normals in the maps pool.
    pub bump_amplitude: f64,
    /// Extra jittered lights baked into the realistic image set.
    pub extra_lights: usize,
    /// Write preview PNGs next to the raw tensors.
    pub previews: bool,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            shape: ShapeFamilyConfig::default(),
            view: ViewDistribution::default(),
            profile: ReflectanceProfile::CAR,
            bump_amplitude: 0.10,
            extra_lights: 2,
            previews: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub shape_seed: u64,
    /// Role -> file stem relative to the dataset root.
    pub files: std::collections::BTreeMap<String, String>,
}

/// On-disk dataset index: every referenced file must exist and counts must
/// match the entry list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: String,
    pub seed: u64,
    pub resolution: usize,
    pub count: usize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn path(root: &Path) -> PathBuf {
        root.join("manifest.json")
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        write_json(&Self::path(root), self)?;
        Ok(())
    }

    pub fn load(root: &Path) -> Result<DatasetManifest> {
        Ok(read_json(&Self::path(root))?)
    }

    pub fn validate(&self, root: &Path) -> Result<()> {
        if self.count != self.entries.len() {
            return Err(DatagenError::Manifest {
                detail: format!("count {} != entries {}", self.count, self.entries.len()),
            });
        }
        for e in &self.entries {
            for stem in e.files.values() {
                let bin = root.join(format!("{stem}.bin"));
                if !bin.exists() {
                    return Err(DatagenError::Manifest {
                        detail: format!("missing file {}", bin.display()),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn shape_seeds(&self) -> BTreeSet<u64> {
        self.entries.iter().map(|e| e.shape_seed).collect()
    }
}

/// Check the unpairedness invariant between two manifests.
pub fn assert_unpaired(a: &DatasetManifest, b: &DatasetManifest) -> Result<()> {
    let shared: Vec<u64> = a.shape_seeds().intersection(&b.shape_seeds()).copied().collect();
    if !shared.is_empty() {
        return Err(DatagenError::Manifest {
            detail: format!("shape seeds shared across sets: {shared:?}"),
        });
    }
    Ok(())
}

fn sample_shape_and_camera(
    shape_seed: u64,
    cfg: &DataGenConfig,
) -> Result<(crate::geometry::TriangleMesh, Vec<(&'static str, std::ops::Range<usize>)>, Camera)> {
    let mut rng = derive(shape_seed, "shape-sample", 0);
    let z: Vec<f64> = (0..cfg.shape.latent_dim).map(|_| normal_f64(&mut rng)).collect();
    let (mesh, parts) = sample_coarse_shape_parts(&z, &cfg.shape)?;
    let cam = sample_camera(&mut rng, &cfg.view, cfg.resolution, cfg.resolution)?;
    Ok((mesh, parts, cam))
}

/// Deterministic small hash noise in [0,1).
fn hash01(a: u64, b: u64) -> f64 {
    let mut h = a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 31;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 29;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Exact per-pixel mesh normals (view frame) with fine procedural detail,
/// plus the part index buffer for painting.
fn detailed_normals(
    gb: &crate::geometry::GBuffer,
    mesh: &crate::geometry::TriangleMesh,
    parts: &[(&'static str, std::ops::Range<usize>)],
    cam: &Camera,
    noc: &NocMap,
    bump: f64,
) -> (Tensor<f32>, Vec<usize>) {
    let (w, h) = (gb.width, gb.height);
    let mut out = vec![0.0f32; 3 * h * w];
    let mut part_of = vec![usize::MAX; h * w];
    let noc_d = noc.values.data();
    for i in 0..h * w {
        let ti = gb.tri_index[i];
        if ti == usize::MAX {
            continue;
        }
        part_of[i] = parts
            .iter()
            .position(|(_, r)| r.contains(&ti))
            .unwrap_or(0);
        let n_obj = mesh.triangle_normal(ti);
        let mut n = cam.dir_to_view(n_obj);
        if n.z < 0.0 {
            n = -n;
        }
        // fine detail anchored to object-space position so it stays put
        // under camera changes
        let p = Vec3 {
            x: noc_d[i] as f64 * 2.0 - 1.0,
            y: noc_d[h * w + i] as f64 * 2.0 - 1.0,
            z: noc_d[2 * h * w + i] as f64 * 2.0 - 1.0,
        };
        let dx = bump * (34.0 * p.x + 21.0 * p.z).sin();
        let dy = bump * (29.0 * p.y + 17.0 * p.x).sin();
        let n = Vec3 {
            x: n.x + dx,
            y: n.y + dy,
            z: n.z,
        }
        .normalized();
        out[i] = n.x as f32;
        out[h * w + i] = n.y as f32;
        out[2 * h * w + i] = n.z as f32;
    }
    (
        Tensor::new(vec![3, h, w], out).expect("normal shape"),
        part_of,
    )
}

/// Part-flat palette colors with stripe and hash-noise variation.
fn painted_albedo(
    part_of: &[usize],
    noc: &NocMap,
    mask: &Mask,
    sample_seed: u64,
    h: usize,
    w: usize,
) -> Tensor<f32> {
    let mut rng = derive(sample_seed, "albedo-paint", 0);
    let mut palette = Vec::new();
    for _ in 0..4 {
        palette.push([
            uniform(&mut rng, 0.15, 0.9),
            uniform(&mut rng, 0.15, 0.9),
            uniform(&mut rng, 0.15, 0.9),
        ]);
    }
    let stripes = rng.random::<f64>() < 0.5;
    let stripe_freq = uniform(&mut rng, 6.0, 18.0);
    let stripe_axis = (rng.random::<u32>() % 3) as usize;
    let noise_amp = uniform(&mut rng, 0.0, 0.06);

    let noc_d = noc.values.data();
    let mask_d = mask.values.data();
    let mut out = vec![0.0f32; 3 * h * w];
    for i in 0..h * w {
        if mask_d[i] == 0.0 {
            continue;
        }
        let part = part_of[i].min(palette.len() - 1);
        let mut color = palette[part];
        if stripes {
            let t = noc_d[stripe_axis * h * w + i] as f64;
            let s = 0.5 + 0.5 * (stripe_freq * t * std::f64::consts::PI).sin();
            if s > 0.5 {
                let alt = palette[(part + 1) % palette.len()];
                color = [
                    0.5 * (color[0] + alt[0]),
                    0.5 * (color[1] + alt[1]),
                    0.5 * (color[2] + alt[2]),
                ];
            }
        }
        for (c, col) in color.iter().enumerate() {
            let n = noise_amp * (hash01(sample_seed ^ c as u64, i as u64) - 0.5);
            out[c * h * w + i] = (col + n).clamp(0.02, 0.98) as f32;
        }
    }
    Tensor::new(vec![3, h, w], out).expect("albedo shape")
}

struct RenderedSample {
    depth: DepthMap,
    mask: Mask,
    normal: Tensor<f32>,
    albedo: Tensor<f32>,
    camera: Camera,
}

fn render_sample(shape_seed: u64, cfg: &DataGenConfig) -> Result<RenderedSample> {
    let (mesh, parts, camera) = sample_shape_and_camera(shape_seed, cfg)?;
    let gb = rasterize_gbuffer(&mesh, &camera)?;
    let depth = gb.depth_map();
    let mask = depth_mask(&depth);
    let noc = noc_from_depth(&depth, &camera)?;
    let (normal, part_of) = detailed_normals(&gb, &mesh, &parts, &camera, &noc, cfg.bump_amplitude);
    let albedo = painted_albedo(
        &part_of,
        &noc,
        &mask,
        shape_seed,
        cfg.resolution,
        cfg.resolution,
    );
    Ok(RenderedSample {
        depth,
        mask,
        normal,
        albedo,
        camera,
    })
}

/// Emit the unpaired reflectance corpus: `n` depth samples (pool A) and `n`
/// (albedo, normal, mask) map sets (pool B) under `root`.
pub fn make_reflectance_dataset(
    root: &Path,
    n: usize,
    seed: u64,
    cfg: &DataGenConfig,
) -> Result<(DatasetManifest, DatasetManifest)> {
    assert!(n >= 1, "need at least one sample");
    let depth_dir = root.join("depth");
    let maps_dir = root.join("maps");
    fs::create_dir_all(&depth_dir)?;
    fs::create_dir_all(&maps_dir)?;

    let mut depth_entries = Vec::new();
    for i in 0..n {
        let shape_seed = derive(seed, "pool-depth", i as u64).random::<u64>();
        let s = render_sample(shape_seed, cfg)?;
        let stem = format!("depth/{i:06}");
        write_tensor_f32(&root.join(&stem), &s.depth.values)?;
        write_json(
            &root.join(format!("{stem}.cam.json")),
            &CameraSpec::from(&s.camera),
        )?;
        let mut files = std::collections::BTreeMap::new();
        files.insert("depth".to_string(), stem);
        depth_entries.push(ManifestEntry {
            id: i,
            shape_seed,
            files,
        });
    }
    let depth_manifest = DatasetManifest {
        kind: "depth".into(),
        seed,
        resolution: cfg.resolution,
        count: n,
        entries: depth_entries,
    };
    write_json(&root.join("depth_manifest.json"), &depth_manifest)?;

    let mut maps_entries = Vec::new();
    for i in 0..n {
        let shape_seed = derive(seed, "pool-maps", i as u64).random::<u64>();
        let s = render_sample(shape_seed, cfg)?;
        let albedo_stem = format!("maps/{i:06}.albedo");
        let normal_stem = format!("maps/{i:06}.normal");
        let mask_stem = format!("maps/{i:06}.mask");
        write_tensor_f32(&root.join(&albedo_stem), &s.albedo)?;
        write_tensor_f32(&root.join(&normal_stem), &s.normal)?;
        write_tensor_f32(&root.join(&mask_stem), &s.mask.values)?;
        write_json(
            &root.join(format!("maps/{i:06}.cam.json")),
            &CameraSpec::from(&s.camera),
        )?;
        if cfg.previews {
            write_png(&root.join(format!("maps/{i:06}.albedo.png")), &s.albedo)?;
        }
        let mut files = std::collections::BTreeMap::new();
        files.insert("albedo".to_string(), albedo_stem);
        files.insert("normal".to_string(), normal_stem);
        files.insert("mask".to_string(), mask_stem);
        maps_entries.push(ManifestEntry {
            id: i,
            shape_seed,
            files,
        });
    }
    let maps_manifest = DatasetManifest {
        kind: "maps".into(),
        seed,
        resolution: cfg.resolution,
        count: n,
        entries: maps_entries,
    };
    write_json(&root.join("maps_manifest.json"), &maps_manifest)?;

    assert_unpaired(&depth_manifest, &maps_manifest)?;
    Ok((depth_manifest, maps_manifest))
}

/// Bake one realistic image: exact maps, full Blinn-Phong under the training
/// rig plus jittered extra lights, then a brightening grade. Pointwise at or
/// above the plain diffuse render by construction.
fn bake_realistic(s: &RenderedSample, shape_seed: u64, cfg: &DataGenConfig) -> Result<Tensor<f32>> {
    let mut rng = derive(shape_seed, "real-bake", 1);
    let mut rig = LightRig::training_default();
    for _ in 0..cfg.extra_lights {
        let az = uniform(&mut rng, 0.0, 360.0);
        let el = uniform(&mut rng, 25.0, 75.0);
        let intensity = uniform(&mut rng, 0.3, 0.8);
        rig.lights
            .push(DirectionalLight::from_angles(az, el, intensity).map_err(DatagenError::Shading)?);
    }
    let maps = ReflectanceMaps {
        normal: s.normal.clone(),
        diffuse_albedo: s.albedo.clone(),
        specular_albedo: constant_specular_albedo(&s.depth),
        roughness: constant_roughness(&s.depth),
        mask: s.mask.values.clone(),
    };
    let boosted = ReflectanceProfile {
        k_d: cfg.profile.k_d,
        k_s: cfg.profile.k_s * 1.3,
    };
    let img = eval_blinn_phong(&maps, &rig, [0.0, 0.0, 1.0], boosted)?;
    // monotone grade: gamma <= 1 and gain >= 1 never darken a pixel
    let gamma = uniform(&mut rng, 0.85, 1.0) as f32;
    let gains = [
        uniform(&mut rng, 1.0, 1.1) as f32,
        uniform(&mut rng, 1.0, 1.1) as f32,
        uniform(&mut rng, 1.0, 1.1) as f32,
    ];
    let (h, w) = (cfg.resolution, cfg.resolution);
    let d = img.data();
    let mut out = vec![0.0f32; 3 * h * w];
    for c in 0..3 {
        for i in 0..h * w {
            out[c * h * w + i] = (d[c * h * w + i].powf(gamma) * gains[c]).min(1.0);
        }
    }
    Ok(Tensor::new(vec![3, h, w], out).expect("image shape"))
}

/// Emit the "realistic image" corpus (pool C), disjoint from both
/// reflectance pools.
pub fn make_realistic_image_set(
    root: &Path,
    n: usize,
    seed: u64,
    cfg: &DataGenConfig,
) -> Result<DatasetManifest> {
    assert!(n >= 1, "need at least one sample");
    let dir = root.join("real");
    fs::create_dir_all(&dir)?;
    let mut entries = Vec::new();
    for i in 0..n {
        let shape_seed = derive(seed, "pool-real", i as u64).random::<u64>();
        let s = render_sample(shape_seed, cfg)?;
        let img = bake_realistic(&s, shape_seed, cfg)?;
        let stem = format!("real/{i:06}");
        write_tensor_f32(&root.join(&stem), &img)?;
        if cfg.previews {
            write_png(&root.join(format!("{stem}.png")), &img)?;
        }
        let mut files = std::collections::BTreeMap::new();
        files.insert("image".to_string(), stem);
        entries.push(ManifestEntry {
            id: i,
            shape_seed,
            files,
        });
    }
    let manifest = DatasetManifest {
        kind: "real".into(),
        seed,
        resolution: cfg.resolution,
        count: n,
        entries,
    };
    write_json(&root.join("real_manifest.json"), &manifest)?;
    Ok(manifest)
}

/// One loaded depth-pool sample with its derived maps.
pub struct DepthSample {
    pub depth: DepthMap,
    pub mask: Mask,
    pub noc: NocMap,
    pub camera: Camera,
}

/// One loaded maps-pool sample.
pub struct MapsSample {
    pub albedo: Tensor<f32>,
    pub normal: Tensor<f32>,
    pub mask: Mask,
    pub camera: Camera,
}

pub fn load_depth_set(root: &Path, manifest: &DatasetManifest) -> Result<Vec<DepthSample>> {
    manifest.validate(root)?;
    let mut out = Vec::with_capacity(manifest.count);
    for e in &manifest.entries {
        let stem = &e.files["depth"];
        let depth = DepthMap {
            values: read_tensor_f32(&root.join(stem))?,
        };
        let spec: CameraSpec = read_json(&root.join(format!("{stem}.cam.json")))?;
        let camera = Camera::from(&spec);
        let mask = depth_mask(&depth);
        let noc = noc_from_depth(&depth, &camera)?;
        out.push(DepthSample {
            depth,
            mask,
            noc,
            camera,
        });
    }
    Ok(out)
}

pub fn load_maps_set(root: &Path, manifest: &DatasetManifest) -> Result<Vec<MapsSample>> {
    manifest.validate(root)?;
    let mut out = Vec::with_capacity(manifest.count);
    for e in &manifest.entries {
        let albedo = read_tensor_f32(&root.join(&e.files["albedo"]))?;
        let normal = read_tensor_f32(&root.join(&e.files["normal"]))?;
        let mask = Mask {
            values: read_tensor_f32(&root.join(&e.files["mask"]))?,
        };
        let spec: CameraSpec =
            read_json(&root.join(format!("{}.cam.json", e.files["normal"].trim_end_matches(".normal"))))?;
        out.push(MapsSample {
            albedo,
            normal,
            mask,
            camera: Camera::from(&spec),
        });
    }
    Ok(out)
}

pub fn load_image_set(root: &Path, manifest: &DatasetManifest) -> Result<Vec<Tensor<f32>>> {
    manifest.validate(root)?;
    manifest
        .entries
        .iter()
        .map(|e| Ok(read_tensor_f32(&root.join(&e.files["image"]))?))
        .collect()
}

/// Diffuse renders of loaded map samples under a rig (used as the "real
/// diffuse image" side of training and as evaluation targets).
pub fn diffuse_renders(
    samples: &[MapsSample],
    rig: &LightRig,
    k_d: f64,
) -> Result<Vec<Tensor<f32>>> {
    samples
        .iter()
        .map(|s| {
            let maps = ReflectanceMaps {
                normal: s.normal.clone(),
                diffuse_albedo: s.albedo.clone(),
                specular_albedo: Tensor::zeros(s.albedo.shape()),
                roughness: Tensor::zeros(s.mask.values.shape()),
                mask: s.mask.values.clone(),
            };
            Ok(eval_diffuse(&maps, rig, k_d)?)
        })
        .collect()
}

#[cfg(test)]
mod tests;
