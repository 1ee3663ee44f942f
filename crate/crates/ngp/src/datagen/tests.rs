use super::*;
use crate::metrics::{fid_lite, FeatureExtractor, EXTRACTOR_SEED, FEATURE_DIM};

fn small_cfg() -> DataGenConfig {
    DataGenConfig {
        resolution: 32,
        ..Default::default()
    }
}

#[test]
fn reflectance_dataset_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg();
    let (dm, mm) = make_reflectance_dataset(dir.path(), 6, 123, &cfg).unwrap();
    dm.validate(dir.path()).unwrap();
    mm.validate(dir.path()).unwrap();
    assert_unpaired(&dm, &mm).unwrap();

    let maps = load_maps_set(dir.path(), &mm).unwrap();
    let hw = 32 * 32;
    for s in &maps {
        // unit foreground normals within 1e-4
        let n = s.normal.data();
        let m = s.mask.values.data();
        let mut fg = 0;
        for i in 0..hw {
            if m[i] > 0.0 {
                fg += 1;
                let len: f32 = (0..3).map(|c| n[c * hw + i] * n[c * hw + i]).sum::<f32>().sqrt();
                assert!((len - 1.0).abs() < 1e-4, "normal norm {len}");
            }
        }
        assert!(fg > 20, "foreground too small: {fg}");
        // albedo range
        assert!(s.albedo.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    // diffuse renders under the training rig are valid images
    let rig = crate::shading::LightRig::training_default();
    let renders = diffuse_renders(&maps, &rig, 0.6).unwrap();
    for img in &renders {
        assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn depth_set_loads_with_derived_maps() {
    let dir = tempfile::tempdir().unwrap();
    let (dm, _) = make_reflectance_dataset(dir.path(), 4, 5, &small_cfg()).unwrap();
    let depths = load_depth_set(dir.path(), &dm).unwrap();
    for s in &depths {
        assert!(s.mask.coverage() > 0.02);
        // noc foreground in [0,1]
        let noc = s.noc.values.data();
        assert!(noc.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // mask(noc) == mask(depth)
        let hw = 32 * 32;
        for i in 0..hw {
            let noc_on = (0..3).any(|c| noc[c * hw + i] != 0.0);
            assert_eq!(noc_on, s.mask.values.data()[i] > 0.0);
        }
    }
}

#[test]
fn realistic_images_outshine_diffuse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg();
    let manifest = make_realistic_image_set(dir.path(), 5, 77, &cfg).unwrap();
    manifest.validate(dir.path()).unwrap();
    let images = load_image_set(dir.path(), &manifest).unwrap();

    for (e, img) in manifest.entries.iter().zip(&images) {
        // rebuild the plain diffuse render of the same sample
        let s = render_sample(e.shape_seed, &cfg).unwrap();
        let maps = crate::shading::ReflectanceMaps {
            normal: s.normal.clone(),
            diffuse_albedo: s.albedo.clone(),
            specular_albedo: crate::tensor::Tensor::zeros(s.albedo.shape()),
            roughness: crate::tensor::Tensor::zeros(s.mask.values.shape()),
            mask: s.mask.values.clone(),
        };
        let rig = crate::shading::LightRig::training_default();
        let diffuse = crate::shading::eval_diffuse(&maps, &rig, cfg.profile.k_d).unwrap();
        let max_real = img.data().iter().cloned().fold(0.0f32, f32::max);
        let max_diff = diffuse.data().iter().cloned().fold(0.0f32, f32::max);
        assert!(
            max_real >= max_diff,
            "baked speculars should not darken: {max_real} < {max_diff}"
        );
    }
}

#[test]
fn realistic_set_statistically_distinct_from_diffuse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg();
    let n = 24;
    let real = make_realistic_image_set(dir.path(), n, 99, &cfg).unwrap();
    let real_imgs = load_image_set(dir.path(), &real).unwrap();

    let (_, mm) = make_reflectance_dataset(dir.path(), n, 101, &cfg).unwrap();
    let maps = load_maps_set(dir.path(), &mm).unwrap();
    let rig = crate::shading::LightRig::training_default();
    let diffuse = diffuse_renders(&maps, &rig, cfg.profile.k_d).unwrap();

    let ex = FeatureExtractor::new(FEATURE_DIM, EXTRACTOR_SEED);
    let split_a: Vec<_> = diffuse.iter().step_by(2).cloned().collect();
    let split_b: Vec<_> = diffuse.iter().skip(1).step_by(2).cloned().collect();
    let within = fid_lite(&ex, &split_a, &split_b).unwrap();
    let across = fid_lite(&ex, &real_imgs, &diffuse).unwrap();
    assert!(
        across > within,
        "realistic-vs-diffuse {across} should exceed diffuse split noise {within}"
    );
}

#[test]
fn fixed_seed_reproduces_manifests() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let cfg = small_cfg();
    let (a1, b1) = make_reflectance_dataset(d1.path(), 3, 9, &cfg).unwrap();
    let (a2, b2) = make_reflectance_dataset(d2.path(), 3, 9, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a1).unwrap(), serde_json::to_string(&a2).unwrap());
    assert_eq!(serde_json::to_string(&b1).unwrap(), serde_json::to_string(&b2).unwrap());
    // payloads identical too
    for e in &a1.entries {
        let stem = &e.files["depth"];
        let t1 = crate::tensor::read_tensor_f32(&d1.path().join(stem)).unwrap();
        let t2 = crate::tensor::read_tensor_f32(&d2.path().join(stem)).unwrap();
        assert!(t1.bit_eq(&t2));
    }
}
