// scratch diagnostic for the training-smoke margins (deleted before release)
use ngp::config::RunConfig;
use ngp::metrics::{fid_lite, FeatureExtractor};
use ngp::rng;
use ngp::shading::LightRig;
use ngp::tensor::Tensor;
use ngp::training::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let eval_n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(256);

    let mut cfg = RunConfig::default();
    cfg.seed = 7;
    cfg.data.reflectance_count = 500;
    cfg.data.realistic_count = 500;
    cfg.data.eval_count = eval_n;
    cfg.train.resolution = 32;
    cfg.train.iters_reflectance = iters;
    cfg.train.iters_specular = iters / 2;
    let cfg = cfg.resolve();

    let dir = std::path::Path::new("/tmp/diag_run");
    let _ = std::fs::remove_dir_all(dir);
    let t0 = std::time::Instant::now();
    ngp::commands::gen_data(&cfg, dir).unwrap();
    eprintln!("gen-data: {:.0}s", t0.elapsed().as_secs_f64());
    let corpora = ngp::commands::load_corpora(&cfg, dir).unwrap();

    let eval_dir = dir.join("eval");
    let dm: ngp::datagen::DatasetManifest = ngp::io::read_json(&eval_dir.join("depth_manifest.json")).unwrap();
    let mm: ngp::datagen::DatasetManifest = ngp::io::read_json(&eval_dir.join("maps_manifest.json")).unwrap();
    let eval_depths = ngp::datagen::load_depth_set(&eval_dir, &dm).unwrap();
    let eval_maps = ngp::datagen::load_maps_set(&eval_dir, &mm).unwrap();
    let rig = LightRig::training_default();
    let eval_prepared = prepare_reflectance_data(&eval_depths, &eval_maps, &rig, cfg.profile.k_d).unwrap();
    let target_diffuse = ngp::datagen::diffuse_renders(&eval_maps, &rig, cfg.profile.k_d).unwrap();
    let ex = FeatureExtractor::new(cfg.metrics.feature_dim, cfg.metrics.extractor_seed);
    let n_eval = eval_maps.len();

    let mut rng = rng::seeded(cfg.seed);
    let mut models = Models::init(&cfg.train, &mut rng);
    let mut gen_rng = rng::seeded(900);
    let untrained = generate_diffuse_images(&models, &eval_prepared, &cfg.train, &mut gen_rng, n_eval).unwrap();
    let fid_untrained = fid_lite(&ex, &untrained, &target_diffuse).unwrap();
    let mut nrng = rng::seeded(901);
    let noise: Vec<Tensor<f32>> = (0..n_eval).map(|_| Tensor::from_fn(&[3,32,32], |_| rng::uniform(&mut nrng, 0.0, 1.0) as f32)).collect();
    let fid_noise = fid_lite(&ex, &noise, &target_diffuse).unwrap();
    // split-half baseline of the target itself (estimator noise floor)
    let half_a: Vec<_> = target_diffuse.iter().step_by(2).cloned().collect();
    let half_b: Vec<_> = target_diffuse.iter().skip(1).step_by(2).cloned().collect();
    let fid_floor = fid_lite(&ex, &half_a, &half_b).unwrap();
    eprintln!("n_eval={n_eval} fid_untrained={fid_untrained:.4} fid_noise={fid_noise:.4} split-half floor={fid_floor:.4}");

    let t0 = std::time::Instant::now();
    let mut optim = Optimizers::default();
    let mut log = TrainLog::default();
    train_reflectance_stage(&mut models, &mut optim, &corpora.prepared, &cfg.train, &mut rng, &mut log).unwrap();
    eprintln!("reflectance {} iters: {:.0}s", iters, t0.elapsed().as_secs_f64());
    let ma = log.moving_average("reflectance", 100);
    eprintln!("(a) MA[100]={:.3} MA[end]={:.3}", ma[100.min(ma.len()-1)], ma.last().unwrap());

    let mut gen_rng = rng::seeded(900);
    let trained = generate_diffuse_images(&models, &eval_prepared, &cfg.train, &mut gen_rng, n_eval).unwrap();
    let fid_trained = fid_lite(&ex, &trained, &target_diffuse).unwrap();
    eprintln!("(b) fid_trained={fid_trained:.4} ratio={:.3} (need <0.5) vs noise {fid_noise:.4}", fid_trained/fid_untrained);

    let t0 = std::time::Instant::now();
    let mut slog = TrainLog::default();
    train_specular_stage(&mut models, &mut optim, &corpora.prepared, &corpora.real_images, &cfg.train, &mut rng, &mut slog).unwrap();
    eprintln!("specular: {:.0}s", t0.elapsed().as_secs_f64());
    let mut g1 = rng::seeded(902);
    let comps = generate_composites(&models, &eval_prepared, &cfg.train, &mut g1, n_eval).unwrap();
    let mut g2 = rng::seeded(902);
    let diffs = generate_diffuse_images(&models, &eval_prepared, &cfg.train, &mut g2, n_eval).unwrap();
    let fid_c = fid_lite(&ex, &comps, &corpora.real_images).unwrap();
    let fid_d = fid_lite(&ex, &diffs, &corpora.real_images).unwrap();
    eprintln!("(c) fid_composite={fid_c:.4} fid_diffuse_only={fid_d:.4} (need c<d)");

    // dump sample images for inspection
    let out = std::path::Path::new("/tmp/diag_imgs");
    let _ = std::fs::remove_dir_all(out);
    std::fs::create_dir_all(out).unwrap();
    for i in 0..6 {
        ngp::io::write_png(&out.join(format!("target_{i}.png")), &target_diffuse[i]).unwrap();
        ngp::io::write_png(&out.join(format!("untrained_{i}.png")), &untrained[i]).unwrap();
        ngp::io::write_png(&out.join(format!("trained_{i}.png")), &trained[i]).unwrap();
        ngp::io::write_png(&out.join(format!("composite_{i}.png")), &comps[i]).unwrap();
        ngp::io::write_png(&out.join(format!("real_{i}.png")), &corpora.real_images[i]).unwrap();
    }
    eprintln!("images in /tmp/diag_imgs");
}
