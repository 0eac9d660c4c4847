use std::collections::BTreeMap;
use std::time::Instant;

use surfmap_render::{
    generate_synthetic_dataset, load_dataset, psnr_rgb, render_image, two_phase_train,
    DatasetConfig, PipelineConfig, RenderOptions, SceneSpec,
};

fn main() {
    let t0 = Instant::now();
    let dir = std::env::temp_dir().join("surfmap_pipeline_debug");
    let _ = std::fs::remove_dir_all(&dir);
    let spec = SceneSpec::lambertian_sphere();
    let ds_cfg = DatasetConfig {
        n_views: 9,
        resolution: 64,
        ..Default::default()
    };
    generate_synthetic_dataset(&spec, &ds_cfg, &dir).unwrap();
    let full = load_dataset(&dir).unwrap();
    // Train on the first 8 views, hold out the last.
    let mut train_ds = full.clone();
    let heldout_cam = train_ds.cameras.pop().unwrap();
    let heldout_img = train_ds.images.pop().unwrap();

    let mut datasets = BTreeMap::new();
    datasets.insert("sphere".to_string(), train_ds);

    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(150);
    let samples: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(32);
    let cfg = PipelineConfig {
        phase_a_epochs: 15,
        phase_c_epochs: epochs,
        pixel_batch: 512,
        samples_per_ray: samples,
        weight_threshold: 1e-4,
        seed: 7,
        ..Default::default()
    };
    println!("training: epochs={epochs} samples={samples}");
    let (model, report) = two_phase_train(&datasets, &cfg).unwrap();
    println!("phase A epochs: {}", report.phase_a.len());
    if let Some(d) = &report.domain {
        println!(
            "phase B: iters={} converged={} final={:.4}",
            d.iterations_used, d.converged, d.final_l_sdf
        );
    }
    for (i, e) in report.phase_c.iter().enumerate() {
        if i % 20 == 0 || i + 1 == report.phase_c.len() {
            println!(
                "C epoch={i} rgb={:.5} eik={:.4} cyc={:.5} shd={:.4} total={:.5}",
                e.rgb, e.eikonal, e.cycle, e.shading, e.total
            );
        }
    }
    let train_time = t0.elapsed().as_secs_f64();
    println!("train time: {train_time:.1}s");

    let opts = RenderOptions {
        samples_per_ray: 64,
        background: model.background,
        ..Default::default()
    };
    let out = render_image(&model, &heldout_cam, "sphere", &opts).unwrap();
    let p = psnr_rgb(&out.rgb, &heldout_img);
    println!("held-out PSNR: {p:.2} dB");
    let train_out = render_image(&model, &datasets["sphere"].cameras[0], "sphere", &opts).unwrap();
    let tp = psnr_rgb(&train_out.rgb, &datasets["sphere"].images[0]);
    println!("train-view PSNR: {tp:.2} dB");
    out.to_image()
        .save(std::env::temp_dir().join("surfmap_heldout.png"))
        .unwrap();
    train_out
        .to_image()
        .save(std::env::temp_dir().join("surfmap_train0.png"))
        .unwrap();
    println!("total time: {:.1}s", t0.elapsed().as_secs_f64());
}
