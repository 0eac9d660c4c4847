use std::collections::BTreeMap;
use std::time::Instant;

use surfmap_deform::{
    loss_cycle, sample_surface, train_parameterization, DeformConfig, DeformModel, TrainConfig,
};
use surfmap_sdf::{vec3, BoxParams, SdfField, Vec3};

fn main() {
    let t0 = Instant::now();
    let target = SdfField::Box(BoxParams::new(Vec3::ZERO, vec3(0.45, 0.4, 0.35)));
    let domain = SdfField::sphere(Vec3::ZERO, 0.5);
    let mut model = DeformModel::new(&DeformConfig::default(), domain, &["box".to_string()], 11);
    let mut targets = BTreeMap::new();
    targets.insert("box".to_string(), target.clone());
    let cfg = TrainConfig {
        epochs: 2000,
        seed: 11,
        ..Default::default()
    };
    let report = train_parameterization(&mut model, &targets, &cfg).unwrap();
    for (i, e) in report.epochs.iter().enumerate() {
        if i % 200 == 0 || i + 1 == report.epochs.len() {
            println!(
                "epoch={i} surf={:.5} eik={:.5} cyc={:.5} smooth={:.5} lap={:.5} total={:.5}",
                e.surface, e.eikonal, e.cycle, e.smooth, e.laplace, e.total
            );
        }
    }
    let samples = sample_surface(&target, "box", 4096, 999);
    let pts: Vec<Vec3> = samples.iter().map(|s| s.p).collect();
    let sdf_vals = model.composed_sdf_batch(&pts, "box").unwrap();
    let mean_abs: f64 = sdf_vals.iter().map(|s| s.abs()).sum::<f64>() / sdf_vals.len() as f64;
    let cyc = loss_cycle(&model, &samples).unwrap();
    let mapped = model.forward_map_batch(&pts, "box").unwrap();
    let dom_abs: f64 = model
        .domain
        .eval_batch(&mapped)
        .iter()
        .map(|s| s.abs())
        .sum::<f64>()
        / pts.len() as f64;
    println!("mean |composed_sdf| on target surface = {mean_abs:.5}");
    println!("mean |F_sdf(forward)| = {dom_abs:.5}");
    println!("mean cycle error = {cyc:.5}");
    println!("elapsed = {:.1?}s", t0.elapsed().as_secs_f64());
}
