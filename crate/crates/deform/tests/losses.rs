//! Closed-form checks of every parameterization loss.

use std::collections::BTreeMap;

use surfmap_deform::{
    loss_cycle, loss_eikonal, loss_laplace, loss_smooth, sample_neighbors, DeformConfig,
    DeformModel, SurfaceSample,
};
use surfmap_nn::PosEncConfig;
use surfmap_sdf::{vec3, BoxParams, SdfField, Vec3};

fn toy_cfg() -> DeformConfig {
    DeformConfig {
        posenc: PosEncConfig::new(4),
        latent_dim: 8,
        depth: 3,
        width: 16,
    }
}

fn zero_model(domain: SdfField) -> DeformModel {
    DeformModel::new(&toy_cfg(), domain, &["obj".to_string()], 3)
}

fn surface_samples(pts: &[Vec3]) -> Vec<SurfaceSample> {
    pts.iter()
        .map(|&p| SurfaceSample {
            p,
            weight: 1.0,
            normal: vec3(0.0, 0.0, 1.0),
            object: "obj".to_string(),
        })
        .collect()
}

/// Make F_def emit a constant displacement `t` by editing the last layer.
fn set_constant_displacement(model: &mut DeformModel, forward: Vec3, inverse: Vec3) {
    model.f_def.zero_last_layer();
    model.f_def.layers.last_mut().unwrap().b.data = forward.to_array().to_vec();
    model.f_inv.zero_last_layer();
    model.f_inv.layers.last_mut().unwrap().b.data = inverse.to_array().to_vec();
}

#[test]
fn smooth_zero_at_identity() {
    let m = zero_model(SdfField::sphere(Vec3::ZERO, 0.5));
    let batch = surface_samples(&[vec3(0.5, 0.0, 0.0), vec3(0.0, 0.5, 0.0)]);
    assert!(loss_smooth(&m, &batch).unwrap() < 1e-5);
}

#[test]
fn smooth_translation_closed_form() {
    let mut m = zero_model(SdfField::sphere(Vec3::ZERO, 0.5));
    let t = vec3(0.1, -0.2, 0.05);
    set_constant_displacement(&mut m, t, t);
    let batch = surface_samples(&[vec3(0.5, 0.0, 0.0), vec3(0.0, 0.5, 0.0)]);
    let l = loss_smooth(&m, &batch).unwrap();
    assert!((l - 2.0 * t.norm()).abs() < 1e-9, "{l}");
}

#[test]
fn cycle_zero_when_roundtrip_exact() {
    let m = zero_model(SdfField::sphere(Vec3::ZERO, 0.5));
    let batch = surface_samples(&[vec3(0.5, 0.0, 0.0), vec3(0.0, 0.5, 0.0)]);
    assert!(loss_cycle(&m, &batch).unwrap() < 1e-12);
}

#[test]
fn cycle_weight_gates_loss() {
    let mut m = zero_model(SdfField::sphere(Vec3::ZERO, 0.5));
    set_constant_displacement(&mut m, vec3(0.1, 0.0, 0.0), Vec3::ZERO);
    let mut batch = surface_samples(&[vec3(0.5, 0.0, 0.0)]);
    // p'' = p + 0.1 along x, weight 1: loss 0.1 exact.
    let l = loss_cycle(&m, &batch).unwrap();
    assert!((l - 0.1).abs() < 1e-12, "{l}");
    // Zero weight kills it regardless of deviation.
    batch[0].weight = 0.0;
    assert_eq!(loss_cycle(&m, &batch).unwrap(), 0.0);
}

#[test]
fn neighbors_on_plane_stay_in_plane() {
    // A flat box face acts as the plane z=0 near the origin.
    let b = BoxParams::new(vec3(0.0, 0.0, -0.5), vec3(4.0, 4.0, 0.5));
    let m = zero_model(SdfField::Box(b));
    let s = SurfaceSample {
        p: Vec3::ZERO,
        weight: 1.0,
        normal: vec3(0.0, 0.0, 1.0),
        object: "obj".to_string(),
    };
    let nbrs = sample_neighbors(&m, "obj", &s, 6, 0.1, 7).unwrap();
    assert_eq!(nbrs.len(), 6);
    for q in &nbrs {
        assert!(q.z.abs() < 1e-9, "neighbor left the plane: {q:?}");
        assert!(((q.x * q.x + q.y * q.y).sqrt() - 0.1).abs() < 1e-9);
    }
}

#[test]
fn neighbors_on_sphere_have_bounded_stretch() {
    let m = zero_model(SdfField::sphere(Vec3::ZERO, 0.5));
    let s = SurfaceSample {
        p: vec3(0.5, 0.0, 0.0),
        weight: 1.0,
        normal: vec3(1.0, 0.0, 0.0),
        object: "obj".to_string(),
    };
    let rho = 0.1;
    let nbrs = sample_neighbors(&m, "obj", &s, 6, rho, 11).unwrap();
    assert_eq!(nbrs.len(), 6);
    for q in &nbrs {
        assert!(m.composed_sdf(*q, "obj").unwrap().abs() < 1e-4);
        let d = (*q - s.p).norm();
        assert!(
            (0.9 * rho..=1.3 * rho).contains(&d),
            "chord {d} outside geodesic bound"
        );
    }
}

#[test]
fn neighbors_deterministic_per_seed() {
    let m = zero_model(SdfField::sphere(Vec3::ZERO, 0.5));
    let s = SurfaceSample {
        p: vec3(0.5, 0.0, 0.0),
        weight: 1.0,
        normal: vec3(1.0, 0.0, 0.0),
        object: "obj".to_string(),
    };
    let a = sample_neighbors(&m, "obj", &s, 6, 0.05, 21).unwrap();
    let b = sample_neighbors(&m, "obj", &s, 6, 0.05, 21).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x, y);
    }
}

#[test]
fn laplace_zero_for_identity_on_plane() {
    let b = BoxParams::new(vec3(0.0, 0.0, -0.5), vec3(4.0, 4.0, 0.5));
    let m = zero_model(SdfField::Box(b));
    let batch: Vec<SurfaceSample> = [vec3(0.0, 0.0, 0.0), vec3(0.2, 0.1, 0.0)]
        .iter()
        .map(|&p| SurfaceSample {
            p,
            weight: 1.0,
            normal: vec3(0.0, 0.0, 1.0),
            object: "obj".to_string(),
        })
        .collect();
    let l = loss_laplace(&m, "obj", &batch, 6, 0.1, 5).unwrap();
    // Identity map on a plane: Δ lies in the plane but cancels by symmetry
    // of the rotational spread... it does not cancel exactly (weights vary),
    // yet the tangential Laplacian equals Δ itself and is tiny relative to
    // rho because the neighbor spread is symmetric.
    assert!(l < 1e-3, "plane laplace {l}");
}

#[test]
fn eikonal_zero_for_sphere_identity() {
    let m = zero_model(SdfField::sphere(Vec3::ZERO, 0.5));
    let pts = vec![vec3(0.3, 0.2, 0.1), vec3(-0.4, 0.5, 0.2), vec3(0.7, -0.1, 0.3)];
    let l = loss_eikonal(&m, "obj", &pts).unwrap();
    assert!(l < 1e-8, "eikonal {l}");
}

#[test]
fn eikonal_uniform_scaling_closed_form() {
    // A depth-1 linear layer can represent p ↦ p exactly through the raw
    // input slots of the encoding, giving p' = 2p.
    let posenc = PosEncConfig::new(2);
    let latent_dim = 4;
    let cfg = DeformConfig {
        posenc,
        latent_dim,
        depth: 1,
        width: 1,
        };
    let mut m = DeformModel::new(
        &cfg,
        SdfField::sphere(Vec3::ZERO, 0.5),
        &["obj".to_string()],
        1,
    );
    m.f_def.zero_last_layer();
    {
        let w = &mut m.f_def.layers[0].w;
        // Raw input occupies the first three encoding slots.
        let cols = w.cols();
        for axis in 0..3 {
            w.data[axis * cols + axis] = 1.0;
        }
    }
    m.codes.get_mut("obj").unwrap().data.fill(0.0);
    let p = vec3(0.3, -0.2, 0.4);
    assert!((m.forward_map(p, "obj").unwrap() - p * 2.0).norm() < 1e-12);
    let pts = vec![p, vec3(0.1, 0.5, -0.3)];
    let l = loss_eikonal(&m, "obj", &pts).unwrap();
    assert!((l - 1.0).abs() < 1e-9, "expected (2-1)^2 = 1, got {l}");
}

#[test]
fn kepler_eikonal_positive_for_ks_polycube() {
    use surfmap_sdf::PolycubeParams;
    let pc = PolycubeParams::new(vec![
        BoxParams::new(vec3(-0.3, 0.0, 0.0), vec3(0.3, 0.25, 0.25)),
        BoxParams::new(vec3(0.3, 0.0, 0.0), vec3(0.25, 0.3, 0.25)),
    ]);
    let m = zero_model(SdfField::Polycube(pc));
    // Stay away from box edges: probe face-adjacent points.
    let pts = vec![vec3(-0.3, 0.0, 0.4), vec3(0.3, 0.0, 0.45), vec3(-0.75, 0.0, 0.0)];
    let l = loss_eikonal(&m, "obj", &pts).unwrap();
    assert!(l < 0.05, "KS smoothing keeps Eikonal deviation small: {l}");
    assert!(l > 0.0);
}

#[test]
fn geometry_training_on_matching_domain_stays_identity() {
    // Target equals the domain: the identity map is optimal. A short run
    // must keep displacements and cycle error tiny.
    let mut m = zero_model(SdfField::sphere(Vec3::ZERO, 0.5));
    let mut targets = BTreeMap::new();
    targets.insert("obj".to_string(), SdfField::sphere(Vec3::ZERO, 0.5));
    let cfg = surfmap_deform::TrainConfig {
        epochs: 60,
        batch: 64,
        lap_batch: 8,
        eik_batch: 32,
        seed: 5,
        ..Default::default()
    };
    let report = surfmap_deform::train_parameterization(&mut m, &targets, &cfg).unwrap();
    assert!(report.aborted.is_none());
    assert_eq!(report.epochs.len(), 60);
    let samples = surfmap_deform::sample_surface(&targets["obj"], "obj", 256, 77);
    let pts: Vec<Vec3> = samples.iter().map(|s| s.p).collect();
    let mapped = m.forward_map_batch(&pts, "obj").unwrap();
    let mean_disp: f64 =
        mapped.iter().zip(&pts).map(|(a, b)| (*a - *b).norm()).sum::<f64>() / pts.len() as f64;
    assert!(mean_disp < 0.02, "mean displacement {mean_disp}");
    let cyc = loss_cycle(&m, &samples).unwrap();
    assert!(cyc < 1e-3, "cycle {cyc}");
}
