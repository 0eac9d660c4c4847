//! Field-level invariants: the KS union bound, gradient consistency against
//! finite differences, translation equivariance and the sphere Eikonal
//! identity.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use surfmap_sdf::{
    eval_polycube_exact, eval_polycube_ks, vec3, BoxParams, PolycubeParams, SdfField, Vec3,
};

fn random_polycube(rng: &mut impl Rng, k: usize) -> PolycubeParams {
    let boxes = (0..k)
        .map(|_| {
            BoxParams::new(
                vec3(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                ),
                vec3(
                    rng.gen_range(0.05..0.4),
                    rng.gen_range(0.05..0.4),
                    rng.gen_range(0.05..0.4),
                ),
            )
        })
        .collect();
    PolycubeParams::new(boxes)
}

fn random_point(rng: &mut impl Rng) -> Vec3 {
    vec3(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
}

#[test]
fn ks_bound_holds_everywhere() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for k in [1usize, 2, 3, 5] {
        let pc = random_polycube(&mut rng, k);
        let bound = (k as f64).ln() / pc.ks_lambda;
        for _ in 0..1000 {
            let p = random_point(&mut rng);
            let exact = eval_polycube_exact(&pc, p);
            let ks: f64 = eval_polycube_ks(&pc, p.to_array());
            let gap = exact - ks;
            assert!(
                (-1e-12..=bound + 1e-12).contains(&gap),
                "KS bound violated: gap={gap}, bound={bound}, k={k}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn ks_bound_proptest(seed in 0u64..1000, k in 1usize..5) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let pc = random_polycube(&mut rng, k);
        let bound = (k as f64).ln() / pc.ks_lambda;
        for _ in 0..32 {
            let p = random_point(&mut rng);
            let gap = eval_polycube_exact(&pc, p) - eval_polycube_ks::<f64>(&pc, p.to_array());
            prop_assert!((-1e-12..=bound + 1e-12).contains(&gap));
        }
    }
}

/// Resample points that sit too close to a non-smooth locus of the box max:
/// the two largest per-axis terms within 1e-3 of each other, or an axis sign
/// flip at the slab center.
fn away_from_kinks(boxes: &[BoxParams], p: Vec3) -> bool {
    for b in boxes {
        let d = p - b.center;
        let mut t = [
            d.x.abs() - b.half_extents.x,
            d.y.abs() - b.half_extents.y,
            d.z.abs() - b.half_extents.z,
        ];
        t.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if (t[0] - t[1]).abs() < 1e-3 {
            return false;
        }
        if d.x.abs() < 1e-3 || d.y.abs() < 1e-3 || d.z.abs() < 1e-3 {
            return false;
        }
    }
    true
}

fn central_fd(f: &SdfField, p: Vec3, h: f64) -> Vec3 {
    let mut fd = Vec3::ZERO;
    for axis in 0..3 {
        let fp = f.eval(p.with_component(axis, p.component(axis) + h));
        let fm = f.eval(p.with_component(axis, p.component(axis) - h));
        fd = fd.with_component(axis, (fp - fm) / (2.0 * h));
    }
    fd
}

#[test]
fn gradient_consistency_with_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let pc = random_polycube(&mut rng, 3);
    let single_box = BoxParams::new(vec3(0.0, 0.1, -0.1), vec3(0.4, 0.35, 0.3));
    let fields: Vec<(&str, Vec<BoxParams>, SdfField)> = vec![
        (
            "sphere",
            vec![],
            SdfField::sphere(vec3(0.1, -0.05, 0.0), 0.45),
        ),
        ("torus", vec![], SdfField::Torus { major: 0.5, minor: 0.2 }),
        ("polycube", pc.boxes.clone(), SdfField::Polycube(pc.clone())),
        ("box", vec![single_box], SdfField::Box(single_box)),
    ];
    let h = 1e-4;
    for (name, kink_boxes, f) in &fields {
        let mut checked = 0;
        while checked < 1000 {
            let p = random_point(&mut rng);
            if !away_from_kinks(kink_boxes, p) {
                continue;
            }
            if matches!(f, SdfField::Sphere { center, .. } if (p - *center).norm() < 1e-2) {
                continue;
            }
            if let SdfField::Torus { .. } = f {
                if (p.x * p.x + p.y * p.y).sqrt() < 1e-2 {
                    continue;
                }
            }
            let g = f.grad(p);
            let fd = central_fd(f, p, h);
            let rel = (g - fd).norm() / fd.norm().max(1e-9);
            assert!(rel < 1e-4, "{name}: rel err {rel} at {p:?}");
            checked += 1;
        }
    }
}

#[test]
fn sphere_eikonal_everywhere() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let f = SdfField::sphere(vec3(0.05, 0.1, -0.2), 0.5);
    for _ in 0..2000 {
        let p = random_point(&mut rng);
        if (p - vec3(0.05, 0.1, -0.2)).norm() < 1e-3 {
            continue;
        }
        let g = f.grad(p);
        assert!((g.norm() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn translation_equivariance_analytic() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let fields = vec![
        SdfField::sphere(vec3(0.1, 0.0, 0.0), 0.4),
        SdfField::Box(BoxParams::new(vec3(0.0, 0.1, 0.0), vec3(0.4, 0.3, 0.5))),
        SdfField::Polycube(random_polycube(&mut rng, 3)),
    ];
    for f in &fields {
        for _ in 0..100 {
            let t = random_point(&mut rng) * 0.3;
            let p = random_point(&mut rng);
            let ft = f.translated(t).unwrap();
            assert!((ft.eval(p) - f.eval(p - t)).abs() < 1e-12);
        }
    }
}

#[test]
fn composed_with_zero_deformation_equals_domain() {
    use rand::SeedableRng;
    use surfmap_nn::{Mlp, MlpConfig, PosEncConfig};

    let posenc = PosEncConfig::new(4);
    let latent_dim = 8;
    let cfg = MlpConfig::new(3, 16, posenc.dim() + latent_dim, 3);
    let mut deform = Mlp::new(cfg, &mut ChaCha12Rng::seed_from_u64(1));
    deform.zero_last_layer();
    let domain = SdfField::sphere(Vec3::ZERO, 0.5);
    let composed = SdfField::Composed(surfmap_sdf::ComposedField {
        domain: Box::new(domain.clone()),
        deform,
        posenc,
        latent: vec![0.0; latent_dim],
    });
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    for _ in 0..50 {
        let p = random_point(&mut rng);
        assert!((composed.eval(p) - domain.eval(p)).abs() < 1e-12);
    }
    assert!((composed.eval(vec3(1.0, 0.0, 0.0)) - 0.5).abs() < 1e-12);
}

#[test]
fn composed_gradient_matches_finite_differences() {
    use surfmap_nn::{Mlp, MlpConfig, PosEncConfig};

    let posenc = PosEncConfig::new(4);
    let latent_dim = 4;
    let cfg = MlpConfig::new(3, 16, posenc.dim() + latent_dim, 3);
    // Non-trivial deformation: random last layer scaled down.
    let mut rng = ChaCha12Rng::seed_from_u64(21);
    let deform = Mlp::new(cfg, &mut rng);
    let composed = SdfField::Composed(surfmap_sdf::ComposedField {
        domain: Box::new(SdfField::sphere(Vec3::ZERO, 0.5)),
        deform,
        posenc,
        latent: vec![0.01; latent_dim],
    });
    let h = 1e-4;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 20 && attempts < 2000 {
        attempts += 1;
        let p = random_point(&mut rng) * 0.8;
        // The steep softplus makes FD itself unreliable near activation
        // bands; skip points where two step sizes disagree (the non-smooth
        // locus analog for network fields).
        let fd = central_fd(&composed, p, h);
        let fd2 = central_fd(&composed, p, 2.0 * h);
        if (fd - fd2).norm() / fd.norm().max(1e-9) > 2e-5 {
            continue;
        }
        let g = composed.grad(p);
        let rel = (g - fd).norm() / fd.norm().max(1e-9);
        assert!(rel < 1e-4, "rel err {rel}");
        // Reverse-mode and dual paths agree tightly.
        let (_, gd) = composed.eval_grad(p);
        assert!((g - gd).norm() < 1e-10);
        checked += 1;
    }
    assert!(checked >= 20, "too few smooth sample points: {checked}");
}
