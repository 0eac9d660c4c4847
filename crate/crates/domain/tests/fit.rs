//! Self-fit recovery, convergence behaviour and the complexity-penalty
//! direction check.

use surfmap_sdf::{vec3, BoxParams, PolycubeParams, SdfField, Vec3};
use surfmap_domain::{fit_domain, DomainKind, DomainSpec};

#[test]
fn box_self_fit_recovers_parameters() {
    let target = SdfField::Box(BoxParams::new(vec3(0.1, 0.0, 0.0), vec3(0.5, 0.4, 0.3)));
    let spec = DomainSpec::polycube(1, 17);
    let (fitted, report) = fit_domain(&target, &spec).unwrap();
    assert!(report.iterations_used <= 60);
    let SdfField::Polycube(pc) = &fitted else {
        panic!("expected polycube");
    };
    let b = &pc.boxes[0];
    let expect_c = vec3(0.1, 0.0, 0.0);
    let expect_h = vec3(0.5, 0.4, 0.3);
    for axis in 0..3 {
        assert!(
            (b.center.component(axis) - expect_c.component(axis)).abs() < 1e-2,
            "center axis {axis}: {} vs {} (iters {})",
            b.center.component(axis),
            expect_c.component(axis),
            report.iterations_used,
        );
        assert!(
            (b.half_extents.component(axis) - expect_h.component(axis)).abs() < 1e-2,
            "half axis {axis}: {} vs {}",
            b.half_extents.component(axis),
            expect_h.component(axis),
        );
    }
}

#[test]
fn sphere_self_fit_recovers_parameters() {
    let target = SdfField::sphere(vec3(0.0, 0.1, 0.0), 0.6);
    let spec = DomainSpec::sphere(23);
    let (fitted, report) = fit_domain(&target, &spec).unwrap();
    assert!(report.converged);
    assert!(report.iterations_used <= 60);
    let SdfField::Sphere { center, radius } = fitted else {
        panic!("expected sphere");
    };
    assert!((center - vec3(0.0, 0.1, 0.0)).norm() < 1e-2, "center {center:?}");
    assert!((radius - 0.6).abs() < 1e-2, "radius {radius}");
}

#[test]
fn two_disjoint_boxes_fit_reaches_low_loss() {
    let target = SdfField::Polycube(PolycubeParams::new(vec![
        BoxParams::new(vec3(-0.45, 0.0, 0.0), vec3(0.25, 0.3, 0.3)),
        BoxParams::new(vec3(0.45, 0.0, 0.0), vec3(0.25, 0.3, 0.3)),
    ]));
    let spec = DomainSpec::polycube(2, 31);
    let (_, report) = fit_domain(&target, &spec).unwrap();
    // Labels may permute; assert the loss, not the assignment.
    assert!(
        report.final_l_sdf < 0.02,
        "final L_sdf {} after {} iters",
        report.final_l_sdf,
        report.iterations_used
    );
}

#[test]
fn descent_is_monotone_after_transients() {
    let target = SdfField::sphere(Vec3::ZERO, 0.55);
    let spec = DomainSpec::sphere(41);
    let (_, report) = fit_domain(&target, &spec).unwrap();
    let totals: Vec<f64> = report
        .trace
        .iter()
        .map(|(s, l)| s + spec.lambda_s * l)
        .collect();
    for i in 5..totals.len() - 1 {
        assert!(
            totals[i + 1] <= totals[i] * 1.05,
            "loss rose more than 5% at iter {}: {} -> {}",
            i,
            totals[i],
            totals[i + 1]
        );
    }
}

#[test]
fn lambda_s_reduces_near_surface_laplacian() {
    // Rounded target: a sphere forces curvature into the polycube fit.
    let target = SdfField::sphere(Vec3::ZERO, 0.5);
    let fit = |lambda_s: f64| {
        let mut spec = DomainSpec::polycube(2, 57);
        spec.lambda_s = lambda_s;
        fit_domain(&target, &spec).unwrap().0
    };
    let smooth = fit(0.1);
    let rough = fit(0.0);
    let mean_lap = |f: &SdfField| {
        let pts = surfmap_domain::sample_fit_points(&target, 2048, 99);
        let band: Vec<Vec3> = pts
            .into_iter()
            .filter(|p| target.eval(*p).abs() < 0.1)
            .collect();
        let h = 1e-3;
        let mut acc = 0.0;
        for &p in &band {
            let mut lap = -6.0 * f.eval(p);
            for axis in 0..3 {
                lap += f.eval(p.with_component(axis, p.component(axis) + h));
                lap += f.eval(p.with_component(axis, p.component(axis) - h));
            }
            acc += (lap / (h * h)).abs();
        }
        acc / band.len() as f64
    };
    let (l_smooth, l_rough) = (mean_lap(&smooth), mean_lap(&rough));
    assert!(
        l_smooth < l_rough,
        "mean |Laplacian| with λ_s=0.1 ({l_smooth}) should be below λ_s=0 ({l_rough})"
    );
}

#[test]
fn k3_seed_sweep_on_head_like_target() {
    // Cranium-plus-jaw proportions: a big block with a smaller one in front.
    let target = SdfField::Polycube(PolycubeParams::new(vec![
        BoxParams::new(vec3(0.0, 0.1, 0.0), vec3(0.45, 0.5, 0.45)),
        BoxParams::new(vec3(0.0, -0.45, 0.25), vec3(0.3, 0.2, 0.3)),
    ]));
    for seed in 0..10u64 {
        let mut spec = DomainSpec::polycube(3, seed);
        spec.samples_per_iter = 2048;
        let (_, report) = fit_domain(&target, &spec).unwrap();
        assert!(
            report.final_l_sdf < 0.05,
            "seed {seed}: final L_sdf {}",
            report.final_l_sdf
        );
    }
}

#[test]
fn spec_kind_is_respected() {
    let target = SdfField::sphere(Vec3::ZERO, 0.5);
    let spec = DomainSpec {
        kind: DomainKind::Polycube,
        k: 3,
        ..DomainSpec::sphere(3)
    };
    let (fitted, _) = fit_domain(&target, &spec).unwrap();
    assert!(matches!(fitted, SdfField::Polycube(ref pc) if pc.k() == 3));
}
