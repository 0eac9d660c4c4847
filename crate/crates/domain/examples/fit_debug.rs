use surfmap_domain::{fit_domain, DomainSpec};
use surfmap_sdf::{vec3, BoxParams, PolycubeParams, SdfField};

fn main() {
    let target = SdfField::Box(BoxParams::new(vec3(0.1, 0.0, 0.0), vec3(0.5, 0.4, 0.3)));
    let mut spec = DomainSpec::polycube(1, 17);
    spec.max_iters = 120;
    let (fitted, report) = fit_domain(&target, &spec).unwrap();
    for (i, (s, l)) in report.trace.iter().enumerate() {
        if i % 5 == 0 || i + 1 == report.trace.len() {
            println!("iter={i} l_sdf={s:.6} l_lap={l:.6}");
        }
    }
    if let SdfField::Polycube(pc) = &fitted {
        let b = &pc.boxes[0];
        println!(
            "final center=({:.4},{:.4},{:.4}) half=({:.4},{:.4},{:.4}) iters={}",
            b.center.x, b.center.y, b.center.z,
            b.half_extents.x, b.half_extents.y, b.half_extents.z,
            report.iterations_used
        );
    }

    println!("--- two disjoint boxes ---");
    let target2 = SdfField::Polycube(PolycubeParams::new(vec![
        BoxParams::new(vec3(-0.45, 0.0, 0.0), vec3(0.25, 0.3, 0.3)),
        BoxParams::new(vec3(0.45, 0.0, 0.0), vec3(0.25, 0.3, 0.3)),
    ]));
    let mut spec2 = DomainSpec::polycube(2, 31);
    spec2.max_iters = 120;
    let (fitted2, report2) = fit_domain(&target2, &spec2).unwrap();
    for (i, (s, l)) in report2.trace.iter().enumerate() {
        if i % 5 == 0 || i + 1 == report2.trace.len() {
            println!("iter={i} l_sdf={s:.6} l_lap={l:.6}");
        }
    }
    if let SdfField::Polycube(pc) = &fitted2 {
        for (j, b) in pc.boxes.iter().enumerate() {
            println!(
                "box{j} center=({:.4},{:.4},{:.4}) half=({:.4},{:.4},{:.4})",
                b.center.x, b.center.y, b.center.z,
                b.half_extents.x, b.half_extents.y, b.half_extents.z
            );
        }
    }
}
