//! Surface-point sampling for geometry supervision and evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use surfmap_sdf::{project_batch, vec3, SdfField, Vec3};

use crate::SurfaceSample;

/// Up to `n` points on the target's zero set with unit normals, deterministic
/// per seed. Random cube points are Newton-projected; non-converged starts
/// are dropped, so slightly fewer than `n` points can come back for nasty
/// fields.
pub fn sample_surface(target: &SdfField, object: &str, n: usize, seed: u64) -> Vec<SurfaceSample> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut rounds = 0;
    while out.len() < n && rounds < 8 {
        rounds += 1;
        let want = (n - out.len()).max(16);
        let starts: Vec<Vec3> = (0..want * 2)
            .map(|_| {
                vec3(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let projected = project_batch(target, &starts, 8);
        for pr in projected {
            if out.len() >= n {
                break;
            }
            if !pr.converged {
                continue;
            }
            let g = target.grad(pr.point);
            let gn = g.norm();
            if gn < 1e-9 {
                continue;
            }
            out.push(SurfaceSample {
                p: pr.point,
                weight: 1.0,
                normal: g / gn,
                object: object.to_string(),
            });
        }
    }
    out
}

/// Points for the Eikonal term: half uniform in the cube, half in a band
/// around the composed surface.
pub fn sample_eikonal_points(
    surface_pts: &[SurfaceSample],
    n: usize,
    seed: u64,
) -> Vec<Vec3> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let n_uniform = n / 2;
    for _ in 0..n_uniform {
        out.push(vec3(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ));
    }
    if !surface_pts.is_empty() {
        for _ in n_uniform..n {
            let s = &surface_pts[rng.gen_range(0..surface_pts.len())];
            let off: f64 = rng.gen_range(-0.1..0.1);
            out.push(s.p + s.normal * off);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_land_on_surface() {
        let f = SdfField::sphere(Vec3::ZERO, 0.5);
        let pts = sample_surface(&f, "o", 128, 3);
        assert_eq!(pts.len(), 128);
        for s in &pts {
            assert!(f.eval(s.p).abs() < 1e-4);
            assert!((s.normal.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        let f = SdfField::sphere(Vec3::ZERO, 0.5);
        let a = sample_surface(&f, "o", 32, 9);
        let b = sample_surface(&f, "o", 32, 9);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.p, y.p);
        }
    }
}
