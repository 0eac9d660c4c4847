//! Symmetric chamfer distance between point sets: brute force for small
//! inputs, an exact grid-bucketed search beyond 5·10⁴ points.

use rayon::prelude::*;

use surfmap_sdf::{Vec3};

use crate::MeshError;

pub const BRUTE_FORCE_LIMIT: usize = 50_000;

/// CD = ½·(mean_{a∈A} min_b ‖a−b‖² + mean_{b∈B} min_a ‖a−b‖²).
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64, MeshError> {
    if a.is_empty() || b.is_empty() {
        return Err(MeshError::EmptyPointSet);
    }
    let half = |from: &[Vec3], to: &[Vec3]| -> f64 {
        if from.len().max(to.len()) <= BRUTE_FORCE_LIMIT {
            mean_nn_sq_brute(from, to)
        } else {
            mean_nn_sq_bucketed(from, to)
        }
    };
    Ok(0.5 * (half(a, b) + half(b, a)))
}

fn mean_nn_sq_brute(from: &[Vec3], to: &[Vec3]) -> f64 {
    let total: f64 = from
        .par_iter()
        .map(|&p| {
            to.iter()
                .map(|&q| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / from.len() as f64
}

/// Uniform hash grid with expanding-ring search; exact because rings are
/// visited until the closed lower bound exceeds the best distance found.
pub fn mean_nn_sq_bucketed(from: &[Vec3], to: &[Vec3]) -> f64 {
    let mut lo = Vec3::splat(f64::INFINITY);
    let mut hi = Vec3::splat(f64::NEG_INFINITY);
    for &p in to {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let extent = (hi - lo).max(Vec3::splat(1e-9));
    // Aim for a handful of points per cell.
    let cells = ((to.len() as f64 / 4.0).cbrt().ceil() as usize).clamp(1, 128);
    let cell = vec3_max_component(extent) / cells as f64;
    let dims = [
        ((extent.x / cell).ceil() as usize).max(1),
        ((extent.y / cell).ceil() as usize).max(1),
        ((extent.z / cell).ceil() as usize).max(1),
    ];
    let index_of = |p: Vec3| -> [usize; 3] {
        [
            (((p.x - lo.x) / cell) as usize).min(dims[0] - 1),
            (((p.y - lo.y) / cell) as usize).min(dims[1] - 1),
            (((p.z - lo.z) / cell) as usize).min(dims[2] - 1),
        ]
    };
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
    for (i, &p) in to.iter().enumerate() {
        let c = index_of(p);
        buckets[(c[2] * dims[1] + c[1]) * dims[0] + c[0]].push(i as u32);
    }

    let total: f64 = from
        .par_iter()
        .map(|&p| {
            let c = index_of(p);
            let mut best = f64::INFINITY;
            let max_ring = dims[0].max(dims[1]).max(dims[2]);
            for ring in 0..=max_ring {
                // Any cell in this ring is at least (ring-1)·cell away.
                if ring >= 1 {
                    let lower = (ring - 1) as f64 * cell;
                    if lower * lower > best {
                        break;
                    }
                }
                visit_ring(c, dims, ring, |cx, cy, cz| {
                    for &i in &buckets[(cz * dims[1] + cy) * dims[0] + cx] {
                        let d = (p - to[i as usize]).norm_squared();
                        if d < best {
                            best = d;
                        }
                    }
                });
            }
            best
        })
        .sum();
    total / from.len() as f64
}

fn vec3_max_component(v: Vec3) -> f64 {
    v.x.max(v.y).max(v.z)
}

/// Visit the shell of cells at Chebyshev distance `ring` from `center`.
fn visit_ring(center: [usize; 3], dims: [usize; 3], ring: usize, mut f: impl FnMut(usize, usize, usize)) {
    let lo = |c: usize| c.saturating_sub(ring);
    let hi = |c: usize, d: usize| (c + ring).min(d - 1);
    for cz in lo(center[2])..=hi(center[2], dims[2]) {
        for cy in lo(center[1])..=hi(center[1], dims[1]) {
            for cx in lo(center[0])..=hi(center[0], dims[0]) {
                let cheb = cx
                    .abs_diff(center[0])
                    .max(cy.abs_diff(center[1]))
                    .max(cz.abs_diff(center[2]));
                if cheb == ring {
                    f(cx, cy, cz);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use surfmap_sdf::vec3;

    #[test]
    fn identical_sets_are_zero() {
        let a = vec![vec3(0.1, 0.2, 0.3), vec3(-0.4, 0.5, 0.6)];
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_closed_form() {
        let a = vec![Vec3::ZERO];
        let b = vec![vec3(0.1, 0.0, 0.0)];
        let cd = chamfer_distance(&a, &b).unwrap();
        assert!((cd - 0.01).abs() < 1e-15);
    }

    #[test]
    fn empty_set_rejected() {
        assert!(chamfer_distance(&[], &[Vec3::ZERO]).is_err());
    }

    #[test]
    fn bucketed_matches_brute_force() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut rand_pts = |n: usize| -> Vec<Vec3> {
            (0..n)
                .map(|_| {
                    vec3(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect()
        };
        let a = rand_pts(10_000);
        let b = rand_pts(10_000);
        let brute = 0.5 * (mean_nn_sq_brute(&a, &b) + mean_nn_sq_brute(&b, &a));
        let bucketed = 0.5 * (mean_nn_sq_bucketed(&a, &b) + mean_nn_sq_bucketed(&b, &a));
        assert!(
            (brute - bucketed).abs() < 1e-12,
            "brute {brute} vs bucketed {bucketed}"
        );
    }
}
