//! Point sampling for the fit: half uniform in the cube, half pulled into the
//! near-surface band by one Newton step.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;

use surfmap_sdf::{vec3, PolycubeParams, SdfField, Vec3};

use crate::DomainError;

fn uniform_point(rng: &mut impl Rng) -> Vec3 {
    vec3(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
}

/// 50% uniform in [-1,1]³, 50% moved toward the surface by a single Newton
/// step. Deterministic given the seed.
pub fn sample_fit_points(target: &SdfField, n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n_near = n / 2;
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n - n_near {
        pts.push(uniform_point(&mut rng));
    }
    let starts: Vec<Vec3> = (0..n_near).map(|_| uniform_point(&mut rng)).collect();
    let sg = target.eval_grad_batch(&starts);
    for (p, (s, g)) in starts.into_iter().zip(sg) {
        let g2 = g.norm_squared();
        if g2 > 1e-12 {
            pts.push(p - g * (s / g2));
        } else {
            pts.push(p);
        }
    }
    pts
}

/// k box centers rejection-sampled from the target interior, half extents
/// all 0.15.
pub fn init_boxes(
    target: &SdfField,
    k: usize,
    rng: &mut impl Rng,
) -> Result<PolycubeParams, DomainError> {
    let mut boxes = Vec::with_capacity(k);
    let mut attempts = 0usize;
    while boxes.len() < k {
        attempts += 1;
        if attempts > 100_000 {
            return Err(DomainError::DegenerateTarget);
        }
        let c = uniform_point(rng);
        if target.eval(c) < 0.0 {
            boxes.push(surfmap_sdf::BoxParams::new(c, Vec3::splat(0.15)));
        }
    }
    Ok(PolycubeParams::new(boxes))
}

/// Sphere init from interior statistics: centroid of interior samples, radius
/// from the mean of ‖p−c‖ − s(p) (exact when the target itself is a sphere).
pub fn init_sphere(target: &SdfField, rng: &mut impl Rng) -> Result<(Vec3, f64), DomainError> {
    let mut interior = Vec::new();
    let mut attempts = 0usize;
    while interior.len() < 256 {
        attempts += 1;
        if attempts > 100_000 {
            return Err(DomainError::DegenerateTarget);
        }
        let p = uniform_point(rng);
        if target.eval(p) < 0.0 {
            interior.push(p);
        }
    }
    let mut c = Vec3::ZERO;
    for &p in &interior {
        c += p;
    }
    c = c / interior.len() as f64;
    let vals = target.eval_batch(&interior);
    let r = interior
        .iter()
        .zip(&vals)
        .map(|(&p, &s)| (p - c).norm() - s)
        .sum::<f64>()
        / interior.len() as f64;
    Ok((c, r.max(crate::EXTENT_CLAMP)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_hits_near_surface_band() {
        let target = SdfField::sphere(Vec3::ZERO, 0.5);
        let pts = sample_fit_points(&target, 100, 3);
        let near = pts.iter().filter(|p| target.eval(**p).abs() < 0.1).count();
        assert!(near >= 40, "only {near} near-surface points");
    }

    #[test]
    fn deterministic_given_seed() {
        let target = SdfField::sphere(Vec3::ZERO, 0.5);
        let a = sample_fit_points(&target, 64, 9);
        let b = sample_fit_points(&target, 64, 9);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn zero_points_is_empty() {
        let target = SdfField::sphere(Vec3::ZERO, 0.5);
        assert!(sample_fit_points(&target, 0, 1).is_empty());
    }

    #[test]
    fn box_init_lands_inside() {
        let target = SdfField::sphere(Vec3::ZERO, 0.6);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let pc = init_boxes(&target, 3, &mut rng).unwrap();
        for b in &pc.boxes {
            assert!(target.eval(b.center) < 0.0);
            assert_eq!(b.half_extents, Vec3::splat(0.15));
        }
    }

    #[test]
    fn sphere_init_recovers_sphere_targets() {
        let target = SdfField::sphere(vec3(0.0, 0.1, 0.0), 0.6);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let (c, r) = init_sphere(&target, &mut rng).unwrap();
        assert!((c - vec3(0.0, 0.1, 0.0)).norm() < 0.05);
        assert!((r - 0.6).abs() < 0.05);
    }
}
