//! Tangent-plane neighbor generation for the Laplacian regularizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use surfmap_sdf::{Vec3, PROJECT_TOL};

use crate::model::DeformModel;
use crate::{DeformError, SurfaceSample};

pub const NEIGHBOR_STEPS: u32 = 5;

/// Neighbors of one base sample that survived projection; `None` when fewer
/// than 3 survived (the sample is excluded from the Laplacian loss only).
pub type NeighborSet = Option<Vec<Vec3>>;

/// Batched neighbor generation: spread `m_count` directions in the tangent
/// plane at each sample (deterministic rotational offset seeded per sample
/// index), step out by `rho`, then Newton-project onto the composed surface.
pub fn sample_neighbors_batch(
    model: &DeformModel,
    object: &str,
    samples: &[SurfaceSample],
    m_count: usize,
    rho: f64,
    seed: u64,
) -> Result<Vec<NeighborSet>, DeformError> {
    let mut candidates = Vec::with_capacity(samples.len() * m_count);
    for (si, s) in samples.iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(surfmap_nn::stream_seed(seed, "nbr", si as u64));
        let theta0: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (t1, t2) = s.normal.orthonormal_basis();
        for j in 0..m_count {
            let theta = theta0 + std::f64::consts::TAU * j as f64 / m_count as f64;
            candidates.push(s.p + (t1 * theta.cos() + t2 * theta.sin()) * rho);
        }
    }
    // Newton projection onto {composed_sdf = 0}, all candidates at once.
    let mut pts = candidates.clone();
    let mut converged = vec![false; pts.len()];
    for _ in 0..=NEIGHBOR_STEPS {
        let sg = model.composed_eval_grad_batch(&pts, object)?;
        let mut all_done = true;
        for (i, &(s, g, _)) in sg.iter().enumerate() {
            if converged[i] {
                continue;
            }
            if s.abs() <= PROJECT_TOL {
                converged[i] = true;
                continue;
            }
            let g2 = g.norm_squared();
            if g2 < 1e-12 {
                continue;
            }
            pts[i] = pts[i] - g * (s / g2);
            all_done = false;
        }
        if all_done {
            break;
        }
    }
    Ok(samples
        .iter()
        .enumerate()
        .map(|(si, _)| {
            let kept: Vec<Vec3> = (0..m_count)
                .filter(|j| converged[si * m_count + j])
                .map(|j| pts[si * m_count + j])
                .collect();
            if kept.len() >= 3 {
                Some(kept)
            } else {
                None
            }
        })
        .collect())
}

/// Single-sample convenience wrapper.
pub fn sample_neighbors(
    model: &DeformModel,
    object: &str,
    sample: &SurfaceSample,
    m_count: usize,
    rho: f64,
    seed: u64,
) -> Result<Vec<Vec3>, DeformError> {
    let sets = sample_neighbors_batch(
        model,
        object,
        std::slice::from_ref(sample),
        m_count,
        rho,
        seed,
    )?;
    Ok(sets.into_iter().next().flatten().unwrap_or_default())
}

/// ω_j = exp(−‖p−q_j‖/l), l the mean distance, normalized to sum one.
pub fn laplacian_weights(p: Vec3, neighbors: &[Vec3]) -> Vec<f64> {
    let dists: Vec<f64> = neighbors.iter().map(|&q| (p - q).norm()).collect();
    let l = dists.iter().sum::<f64>() / dists.len() as f64;
    let raw: Vec<f64> = dists.iter().map(|d| (-d / l.max(1e-12)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Δ(p) = Σ ω_j (p' − q'_j) with weights from the original-surface metric.
pub fn laplacian_vector(p: Vec3, neighbors: &[Vec3], p_mapped: Vec3, q_mapped: &[Vec3]) -> Vec3 {
    assert_eq!(neighbors.len(), q_mapped.len());
    let w = laplacian_weights(p, neighbors);
    let mut acc = Vec3::ZERO;
    for (j, &q) in q_mapped.iter().enumerate() {
        acc += (p_mapped - q) * w[j];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use surfmap_sdf::vec3;

    #[test]
    fn equidistant_neighbors_get_equal_weights() {
        let p = Vec3::ZERO;
        let q = vec![
            vec3(0.1, 0.0, 0.0),
            vec3(0.0, 0.1, 0.0),
            vec3(-0.1, 0.0, 0.0),
            vec3(0.0, -0.1, 0.0),
        ];
        let w = laplacian_weights(p, &q);
        for wi in &w {
            assert!((wi - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_map_symmetric_neighbors_cancel() {
        let p = Vec3::ZERO;
        let q = vec![
            vec3(0.1, 0.0, 0.0),
            vec3(0.0, 0.1, 0.0),
            vec3(-0.1, 0.0, 0.0),
            vec3(0.0, -0.1, 0.0),
        ];
        let d = laplacian_vector(p, &q, p, &q);
        assert!(d.norm() < 1e-15);
    }

    #[test]
    fn hand_built_asymmetric_case() {
        // Three neighbors at different distances; compute the weighted sum by
        // hand and compare.
        let p = Vec3::ZERO;
        let q = vec![vec3(0.1, 0.0, 0.0), vec3(0.0, 0.2, 0.0), vec3(0.0, 0.0, 0.4)];
        let p_mapped = vec3(1.0, 1.0, 1.0);
        let q_mapped = vec![vec3(1.1, 1.0, 1.0), vec3(1.0, 1.3, 1.0), vec3(1.0, 1.0, 0.8)];
        let l = (0.1 + 0.2 + 0.4) / 3.0;
        let raw = [
            (-0.1f64 / l).exp(),
            (-0.2f64 / l).exp(),
            (-0.4f64 / l).exp(),
        ];
        let sum: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|r| r / sum).collect();
        let expected = vec3(-0.1 * w[0], -0.3 * w[1], 0.2 * w[2]);
        let got = laplacian_vector(p, &q, p_mapped, &q_mapped);
        assert!((got - expected).norm() < 1e-12, "{got:?} vs {expected:?}");
    }
}
