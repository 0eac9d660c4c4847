//! Ray sampling, transparency accumulation and color integration.

use rand::Rng;

use surfmap_sdf::Vec3;

use crate::density::{density_from_sdf, DensityConfig};

/// `n_samples` parameters in [near, far] with their interval lengths. Without
/// jitter the samples sit at stratum midpoints; the last interval length is
/// the stratum width.
pub fn sample_ray(
    near: f64,
    far: f64,
    n_samples: usize,
    stratified: bool,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<f64>) {
    assert!(n_samples >= 2, "need at least two samples per ray");
    let w = (far - near) / n_samples as f64;
    let t: Vec<f64> = (0..n_samples)
        .map(|i| {
            let u: f64 = if stratified { rng.gen_range(0.0..1.0) } else { 0.5 };
            near + (i as f64 + u) * w
        })
        .collect();
    let mut delta: Vec<f64> = (0..n_samples - 1).map(|i| t[i + 1] - t[i]).collect();
    delta.push(w);
    (t, delta)
}

/// Per-sample accumulation state along one ray.
#[derive(Clone, Debug, Default)]
pub struct RaySampleSet {
    pub position: Vec<Vec3>,
    pub delta: Vec<f64>,
    pub sdf: Vec<f64>,
    pub sigma: Vec<f64>,
    pub transparency: Vec<f64>,
    pub weight: Vec<f64>,
}

impl RaySampleSet {
    pub fn from_sdf(
        positions: Vec<Vec3>,
        delta: Vec<f64>,
        sdf: Vec<f64>,
        cfg: &DensityConfig,
    ) -> RaySampleSet {
        let sigma: Vec<f64> = sdf.iter().map(|&s| density_from_sdf(s, cfg)).collect();
        let (transparency, weight) = compute_weights(&sigma, &delta);
        RaySampleSet {
            position: positions,
            delta,
            sdf,
            sigma,
            transparency,
            weight,
        }
    }

    pub fn opacity(&self) -> f64 {
        self.weight.iter().sum()
    }
}

/// T₁ = 1, T_{i+1} = T_i·exp(−σ_i δ_i), λ_i = T_i·(1 − exp(−σ_i δ_i)).
pub fn compute_weights(sigma: &[f64], delta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut transparency = Vec::with_capacity(sigma.len());
    let mut weight = Vec::with_capacity(sigma.len());
    let mut t = 1.0f64;
    for (&s, &d) in sigma.iter().zip(delta) {
        let a = (-s * d).exp();
        transparency.push(t);
        weight.push(t * (1.0 - a));
        t *= a;
    }
    (transparency, weight)
}

/// c = Σ λ_i r_i + (1 − Σλ)·background. Returns (color, opacity).
pub fn integrate_ray(
    weights: &[f64],
    radiances: &[[f64; 3]],
    background: [f64; 3],
) -> ([f64; 3], f64) {
    assert_eq!(weights.len(), radiances.len());
    let mut c = [0.0f64; 3];
    let mut opacity = 0.0;
    for (&w, r) in weights.iter().zip(radiances) {
        opacity += w;
        for k in 0..3 {
            c[k] += w * r[k];
        }
    }
    let residual = 1.0 - opacity;
    for k in 0..3 {
        c[k] += residual * background[k];
    }
    (c, opacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn midpoint_samples() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let (t, d) = sample_ray(0.0, 1.0, 4, false, &mut rng);
        assert_eq!(t, vec![0.125, 0.375, 0.625, 0.875]);
        let sum: f64 = d.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jitter_is_seeded() {
        let (t1, _) = sample_ray(0.0, 1.0, 8, true, &mut ChaCha12Rng::seed_from_u64(7));
        let (t2, _) = sample_ray(0.0, 1.0, 8, true, &mut ChaCha12Rng::seed_from_u64(7));
        assert_eq!(t1, t2);
    }

    #[test]
    fn weights_telescope() {
        let sigma = vec![0.5, 2.0, 10.0, 1.0];
        let delta = vec![0.25; 4];
        let (t, w) = compute_weights(&sigma, &delta);
        assert_eq!(t[0], 1.0);
        for i in 1..4 {
            assert!((t[i] - t[i - 1] * (-sigma[i - 1] * delta[i - 1]).exp()).abs() < 1e-12);
        }
        let total: f64 = w.iter().sum();
        assert!(total <= 1.0 + 1e-12);
        assert!((total - (1.0 - t[3] * (-sigma[3] * delta[3]).exp())).abs() < 1e-12);
    }

    #[test]
    fn empty_ray_returns_background() {
        let (c, o) = integrate_ray(&[0.0; 4], &[[1.0, 0.0, 0.0]; 4], [0.2, 0.3, 0.4]);
        assert_eq!(c, [0.2, 0.3, 0.4]);
        assert_eq!(o, 0.0);
    }

    #[test]
    fn opaque_sample_dominates() {
        let sigma = vec![1e9];
        let delta = vec![1.0];
        let (_, w) = compute_weights(&sigma, &delta);
        let (c, o) = integrate_ray(&w, &[[1.0, 0.0, 0.0]], [0.0, 0.0, 1.0]);
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!(c[2] < 1e-12);
        assert!((o - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_sample_hand_arithmetic() {
        // σ₁δ₁ = σ₂δ₂ = ln 2 ⇒ λ = {½, ¼}, color = ½r₁ + ¼r₂ + ¼·bg.
        let ln2 = std::f64::consts::LN_2;
        let sigma = vec![ln2, ln2];
        let delta = vec![1.0, 1.0];
        let (t, w) = compute_weights(&sigma, &delta);
        assert!((t[1] - 0.5).abs() < 1e-12);
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 0.25).abs() < 1e-12);
        let r = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let bg = [0.0, 0.0, 1.0];
        let (c, _) = integrate_ray(&w, &r, bg);
        assert!((c[0] - 0.5).abs() < 1e-12);
        assert!((c[1] - 0.25).abs() < 1e-12);
        assert!((c[2] - 0.25).abs() < 1e-12);
    }
}
