//! SDF-to-density conversion: σ(s) = α·Ψ_β(−s) with the Laplace CDF
//! Ψ_β(x) = ½·exp(x/β) for x ≤ 0 and 1 − ½·exp(−x/β) for x > 0.

use surfmap_nn::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityConfig {
    pub beta: f64,
    pub alpha: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            beta: 0.02,
            alpha: 1.0 / 0.02,
        }
    }
}

impl DensityConfig {
    pub fn with_beta(beta: f64) -> Self {
        DensityConfig {
            beta,
            alpha: 1.0 / beta,
        }
    }
}

/// Monotone non-increasing in s; σ(0) = α/2.
pub fn density_from_sdf(s: f64, cfg: &DensityConfig) -> f64 {
    if s > 0.0 {
        cfg.alpha * 0.5 * (-s / cfg.beta).exp()
    } else {
        cfg.alpha * (1.0 - 0.5 * (s / cfg.beta).exp())
    }
}

/// Taped counterpart, exact for s ≠ 0 and matching σ(0) = α/2:
/// σ = α·(½e^{−|s|/β} + step(−s)·(1 − e^{−|s|/β})).
pub fn density_taped(tape: &mut Tape, s: Var, cfg: &DensityConfig) -> Var {
    let a = tape.abs(s);
    let scaled = tape.mul_scalar(a, -1.0 / cfg.beta);
    let e = tape.exp(scaled);
    let half = tape.mul_scalar(e, 0.5);
    let neg_s = tape.neg(s);
    let inside = tape.step(neg_s);
    let neg_e = tape.neg(e);
    let one_m = tape.add_scalar(neg_e, 1.0);
    let gated = tape.mul(inside, one_m);
    let sum = tape.add(half, gated);
    tape.mul_scalar(sum, cfg.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use surfmap_nn::Tensor;

    #[test]
    fn closed_form_values() {
        let cfg = DensityConfig::default();
        let a = cfg.alpha;
        let b = cfg.beta;
        assert!((density_from_sdf(0.0, &cfg) - a / 2.0).abs() < 1e-12);
        let far_out = density_from_sdf(10.0 * b, &cfg);
        assert!((far_out - a * 0.5 * (-10.0f64).exp()).abs() < 1e-12);
        let far_in = density_from_sdf(-10.0 * b, &cfg);
        assert!((far_in - a * (1.0 - 0.5 * (-10.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn monotone_non_increasing() {
        let cfg = DensityConfig::default();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let s = -0.5 + i as f64 * 0.005;
            let d = density_from_sdf(s, &cfg);
            assert!(d <= prev + 1e-12);
            prev = d;
        }
    }

    #[test]
    fn taped_matches_plain() {
        let cfg = DensityConfig::default();
        let vals = vec![-0.3, -0.01, 0.0, 0.004, 0.2];
        let mut tape = Tape::new();
        let s = tape.constant(Tensor::from_vec(&[5, 1], vals.clone()));
        let d = density_taped(&mut tape, s, &cfg);
        for (i, &v) in vals.iter().enumerate() {
            assert!(
                (tape.value(d).data[i] - density_from_sdf(v, &cfg)).abs() < 1e-12,
                "mismatch at s={v}"
            );
        }
    }
}
