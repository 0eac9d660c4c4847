//! Adam with bias correction, plus shared learning-rate schedules.

use crate::error::NnError;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn new(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Gradients contained NaN/Inf; parameters left untouched.
    SkippedNonFinite,
}

/// One Adam update over a flat parameter list. Gradient order must match the
/// parameter order; state is lazily initialized on first use.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<StepOutcome, NnError> {
    if params.len() != grads.len() {
        return Err(NnError::GradCountMismatch {
            params: params.len(),
            grads: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.all_finite()) {
        return Ok(StepOutcome::SkippedNonFinite);
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| Tensor::zeros(&p.shape)).collect();
        state.v = params.iter().map(|p| Tensor::zeros(&p.shape)).collect();
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - hp.beta1.powf(t);
    let bc2 = 1.0 - hp.beta2.powf(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        assert_eq!(p.shape, g.shape, "adam: param/grad shape mismatch");
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = hp.beta1 * m.data[i] + (1.0 - hp.beta1) * gi;
            v.data[i] = hp.beta2 * v.data[i] + (1.0 - hp.beta2) * gi * gi;
            let mh = m.data[i] / bc1;
            let vh = v.data[i] / bc2;
            p.data[i] -= hp.lr * mh / (vh.sqrt() + hp.eps);
        }
    }
    Ok(StepOutcome::Applied)
}

/// Cosine decay from `lr` to `lr·floor_frac` over `total` steps.
pub fn cosine_lr(lr: f64, step: u64, total: u64, floor_frac: f64) -> f64 {
    if total == 0 {
        return lr;
    }
    let t = (step as f64 / total as f64).min(1.0);
    let scale = floor_frac + (1.0 - floor_frac) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
    lr * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_lr() {
        let mut p = Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]);
        let g = Tensor::from_vec(&[3], vec![0.5, -2.0, 1e-3]);
        let mut state = AdamState::default();
        let hp = AdamParams::new(0.1);
        adam_step(&mut [&mut p], &[g.clone()], &mut state, &hp).unwrap();
        // Bias-corrected first step: lr·g/(|g|+eps') ≈ lr·sign(g).
        for i in 0..3 {
            let expected = 1.0 - 0.1 * g.data[i].signum();
            assert!((p.data[i] - expected).abs() < 1e-4, "{} vs {}", p.data[i], expected);
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = Tensor::from_vec(&[2], vec![0.3, -0.7]);
        let g = Tensor::zeros(&[2]);
        let mut state = AdamState::default();
        adam_step(&mut [&mut p], &[g], &mut state, &AdamParams::new(0.1)).unwrap();
        assert_eq!(p.data, vec![0.3, -0.7]);
    }

    #[test]
    fn nonfinite_gradient_skips_step() {
        let mut p = Tensor::from_vec(&[1], vec![1.0]);
        let g = Tensor::from_vec(&[1], vec![f64::NAN]);
        let mut state = AdamState::default();
        let out = adam_step(&mut [&mut p], &[g], &mut state, &AdamParams::new(0.1)).unwrap();
        assert_eq!(out, StepOutcome::SkippedNonFinite);
        assert_eq!(p.data, vec![1.0]);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut w = Tensor::from_vec(&[4], vec![1.0, -0.8, 0.5, 0.9]);
        let mut state = AdamState::default();
        let hp = AdamParams::new(0.05);
        for _ in 0..200 {
            let g = w.map(|x| 2.0 * x);
            adam_step(&mut [&mut w], &[g], &mut state, &hp).unwrap();
        }
        let norm: f64 = w.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-2, "norm after 200 steps: {}", norm);
    }
}
