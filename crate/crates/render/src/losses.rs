//! Image-side loss terms.

use surfmap_nn::Tensor;

use crate::RenderError;

/// Mean componentwise absolute difference between predictions and targets.
pub fn loss_rgb(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64, RenderError> {
    if pred.len() != gt.len() {
        return Err(RenderError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let mut acc = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        for k in 0..3 {
            acc += (p[k] - g[k]).abs();
        }
    }
    Ok(acc / (pred.len() * 3) as f64)
}

/// Mean absolute log-shading.
pub fn loss_shading(shd: &[f64]) -> f64 {
    if shd.is_empty() {
        return 0.0;
    }
    shd.iter().map(|s| s.abs()).sum::<f64>() / shd.len() as f64
}

/// Mean over objects of ‖z_s‖ + ‖z_a‖.
pub fn loss_code(pairs: &[(&Tensor, &Tensor)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let norm = |t: &Tensor| t.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    pairs
        .iter()
        .map(|(zs, za)| norm(zs) + norm(za))
        .sum::<f64>()
        / pairs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_zero_on_match() {
        let a = vec![[0.1, 0.5, 0.9]; 8];
        assert_eq!(loss_rgb(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn rgb_uniform_offset() {
        let a = vec![[0.2, 0.2, 0.2]; 8];
        let b = vec![[0.3, 0.3, 0.3]; 8];
        assert!((loss_rgb(&a, &b).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rgb_half_the_pixels_off() {
        let a = vec![[0.0; 3]; 4];
        let mut b = a.clone();
        b[0] = [0.2; 3];
        b[1] = [0.2; 3];
        assert!((loss_rgb(&a, &b).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rgb_length_mismatch() {
        let a = vec![[0.0; 3]; 4];
        let b = vec![[0.0; 3]; 3];
        assert!(loss_rgb(&a, &b).is_err());
    }

    #[test]
    fn code_norm_examples() {
        let zero = Tensor::zeros(&[1, 4]);
        assert_eq!(loss_code(&[(&zero, &zero)]), 0.0);
        let unit = Tensor::from_vec(&[1, 4], vec![0.5, 0.5, 0.5, 0.5]);
        assert!((loss_code(&[(&unit, &unit)]) - 2.0).abs() < 1e-12);
        let double = unit.map(|x| 2.0 * x);
        let l1 = loss_code(&[(&unit, &unit)]);
        let l2 = loss_code(&[(&double, &double)]);
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn shading_examples() {
        assert_eq!(loss_shading(&[0.0, 0.0]), 0.0);
        assert!((loss_shading(&[0.5, -0.5, 0.5]) - 0.5).abs() < 1e-12);
    }
}
