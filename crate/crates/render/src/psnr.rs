//! Peak signal-to-noise ratio on [0,1] images.

/// 10·log₁₀(1/MSE); identical inputs return the 99 dB sentinel.
pub fn psnr(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "psnr: length mismatch");
    let mse: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        99.0
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr_rgb(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let fa: Vec<f64> = a.iter().flatten().copied().collect();
    let fb: Vec<f64> = b.iter().flatten().copied().collect();
    psnr(&fa, &fb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_hits_sentinel() {
        let img = vec![0.25, 0.5, 0.75];
        assert_eq!(psnr(&img, &img), 99.0);
    }

    #[test]
    fn uniform_offset() {
        let a = vec![0.5; 10];
        let b = vec![0.6; 10];
        // MSE = 0.01 → 20 dB.
        assert!((psnr(&a, &b) - 20.0).abs() < 1e-9);
    }
}
