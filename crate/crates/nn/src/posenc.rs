//! Sinusoidal positional encoding of 3D points and directions.
//!
//! Layout per input vector: `[p, sin(2⁰πp), cos(2⁰πp), ..., sin(2^{L-1}πp),
//! cos(2^{L-1}πp)]` with the raw input present only when `include_input` is
//! set. Total dimension is `3·(include_input + 2L)`.

use crate::dual::{self, DualVar};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosEncConfig {
    pub num_frequencies: usize,
    pub include_input: bool,
}

impl PosEncConfig {
    pub fn new(num_frequencies: usize) -> Self {
        PosEncConfig {
            num_frequencies,
            include_input: true,
        }
    }

    pub fn dim(&self) -> usize {
        3 * (usize::from(self.include_input) + 2 * self.num_frequencies)
    }

    pub fn encode(&self, p: [f64; 3]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        if self.include_input {
            out.extend_from_slice(&p);
        }
        for l in 0..self.num_frequencies {
            let f = std::f64::consts::PI * (1u64 << l) as f64;
            for c in p {
                out.push((f * c).sin());
            }
            for c in p {
                out.push((f * c).cos());
            }
        }
        out
    }

    /// Encode a N×3 batch into N×dim.
    pub fn encode_batch(&self, pts: &Tensor) -> Tensor {
        assert_eq!(pts.cols(), 3, "encode_batch expects N×3");
        let n = pts.rows();
        let d = self.dim();
        let mut data = vec![0.0; n * d];
        for r in 0..n {
            let p = pts.row(r);
            let enc = self.encode([p[0], p[1], p[2]]);
            data[r * d..(r + 1) * d].copy_from_slice(&enc);
        }
        Tensor::from_vec(&[n, d], data)
    }

    /// Taped encoding of an N×3 tape value.
    pub fn encode_taped(&self, tape: &mut Tape, p: Var) -> Var {
        let mut parts = Vec::new();
        if self.include_input {
            parts.push(p);
        }
        for l in 0..self.num_frequencies {
            let f = std::f64::consts::PI * (1u64 << l) as f64;
            let scaled = tape.mul_scalar(p, f);
            parts.push(tape.sin(scaled));
            parts.push(tape.cos(scaled));
        }
        tape.concat_cols(&parts)
    }

    /// Taped encoding with tangent propagation.
    pub fn encode_taped_dual(&self, tape: &mut Tape, p: DualVar) -> DualVar {
        let mut parts = Vec::new();
        if self.include_input {
            parts.push(p);
        }
        for l in 0..self.num_frequencies {
            let f = std::f64::consts::PI * (1u64 << l) as f64;
            let scaled = dual::mul_scalar(tape, p, f);
            parts.push(dual::sin(tape, scaled));
            parts.push(dual::cos(tape, scaled));
        }
        dual::concat_cols(tape, &parts)
    }

    /// Batch encoding together with tangents d(enc)/d(p_k), plain f64 path.
    pub fn encode_dual_batch(&self, pts: &Tensor) -> (Tensor, [Tensor; 3]) {
        assert_eq!(pts.cols(), 3);
        let n = pts.rows();
        let d = self.dim();
        let mut val = vec![0.0; n * d];
        let mut tan = [vec![0.0; n * d], vec![0.0; n * d], vec![0.0; n * d]];
        for r in 0..n {
            let p = pts.row(r);
            let mut j = 0usize;
            if self.include_input {
                for c in 0..3 {
                    val[r * d + j] = p[c];
                    tan[c][r * d + j] = 1.0;
                    j += 1;
                }
            }
            for l in 0..self.num_frequencies {
                let f = std::f64::consts::PI * (1u64 << l) as f64;
                for c in 0..3 {
                    val[r * d + j] = (f * p[c]).sin();
                    tan[c][r * d + j] = f * (f * p[c]).cos();
                    j += 1;
                }
                for c in 0..3 {
                    val[r * d + j] = (f * p[c]).cos();
                    tan[c][r * d + j] = -f * (f * p[c]).sin();
                    j += 1;
                }
            }
        }
        (
            Tensor::from_vec(&[n, d], val),
            tan.map(|t| Tensor::from_vec(&[n, d], t)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_point_layout() {
        let cfg = PosEncConfig::new(6);
        let enc = cfg.encode([0.0, 0.0, 0.0]);
        assert_eq!(enc.len(), 39);
        assert_eq!(&enc[0..3], &[0.0, 0.0, 0.0]);
        for l in 0..6 {
            let base = 3 + l * 6;
            assert_eq!(&enc[base..base + 3], &[0.0, 0.0, 0.0]); // sin
            assert_eq!(&enc[base + 3..base + 6], &[1.0, 1.0, 1.0]); // cos
        }
    }

    #[test]
    fn zero_frequencies_is_identity() {
        let cfg = PosEncConfig::new(0);
        assert_eq!(cfg.encode([0.1, -0.2, 0.3]), vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn half_hits_sin_peak() {
        let cfg = PosEncConfig::new(1);
        let enc = cfg.encode([0.5, 0.0, 0.0]);
        // layout: [p(3), sin(3), cos(3)]
        assert!((enc[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn taped_matches_plain() {
        let cfg = PosEncConfig::new(4);
        let pts = Tensor::from_vec(&[2, 3], vec![0.1, 0.2, 0.3, -0.5, 0.4, 0.9]);
        let plain = cfg.encode_batch(&pts);
        let mut tape = Tape::new();
        let v = tape.constant(pts);
        let enc = cfg.encode_taped(&mut tape, v);
        assert_eq!(tape.value(enc).data, plain.data);
    }
}
