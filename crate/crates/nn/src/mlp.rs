//! Plain fully-connected networks with four evaluation paths: batched
//! inference, batched inference with input tangents, taped, and taped with
//! tangents. All four share layer layout so they agree to machine precision.

use rand::Rng;

use crate::dual::{self, DualVar};
use crate::error::NnError;
use crate::tape::{Tape, Var};
use crate::tensor::{matmul_nt, Tensor};

/// Sharpness of the softplus activation: steep enough to act SDF-friendly.
pub const SOFTPLUS_BETA: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Softplus,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputTransform {
    None,
    Sigmoid,
    Tanh,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub depth: usize,
    pub width: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub skip_layers: Vec<usize>,
    pub output_transform: OutputTransform,
}

impl MlpConfig {
    pub fn new(depth: usize, width: usize, input_dim: usize, output_dim: usize) -> Self {
        assert!(depth >= 1 && width >= 1);
        MlpConfig {
            depth,
            width,
            input_dim,
            output_dim,
            activation: Activation::Softplus,
            skip_layers: Vec::new(),
            output_transform: OutputTransform::None,
        }
    }

    pub fn with_activation(mut self, a: Activation) -> Self {
        self.activation = a;
        self
    }

    pub fn with_output(mut self, t: OutputTransform) -> Self {
        self.output_transform = t;
        self
    }

    pub fn with_skips(mut self, skips: Vec<usize>) -> Self {
        self.skip_layers = skips;
        self
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.depth);
        for l in 0..self.depth {
            let in_dim = if l == 0 {
                self.input_dim
            } else if self.skip_layers.contains(&l) {
                self.width + self.input_dim
            } else {
                self.width
            };
            let out_dim = if l + 1 == self.depth { self.output_dim } else { self.width };
            dims.push((out_dim, in_dim));
        }
        dims
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: Tensor, // out×in
    pub b: Tensor, // out
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub cfg: MlpConfig,
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// Xavier-uniform init: weights in ±√(6/(fan_in+fan_out)), zero bias.
    pub fn new(cfg: MlpConfig, rng: &mut impl Rng) -> Self {
        let layers = cfg
            .layer_dims()
            .iter()
            .map(|&(o, i)| {
                let bound = (6.0 / (i + o) as f64).sqrt();
                let w = Tensor::from_vec(
                    &[o, i],
                    (0..o * i).map(|_| rng.gen_range(-bound..bound)).collect(),
                );
                Linear { w, b: Tensor::zeros(&[o]) }
            })
            .collect();
        Mlp { cfg, layers }
    }

    /// Zero the last layer so the network starts as the constant zero map.
    pub fn zero_last_layer(&mut self) {
        let last = self.layers.last_mut().expect("mlp has layers");
        last.w.data.fill(0.0);
        last.b.data.fill(0.0);
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    fn activate(&self, x: f64) -> f64 {
        match self.cfg.activation {
            Activation::Relu => x.max(0.0),
            Activation::Softplus => crate::tape::softplus(SOFTPLUS_BETA * x) / SOFTPLUS_BETA,
        }
    }

    fn activate_deriv(&self, x: f64) -> f64 {
        match self.cfg.activation {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => crate::tape::sigmoid(SOFTPLUS_BETA * x),
        }
    }

    /// Batched inference: x is N×input_dim.
    pub fn forward_batch(&self, x: &Tensor) -> Result<Tensor, NnError> {
        if x.cols() != self.cfg.input_dim {
            return Err(NnError::InputDimMismatch {
                expected: self.cfg.input_dim,
                got: x.cols(),
            });
        }
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 && self.cfg.skip_layers.contains(&l) {
                h = concat(&h, x);
            }
            let mut y = matmul_nt(&h, &layer.w);
            add_bias(&mut y, &layer.b);
            if l + 1 < self.layers.len() {
                for v in &mut y.data {
                    *v = self.activate(*v);
                }
            }
            h = y;
        }
        apply_output(&mut h, self.cfg.output_transform);
        Ok(h)
    }

    /// Single-sample convenience wrapper.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let t = Tensor::from_vec(&[1, x.len()], x.to_vec());
        Ok(self.forward_batch(&t)?.data)
    }

    /// Batched inference propagating three tangent directions alongside.
    pub fn forward_dual_batch(
        &self,
        x: &Tensor,
        tans: &[Tensor; 3],
    ) -> Result<(Tensor, [Tensor; 3]), NnError> {
        if x.cols() != self.cfg.input_dim {
            return Err(NnError::InputDimMismatch {
                expected: self.cfg.input_dim,
                got: x.cols(),
            });
        }
        let mut h = x.clone();
        let mut ht = tans.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 && self.cfg.skip_layers.contains(&l) {
                h = concat(&h, x);
                for k in 0..3 {
                    ht[k] = concat(&ht[k], &tans[k]);
                }
            }
            let mut y = matmul_nt(&h, &layer.w);
            add_bias(&mut y, &layer.b);
            let mut yt = [
                matmul_nt(&ht[0], &layer.w),
                matmul_nt(&ht[1], &layer.w),
                matmul_nt(&ht[2], &layer.w),
            ];
            if l + 1 < self.layers.len() {
                for i in 0..y.data.len() {
                    let d = self.activate_deriv(y.data[i]);
                    y.data[i] = self.activate(y.data[i]);
                    for t in &mut yt {
                        t.data[i] *= d;
                    }
                }
            }
            h = y;
            ht = yt;
        }
        match self.cfg.output_transform {
            OutputTransform::None => {}
            OutputTransform::Sigmoid => {
                for i in 0..h.data.len() {
                    let s = crate::tape::sigmoid(h.data[i]);
                    h.data[i] = s;
                    let d = s * (1.0 - s);
                    for t in &mut ht {
                        t.data[i] *= d;
                    }
                }
            }
            OutputTransform::Tanh => {
                for i in 0..h.data.len() {
                    let s = h.data[i].tanh();
                    h.data[i] = s;
                    let d = 1.0 - s * s;
                    for t in &mut ht {
                        t.data[i] *= d;
                    }
                }
            }
        }
        Ok((h, ht))
    }

    /// Register every layer on a tape as trainable parameters.
    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.param(l.w.clone()), tape.param(l.b.clone())))
            .collect();
        MlpVars {
            cfg: self.cfg.clone(),
            layers,
        }
    }

    /// Register every layer as constants (frozen weights).
    pub fn register_frozen(&self, tape: &mut Tape) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.constant(l.w.clone()), tape.constant(l.b.clone())))
            .collect();
        MlpVars {
            cfg: self.cfg.clone(),
            layers,
        }
    }
}

/// Tape-side handle for an MLP whose tensors were registered on a tape.
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub cfg: MlpConfig,
    pub layers: Vec<(Var, Var)>,
}

impl MlpVars {
    /// Parameter vars in registration order (w, b per layer).
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn forward_taped(&self, tape: &mut Tape, x: Var) -> Var {
        assert_eq!(tape.value(x).cols(), self.cfg.input_dim, "taped input dim");
        let mut h = x;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            if l > 0 && self.cfg.skip_layers.contains(&l) {
                h = tape.concat_cols(&[h, x]);
            }
            let mut y = tape.linear(h, w, b);
            if l + 1 < self.layers.len() {
                y = match self.cfg.activation {
                    Activation::Relu => tape.relu(y),
                    Activation::Softplus => tape.softplus_beta(y, SOFTPLUS_BETA),
                };
            }
            h = y;
        }
        match self.cfg.output_transform {
            OutputTransform::None => h,
            OutputTransform::Sigmoid => tape.sigmoid(h),
            OutputTransform::Tanh => tape.tanh(h),
        }
    }

    pub fn forward_taped_dual(&self, tape: &mut Tape, x: DualVar) -> DualVar {
        let mut h = x;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            if l > 0 && self.cfg.skip_layers.contains(&l) {
                h = dual::concat_cols(tape, &[h, x]);
            }
            let val = tape.linear(h.val, w, b);
            // Tangents see the same weights but no bias.
            let zero_b = tape.constant(Tensor::zeros(&[tape.value(b).len()]));
            let tan = [
                tape.linear(h.tan[0], w, zero_b),
                tape.linear(h.tan[1], w, zero_b),
                tape.linear(h.tan[2], w, zero_b),
            ];
            let mut y = DualVar { val, tan };
            if l + 1 < self.layers.len() {
                y = match self.cfg.activation {
                    Activation::Relu => dual::relu(tape, y),
                    Activation::Softplus => dual::softplus_beta(tape, y, SOFTPLUS_BETA),
                };
            }
            h = y;
        }
        match self.cfg.output_transform {
            OutputTransform::None => h,
            OutputTransform::Sigmoid => dual::sigmoid(tape, h),
            OutputTransform::Tanh => dual::tanh(tape, h),
        }
    }
}

fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    let n = a.rows();
    assert_eq!(b.rows(), n);
    let (ca, cb) = (a.cols(), b.cols());
    let mut data = Vec::with_capacity(n * (ca + cb));
    for r in 0..n {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    Tensor::from_vec(&[n, ca + cb], data)
}

fn add_bias(y: &mut Tensor, b: &Tensor) {
    let o = b.len();
    for r in 0..y.rows() {
        let row = y.row_mut(r);
        for j in 0..o {
            row[j] += b.data[j];
        }
    }
}

fn apply_output(h: &mut Tensor, t: OutputTransform) {
    match t {
        OutputTransform::None => {}
        OutputTransform::Sigmoid => {
            for v in &mut h.data {
                *v = crate::tape::sigmoid(*v);
            }
        }
        OutputTransform::Tanh => {
            for v in &mut h.data {
                *v = v.tanh();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn test_mlp(seed: u64) -> Mlp {
        let cfg = MlpConfig::new(3, 16, 5, 2).with_skips(vec![2]);
        Mlp::new(cfg, &mut ChaCha12Rng::seed_from_u64(seed))
    }

    #[test]
    fn zeroed_last_layer_outputs_bias() {
        let mut mlp = test_mlp(7);
        mlp.zero_last_layer();
        let out = mlp.forward(&[0.3, -0.2, 0.9, 0.1, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
        mlp.layers.last_mut().unwrap().b.data[1] = 0.25;
        let out = mlp.forward(&[0.3, -0.2, 0.9, 0.1, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.25]);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = test_mlp(42).forward(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let b = test_mlp(42).forward(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dim_mismatch_rejected() {
        let mlp = test_mlp(1);
        assert!(mlp.forward(&[0.0; 4]).is_err());
    }

    #[test]
    fn taped_matches_batch() {
        let mlp = test_mlp(3);
        let x = Tensor::from_vec(&[2, 5], vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8, 0.9, 0.0]);
        let plain = mlp.forward_batch(&x).unwrap();
        let mut tape = Tape::new();
        let vars = mlp.register(&mut tape);
        let xv = tape.constant(x);
        let y = vars.forward_taped(&mut tape, xv);
        assert_eq!(tape.value(y).data, plain.data);
    }

    #[test]
    fn jvp_matches_finite_differences() {
        let mlp = test_mlp(11);
        let x0 = vec![0.17, -0.23, 0.31, 0.05, -0.41];
        // Tangent seeds: first three input coords.
        let x = Tensor::from_vec(&[1, 5], x0.clone());
        let mut tans = [
            Tensor::zeros(&[1, 5]),
            Tensor::zeros(&[1, 5]),
            Tensor::zeros(&[1, 5]),
        ];
        for k in 0..3 {
            tans[k].data[k] = 1.0;
        }
        let (_, jvp) = mlp.forward_dual_batch(&x, &tans).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut xp = x0.clone();
            xp[k] += h;
            let mut xm = x0.clone();
            xm[k] -= h;
            let fp = mlp.forward(&xp).unwrap();
            let fm = mlp.forward(&xm).unwrap();
            for j in 0..2 {
                let fd = (fp[j] - fm[j]) / (2.0 * h);
                let err = (jvp[k].data[j] - fd).abs() / fd.abs().max(1e-3);
                assert!(err < 1e-3, "jvp {} vs fd {}", jvp[k].data[j], fd);
            }
        }
    }

    #[test]
    fn taped_dual_matches_plain_dual() {
        let mlp = test_mlp(19);
        let x = Tensor::from_vec(&[2, 5], vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8, 0.9, 0.0]);
        let mut tans = [
            Tensor::zeros(&[2, 5]),
            Tensor::zeros(&[2, 5]),
            Tensor::zeros(&[2, 5]),
        ];
        for k in 0..3 {
            tans[k].data[k] = 1.0;
            tans[k].data[5 + k] = 1.0;
        }
        let (pv, pt) = mlp.forward_dual_batch(&x, &tans).unwrap();
        let mut tape = Tape::new();
        let vars = mlp.register(&mut tape);
        let xv = tape.constant(x);
        let tv = [
            tape.constant(tans[0].clone()),
            tape.constant(tans[1].clone()),
            tape.constant(tans[2].clone()),
        ];
        let out = vars.forward_taped_dual(&mut tape, DualVar { val: xv, tan: tv });
        assert_eq!(tape.value(out.val).data, pv.data);
        for k in 0..3 {
            for (a, b) in tape.value(out.tan[k]).data.iter().zip(&pt[k].data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
