//! Per-object latent codes.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct LatentCode {
    pub id: String,
    /// Stored 1×d so it can broadcast over sample batches directly.
    pub z: Tensor,
}

impl LatentCode {
    /// Fresh code drawn from N(0, 0.01²).
    pub fn new(id: impl Into<String>, dim: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        LatentCode {
            id: id.into(),
            z: Tensor::from_vec(&[1, dim], (0..dim).map(|_| normal.sample(rng)).collect()),
        }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn norm(&self) -> f64 {
        self.z.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}
