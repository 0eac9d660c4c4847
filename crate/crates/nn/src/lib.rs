//! Minimal network substrate: tensor autodiff tape, MLPs, positional
//! encoding, latent codes and Adam. Everything is f64 and deterministic under
//! a fixed seed on a single thread; the matrix kernels parallelize with a
//! fixed reduction order, so multi-threaded runs stay bit-identical too.

pub mod adam;
pub mod checkpoint;
pub mod dual;
pub mod error;
pub mod latent;
pub mod mlp;
pub mod posenc;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, cosine_lr, AdamParams, AdamState, StepOutcome};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use dual::DualVar;
pub use error::NnError;
pub use latent::LatentCode;
pub use mlp::{Activation, Mlp, MlpConfig, MlpVars, OutputTransform, SOFTPLUS_BETA};
pub use posenc::PosEncConfig;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Derive an independent stream seed from a base seed and a purpose tag.
/// Used everywhere a sub-task needs its own RNG so that resuming training at
/// epoch k reproduces the exact sample draws.
pub fn stream_seed(base: u64, tag: &str, index: u64) -> u64 {
    // FNV-1a over the tag, then a splitmix64-style mix.
    let mut h = 0xcbf29ce484222325u64;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = base ^ h ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
