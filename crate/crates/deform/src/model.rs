//! The deformation bundle: forward and inverse displacement networks over a
//! frozen domain SDF, with per-object shape codes.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use surfmap_nn::dual::{self, DualVar};
use surfmap_nn::{
    stream_seed, Activation, LatentCode, Mlp, MlpConfig, MlpVars, PosEncConfig, Tape, Tensor, Var,
};
use surfmap_sdf::{ComposedField, SdfField, Vec3};

use crate::DeformError;

#[derive(Clone, Debug)]
pub struct DeformConfig {
    pub posenc: PosEncConfig,
    pub latent_dim: usize,
    pub depth: usize,
    pub width: usize,
}

impl Default for DeformConfig {
    fn default() -> Self {
        DeformConfig {
            posenc: PosEncConfig::new(6),
            latent_dim: 16,
            depth: 4,
            width: 64,
        }
    }
}

impl DeformConfig {
    fn mlp_config(&self) -> MlpConfig {
        MlpConfig::new(
            self.depth,
            self.width,
            self.posenc.dim() + self.latent_dim,
            3,
        )
        .with_activation(Activation::Softplus)
    }
}

#[derive(Clone, Debug)]
pub struct DeformModel {
    pub f_def: Mlp,
    pub f_inv: Mlp,
    /// Frozen after the domain fit.
    pub domain: SdfField,
    /// Shape code per object, stored 1×d.
    pub codes: BTreeMap<String, Tensor>,
    pub posenc: PosEncConfig,
    pub latent_dim: usize,
}

impl DeformModel {
    /// Both displacement networks start as the identity map (zeroed last
    /// layer); codes start near zero.
    pub fn new(cfg: &DeformConfig, domain: SdfField, objects: &[String], seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(seed, "deform-init", 0));
        let mut f_def = Mlp::new(cfg.mlp_config(), &mut rng);
        f_def.zero_last_layer();
        let mut f_inv = Mlp::new(cfg.mlp_config(), &mut rng);
        f_inv.zero_last_layer();
        let mut codes = BTreeMap::new();
        for (i, id) in objects.iter().enumerate() {
            let mut crng =
                ChaCha12Rng::seed_from_u64(stream_seed(seed, "shape-code", i as u64));
            codes.insert(
                id.clone(),
                LatentCode::new(id.clone(), cfg.latent_dim, &mut crng).z,
            );
        }
        DeformModel {
            f_def,
            f_inv,
            domain,
            codes,
            posenc: cfg.posenc,
            latent_dim: cfg.latent_dim,
        }
    }

    pub fn code(&self, object: &str) -> Result<&Tensor, DeformError> {
        self.codes
            .get(object)
            .ok_or_else(|| DeformError::UnknownObject(object.to_string()))
    }

    pub fn object_ids(&self) -> Vec<String> {
        self.codes.keys().cloned().collect()
    }

    fn encode_input(&self, pts: &[Vec3], code: &Tensor) -> Tensor {
        let n = pts.len();
        let raw = Tensor::from_vec(&[n, 3], pts.iter().flat_map(|p| p.to_array()).collect());
        let enc = self.posenc.encode_batch(&raw);
        let d = enc.cols() + code.len();
        let mut data = Vec::with_capacity(n * d);
        for r in 0..n {
            data.extend_from_slice(enc.row(r));
            data.extend_from_slice(&code.data);
        }
        Tensor::from_vec(&[n, d], data)
    }

    pub fn displacement_batch(&self, pts: &[Vec3], object: &str) -> Result<Vec<Vec3>, DeformError> {
        let x = self.encode_input(pts, self.code(object)?);
        let d = self.f_def.forward_batch(&x)?;
        Ok((0..pts.len())
            .map(|i| Vec3::from_array([d.row(i)[0], d.row(i)[1], d.row(i)[2]]))
            .collect())
    }

    /// p' = p + F_def(p, z_s)
    pub fn forward_map_batch(&self, pts: &[Vec3], object: &str) -> Result<Vec<Vec3>, DeformError> {
        Ok(self
            .displacement_batch(pts, object)?
            .into_iter()
            .zip(pts)
            .map(|(d, &p)| p + d)
            .collect())
    }

    pub fn forward_map(&self, p: Vec3, object: &str) -> Result<Vec3, DeformError> {
        Ok(self.forward_map_batch(std::slice::from_ref(&p), object)?[0])
    }

    /// p'' = p' + F_inv(p', z_s)
    pub fn inverse_map_batch(
        &self,
        pts: &[Vec3],
        object: &str,
    ) -> Result<Vec<Vec3>, DeformError> {
        let x = self.encode_input(pts, self.code(object)?);
        let d = self.f_inv.forward_batch(&x)?;
        Ok((0..pts.len())
            .map(|i| pts[i] + Vec3::from_array([d.row(i)[0], d.row(i)[1], d.row(i)[2]]))
            .collect())
    }

    pub fn inverse_map(&self, p_prime: Vec3, object: &str) -> Result<Vec3, DeformError> {
        Ok(self.inverse_map_batch(std::slice::from_ref(&p_prime), object)?[0])
    }

    /// s(p) = F_sdf(p + F_def(p, z_s))
    pub fn composed_sdf_batch(&self, pts: &[Vec3], object: &str) -> Result<Vec<f64>, DeformError> {
        let mapped = self.forward_map_batch(pts, object)?;
        Ok(self.domain.eval_batch(&mapped))
    }

    pub fn composed_sdf(&self, p: Vec3, object: &str) -> Result<f64, DeformError> {
        Ok(self.composed_sdf_batch(std::slice::from_ref(&p), object)?[0])
    }

    /// Value, spatial gradient and mapped point per input point.
    pub fn composed_eval_grad_batch(
        &self,
        pts: &[Vec3],
        object: &str,
    ) -> Result<Vec<(f64, Vec3, Vec3)>, DeformError> {
        let code = self.code(object)?;
        let n = pts.len();
        let raw = Tensor::from_vec(&[n, 3], pts.iter().flat_map(|p| p.to_array()).collect());
        let (enc, enc_t) = self.posenc.encode_dual_batch(&raw);
        let d = enc.cols() + code.len();
        let mut data = Vec::with_capacity(n * d);
        let mut tdata = [
            Vec::with_capacity(n * d),
            Vec::with_capacity(n * d),
            Vec::with_capacity(n * d),
        ];
        let zeros = vec![0.0; code.len()];
        for r in 0..n {
            data.extend_from_slice(enc.row(r));
            data.extend_from_slice(&code.data);
            for k in 0..3 {
                tdata[k].extend_from_slice(enc_t[k].row(r));
                tdata[k].extend_from_slice(&zeros);
            }
        }
        let x = Tensor::from_vec(&[n, d], data);
        let tans = tdata.map(|t| Tensor::from_vec(&[n, d], t));
        let (disp, disp_t) = self.f_def.forward_dual_batch(&x, &tans)?;
        let mapped: Vec<Vec3> = pts
            .iter()
            .enumerate()
            .map(|(i, &p)| p + Vec3::from_array([disp.row(i)[0], disp.row(i)[1], disp.row(i)[2]]))
            .collect();
        let inner = self.domain.eval_grad_batch(&mapped);
        Ok(inner
            .into_iter()
            .enumerate()
            .map(|(i, (s, gd))| {
                let mut g = Vec3::ZERO;
                for k in 0..3 {
                    let mut jk = Vec3::from_array([
                        disp_t[k].row(i)[0],
                        disp_t[k].row(i)[1],
                        disp_t[k].row(i)[2],
                    ]);
                    jk = jk.with_component(k, jk.component(k) + 1.0);
                    g = g.with_component(k, jk.dot(gd));
                }
                (s, g, mapped[i])
            })
            .collect())
    }

    /// Snapshot the composition as a standalone field (for meshing, swaps).
    pub fn composed_field(&self, object: &str) -> Result<SdfField, DeformError> {
        Ok(SdfField::Composed(ComposedField {
            domain: Box::new(self.domain.clone()),
            deform: self.f_def.clone(),
            posenc: self.posenc,
            latent: self.code(object)?.data.clone(),
        }))
    }

    /// Register trainable tensors on a tape; order is stable: f_def layers,
    /// f_inv layers, then the requested object codes in the given order.
    pub fn register(&self, tape: &mut Tape, objects: &[String]) -> Result<DeformVars, DeformError> {
        let f_def = self.f_def.register(tape);
        let f_inv = self.f_inv.register(tape);
        let mut codes = BTreeMap::new();
        for id in objects {
            codes.insert(id.clone(), tape.param(self.code(id)?.clone()));
        }
        Ok(DeformVars { f_def, f_inv, codes })
    }

    /// Flat mutable views in the same order as [`DeformModel::register`].
    pub fn params_mut(&mut self, objects: &[String]) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(self.f_def.params_mut());
        out.extend(self.f_inv.params_mut());
        let ids: Vec<String> = objects.to_vec();
        for (id, t) in self.codes.iter_mut() {
            if ids.contains(id) {
                out.push(t);
            }
        }
        out
    }
}

/// Tape-side handles for one training step.
pub struct DeformVars {
    pub f_def: MlpVars,
    pub f_inv: MlpVars,
    pub codes: BTreeMap<String, Var>,
}

impl DeformVars {
    /// Vars in the registration order used by `DeformModel::params_mut`.
    pub fn all_vars(&self) -> Vec<Var> {
        let mut v = self.f_def.vars();
        v.extend(self.f_inv.vars());
        v.extend(self.codes.values().copied());
        v
    }
}

/// Encode points (a taped N×3 value) with a taped code row appended.
pub fn taped_encode(
    tape: &mut Tape,
    posenc: &PosEncConfig,
    pts: Var,
    code: Var,
) -> Var {
    let n = tape.value(pts).rows();
    let enc = posenc.encode_taped(tape, pts);
    let zb = tape.repeat_row(code, n);
    tape.concat_cols(&[enc, zb])
}

/// Taped forward map; returns (p', displacement).
pub fn taped_forward(
    tape: &mut Tape,
    vars: &DeformVars,
    posenc: &PosEncConfig,
    object: &str,
    pts: Var,
) -> (Var, Var) {
    let code = vars.codes[object];
    let x = taped_encode(tape, posenc, pts, code);
    let disp = vars.f_def.forward_taped(tape, x);
    (tape.add(pts, disp), disp)
}

/// Taped inverse map; returns (p'', displacement).
pub fn taped_inverse(
    tape: &mut Tape,
    vars: &DeformVars,
    posenc: &PosEncConfig,
    object: &str,
    pts_prime: Var,
) -> (Var, Var) {
    let code = vars.codes[object];
    let x = taped_encode(tape, posenc, pts_prime, code);
    let disp = vars.f_inv.forward_taped(tape, x);
    (tape.add(pts_prime, disp), disp)
}

/// Taped forward map with spatial tangents; returns the mapped dual point.
pub fn taped_forward_dual(
    tape: &mut Tape,
    vars: &DeformVars,
    posenc: &PosEncConfig,
    object: &str,
    pts: DualVar,
) -> DualVar {
    let code = vars.codes[object];
    let n = tape.value(pts.val).rows();
    let enc = posenc.encode_taped_dual(tape, pts);
    let zb = tape.repeat_row(code, n);
    let zd = dual::constant_dual(tape, zb);
    let x = dual::concat_cols(tape, &[enc, zd]);
    let disp = vars.f_def.forward_taped_dual(tape, x);
    dual::add(tape, pts, disp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use surfmap_sdf::vec3;

    fn toy_model() -> DeformModel {
        let cfg = DeformConfig {
            posenc: PosEncConfig::new(4),
            latent_dim: 8,
            depth: 3,
            width: 16,
        };
        DeformModel::new(
            &cfg,
            SdfField::sphere(Vec3::ZERO, 0.5),
            &["obj".to_string()],
            7,
        )
    }

    #[test]
    fn zero_init_is_identity() {
        let m = toy_model();
        let p = vec3(0.3, -0.2, 0.7);
        assert_eq!(m.forward_map(p, "obj").unwrap(), p);
        assert_eq!(m.inverse_map(p, "obj").unwrap(), p);
        // Composed SDF reduces to the domain.
        assert!((m.composed_sdf(vec3(1.0, 0.0, 0.0), "obj").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic() {
        let m = toy_model();
        let p = vec3(0.1, 0.2, 0.3);
        let a = m.forward_map(p, "obj").unwrap();
        let b = m.forward_map(p, "obj").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_object_errors() {
        let m = toy_model();
        assert!(m.forward_map(Vec3::ZERO, "nope").is_err());
    }

    #[test]
    fn taped_forward_matches_batch() {
        let mut m = toy_model();
        // Give the net something to say.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        m.f_def = Mlp::new(m.f_def.cfg.clone(), &mut rng);
        let pts = vec![vec3(0.1, 0.2, -0.3), vec3(-0.5, 0.4, 0.2)];
        let plain = m.forward_map_batch(&pts, "obj").unwrap();
        let mut tape = Tape::new();
        let vars = m.register(&mut tape, &["obj".to_string()]).unwrap();
        let pv = tape.constant(Tensor::from_vec(
            &[2, 3],
            pts.iter().flat_map(|p| p.to_array()).collect(),
        ));
        let (mapped, _) = taped_forward(&mut tape, &vars, &m.posenc, "obj", pv);
        for (i, p) in plain.iter().enumerate() {
            let row = tape.value(mapped).row(i);
            for (a, b) in row.iter().zip(p.to_array()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn composed_grad_matches_field_snapshot() {
        let mut m = toy_model();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        m.f_def = Mlp::new(m.f_def.cfg.clone(), &mut rng);
        let pts = vec![vec3(0.4, 0.1, -0.2), vec3(-0.3, 0.6, 0.1)];
        let direct = m.composed_eval_grad_batch(&pts, "obj").unwrap();
        let snapshot = m.composed_field("obj").unwrap();
        for (i, &p) in pts.iter().enumerate() {
            let (s, g) = snapshot.eval_grad(p);
            assert!((direct[i].0 - s).abs() < 1e-12);
            assert!((direct[i].1 - g).norm() < 1e-10);
        }
    }
}
