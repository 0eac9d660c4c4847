//! Tape-recorded field evaluation so training losses can differentiate
//! through a frozen domain. Points arrive as N×3 tape values; results are
//! N×1. Grid fields are inference-only and rejected here.

use surfmap_nn::dual::{self, DualVar};
use surfmap_nn::{Tape, Tensor, Var};

use crate::error::SdfError;
use crate::field::SdfField;
use crate::polycube::PolycubeParams;
use crate::vec3::Vec3;

/// Scalar field value per row.
pub fn eval_taped(f: &SdfField, tape: &mut Tape, p: Var) -> Result<Var, SdfError> {
    match f {
        SdfField::Sphere { center, radius } => {
            let d = sub_const_row(tape, p, *center);
            let sq = tape.square(d);
            let q = tape.sum_cols(sq);
            let norm = tape.sqrt(q);
            Ok(tape.add_scalar(norm, -radius))
        }
        SdfField::Box(b) => {
            let pc = PolycubeParams::new(vec![*b]);
            let t = box_axis_terms(tape, p, &pc, 0);
            Ok(tape.max_cols(t))
        }
        SdfField::Polycube(pc) => Ok(polycube_ks_taped(tape, p, pc)),
        SdfField::Torus { major, minor } => {
            let x = tape.slice_cols(p, 0, 1);
            let y = tape.slice_cols(p, 1, 2);
            let z = tape.slice_cols(p, 2, 3);
            let x2 = tape.square(x);
            let y2 = tape.square(y);
            let xy = tape.add(x2, y2);
            let rxy = tape.sqrt(xy);
            let ring = tape.add_scalar(rxy, -major);
            let r2 = tape.square(ring);
            let z2 = tape.square(z);
            let q = tape.add(r2, z2);
            let n = tape.sqrt(q);
            Ok(tape.add_scalar(n, -minor))
        }
        SdfField::Mlp(m) => {
            let enc = m.posenc.encode_taped(tape, p);
            let input = match &m.latent {
                None => enc,
                Some(z) => {
                    let zrow = tape.constant(Tensor::from_vec(&[1, z.len()], z.clone()));
                    let n = tape.value(p).rows();
                    let zb = tape.repeat_row(zrow, n);
                    tape.concat_cols(&[enc, zb])
                }
            };
            let vars = m.mlp.register_frozen(tape);
            Ok(vars.forward_taped(tape, input))
        }
        SdfField::Composed(c) => {
            let enc = c.posenc.encode_taped(tape, p);
            let zrow = tape.constant(Tensor::from_vec(&[1, c.latent.len()], c.latent.clone()));
            let n = tape.value(p).rows();
            let zb = tape.repeat_row(zrow, n);
            let input = tape.concat_cols(&[enc, zb]);
            let vars = c.deform.register_frozen(tape);
            let disp = vars.forward_taped(tape, input);
            let mapped = tape.add(p, disp);
            eval_taped(&c.domain, tape, mapped)
        }
        SdfField::Grid(_) => Err(SdfError::Unsupported("taped grid evaluation")),
    }
}

/// Value and spatial tangents per row.
pub fn eval_taped_dual(f: &SdfField, tape: &mut Tape, p: DualVar) -> Result<DualVar, SdfError> {
    match f {
        SdfField::Sphere { center, radius } => {
            let c = const_row_dual(tape, p, *center);
            let d = dual::sub(tape, p, c);
            let sq = dual::square(tape, d);
            let q = dual::sum_cols(tape, sq);
            let norm = dual::sqrt(tape, q);
            Ok(dual::add_scalar(tape, norm, -radius))
        }
        SdfField::Box(b) => {
            let pc = PolycubeParams::new(vec![*b]);
            let t = box_axis_terms_dual(tape, p, &pc, 0);
            Ok(dual::max_cols(tape, t))
        }
        SdfField::Polycube(pc) => Ok(polycube_ks_taped_dual(tape, p, pc)),
        SdfField::Torus { major, minor } => {
            let x = dual::slice_cols(tape, p, 0, 1);
            let y = dual::slice_cols(tape, p, 1, 2);
            let z = dual::slice_cols(tape, p, 2, 3);
            let x2 = dual::square(tape, x);
            let y2 = dual::square(tape, y);
            let xy = dual::add(tape, x2, y2);
            let rxy = dual::sqrt(tape, xy);
            let ring = dual::add_scalar(tape, rxy, -major);
            let r2 = dual::square(tape, ring);
            let z2 = dual::square(tape, z);
            let q = dual::add(tape, r2, z2);
            let n = dual::sqrt(tape, q);
            Ok(dual::add_scalar(tape, n, -minor))
        }
        SdfField::Mlp(m) => {
            let enc = m.posenc.encode_taped_dual(tape, p);
            let input = match &m.latent {
                None => enc,
                Some(z) => {
                    let zrow = tape.constant(Tensor::from_vec(&[1, z.len()], z.clone()));
                    let n = tape.value(p.val).rows();
                    let zb = tape.repeat_row(zrow, n);
                    let zd = dual::constant_dual(tape, zb);
                    dual::concat_cols(tape, &[enc, zd])
                }
            };
            let vars = m.mlp.register_frozen(tape);
            Ok(vars.forward_taped_dual(tape, input))
        }
        SdfField::Composed(c) => {
            let enc = c.posenc.encode_taped_dual(tape, p);
            let zrow = tape.constant(Tensor::from_vec(&[1, c.latent.len()], c.latent.clone()));
            let n = tape.value(p.val).rows();
            let zb = tape.repeat_row(zrow, n);
            let zd = dual::constant_dual(tape, zb);
            let input = dual::concat_cols(tape, &[enc, zd]);
            let vars = c.deform.register_frozen(tape);
            let disp = vars.forward_taped_dual(tape, input);
            let mapped = dual::add(tape, p, disp);
            eval_taped_dual(&c.domain, tape, mapped)
        }
        SdfField::Grid(_) => Err(SdfError::Unsupported("taped grid evaluation")),
    }
}

/// Spatial gradient (N×3) of the field at taped points. Closed form for the
/// sphere; softmax-weighted axis frames for box unions. The dominating axis
/// per box is frozen from current values, exact almost everywhere.
pub fn grad_taped(f: &SdfField, tape: &mut Tape, p: Var) -> Result<Var, SdfError> {
    match f {
        SdfField::Sphere { center, .. } => {
            let d = sub_const_row(tape, p, *center);
            let sq = tape.square(d);
            let q = tape.sum_cols(sq);
            let norm = tape.sqrt(q);
            let inv = tape.recip(norm);
            Ok(tape.mul_col_broadcast(d, inv))
        }
        SdfField::Box(b) => {
            let pc = PolycubeParams::new(vec![*b]);
            grad_taped(&SdfField::Polycube(pc), tape, p)
        }
        SdfField::Polycube(pc) => {
            // ∇KS = Σ_i softmax(−λφ)_i · ∇φ_i with ∇φ_i the signed axis frame.
            let lam = pc.ks_lambda;
            let n = tape.value(p).rows();
            let mut phis = Vec::with_capacity(pc.k());
            let mut frames = Vec::with_capacity(pc.k());
            for (i, b) in pc.boxes.iter().enumerate() {
                let terms = box_axis_terms(tape, p, pc, i);
                let phi = tape.max_cols(terms);
                phis.push(phi);
                // Signed one-hot frame from current values.
                let pv = tape.value(p);
                let mut frame = Tensor::zeros(&[n, 3]);
                for r in 0..n {
                    let pt = Vec3::from_array([pv.row(r)[0], pv.row(r)[1], pv.row(r)[2]]);
                    let g = crate::polycube::box_sdf_gradient(b, pt);
                    frame.row_mut(r).copy_from_slice(&g.to_array());
                }
                frames.push(tape.constant(frame));
            }
            let phi_mat = tape.concat_cols(&phis);
            let neg = tape.mul_scalar(phi_mat, -lam);
            let shift = tape.max_cols(neg);
            let nshift = tape.neg(shift);
            let centered = tape.add_col_broadcast(neg, nshift);
            let e = tape.exp(centered);
            let denom = tape.sum_cols(e);
            let inv = tape.recip(denom);
            let w = tape.mul_col_broadcast(e, inv);
            let mut acc: Option<Var> = None;
            for (i, frame) in frames.iter().enumerate() {
                let wi = tape.slice_cols(w, i, i + 1);
                let term = tape.mul_col_broadcast(*frame, wi);
                acc = Some(match acc {
                    None => term,
                    Some(a) => tape.add(a, term),
                });
            }
            Ok(acc.expect("at least one box"))
        }
        _ => Err(SdfError::Unsupported("taped gradient for this variant")),
    }
}

fn sub_const_row(tape: &mut Tape, p: Var, c: Vec3) -> Var {
    let n = tape.value(p).rows();
    let mut t = Tensor::zeros(&[n, 3]);
    for r in 0..n {
        t.row_mut(r).copy_from_slice(&c.to_array());
    }
    let cv = tape.constant(t);
    tape.sub(p, cv)
}

fn const_row_dual(tape: &mut Tape, like: DualVar, c: Vec3) -> DualVar {
    let n = tape.value(like.val).rows();
    let mut t = Tensor::zeros(&[n, 3]);
    for r in 0..n {
        t.row_mut(r).copy_from_slice(&c.to_array());
    }
    let cv = tape.constant(t);
    dual::constant_dual(tape, cv)
}

/// N×3 per-axis box terms |p−c|−h for box `i`.
fn box_axis_terms(tape: &mut Tape, p: Var, pc: &PolycubeParams, i: usize) -> Var {
    let b = &pc.boxes[i];
    let d = sub_const_row(tape, p, b.center);
    let ad = tape.abs(d);
    let n = tape.value(p).rows();
    let mut h = Tensor::zeros(&[n, 3]);
    for r in 0..n {
        h.row_mut(r).copy_from_slice(&b.half_extents.to_array());
    }
    let hv = tape.constant(h);
    tape.sub(ad, hv)
}

fn box_axis_terms_dual(tape: &mut Tape, p: DualVar, pc: &PolycubeParams, i: usize) -> DualVar {
    let b = &pc.boxes[i];
    let c = const_row_dual(tape, p, b.center);
    let d = dual::sub(tape, p, c);
    let ad = dual::abs(tape, d);
    let h = const_row_dual(tape, p, b.half_extents);
    dual::sub(tape, ad, h)
}

fn polycube_ks_taped(tape: &mut Tape, p: Var, pc: &PolycubeParams) -> Var {
    let lam = pc.ks_lambda;
    let phis: Vec<Var> = (0..pc.k())
        .map(|i| {
            let t = box_axis_terms(tape, p, pc, i);
            tape.max_cols(t)
        })
        .collect();
    let phi = tape.concat_cols(&phis);
    // m − (1/λ)·ln Σ exp(−λ(φ−m)) with m the row min of φ (max of −φ).
    let neg = tape.mul_scalar(phi, -lam);
    let mx = tape.max_cols(neg);
    let nmx = tape.neg(mx);
    let centered = tape.add_col_broadcast(neg, nmx);
    let e = tape.exp(centered);
    let s = tape.sum_cols(e);
    let l = tape.ln(s);
    let lse = tape.add(l, mx);
    tape.mul_scalar(lse, -1.0 / lam)
}

fn polycube_ks_taped_dual(tape: &mut Tape, p: DualVar, pc: &PolycubeParams) -> DualVar {
    let lam = pc.ks_lambda;
    let phis: Vec<DualVar> = (0..pc.k())
        .map(|i| {
            let t = box_axis_terms_dual(tape, p, pc, i);
            dual::max_cols(tape, t)
        })
        .collect();
    let phi = dual::concat_cols(tape, &phis);
    let neg = dual::mul_scalar(tape, phi, -lam);
    let mx = dual::max_cols(tape, neg);
    let nmx = dual::neg(tape, mx);
    // Broadcast subtraction of the row max; tangents handled explicitly.
    let centered_val = tape.add_col_broadcast(neg.val, nmx.val);
    let k = pc.k();
    let centered_tan = [
        broadcast_add_tan(tape, neg.tan[0], nmx.tan[0], k),
        broadcast_add_tan(tape, neg.tan[1], nmx.tan[1], k),
        broadcast_add_tan(tape, neg.tan[2], nmx.tan[2], k),
    ];
    let centered = DualVar { val: centered_val, tan: centered_tan };
    let e = dual::exp(tape, centered);
    let s = dual::sum_cols(tape, e);
    let l = dual::ln(tape, s);
    let lse = dual::add(tape, l, mx);
    dual::mul_scalar(tape, lse, -1.0 / lam)
}

fn broadcast_add_tan(tape: &mut Tape, x: Var, c: Var, _k: usize) -> Var {
    tape.add_col_broadcast(x, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polycube::BoxParams;
    use crate::vec3::vec3;

    fn points() -> Vec<Vec3> {
        vec![
            vec3(0.3, -0.2, 0.8),
            vec3(-0.7, 0.4, 0.1),
            vec3(0.05, 0.9, -0.55),
        ]
    }

    fn as_tensor(pts: &[Vec3]) -> Tensor {
        Tensor::from_vec(&[pts.len(), 3], pts.iter().flat_map(|p| p.to_array()).collect())
    }

    #[test]
    fn taped_matches_plain_eval() {
        let fields = [
            SdfField::sphere(vec3(0.1, 0.0, -0.2), 0.45),
            SdfField::Box(BoxParams::new(vec3(0.0, 0.1, 0.0), vec3(0.4, 0.3, 0.5))),
            SdfField::Polycube(PolycubeParams::new(vec![
                BoxParams::new(vec3(-0.3, 0.0, 0.0), vec3(0.3, 0.2, 0.2)),
                BoxParams::new(vec3(0.3, 0.1, 0.0), vec3(0.2, 0.35, 0.2)),
            ])),
            SdfField::Torus { major: 0.5, minor: 0.2 },
        ];
        for f in &fields {
            let pts = points();
            let mut tape = Tape::new();
            let pv = tape.constant(as_tensor(&pts));
            let s = eval_taped(f, &mut tape, pv).unwrap();
            for (i, &p) in pts.iter().enumerate() {
                let plain = f.eval(p);
                let taped = tape.value(s).data[i];
                assert!(
                    (plain - taped).abs() < 1e-12,
                    "taped {} vs plain {}",
                    taped,
                    plain
                );
            }
        }
    }

    #[test]
    fn taped_dual_tangents_match_grad() {
        let fields = [
            SdfField::sphere(vec3(0.1, 0.0, -0.2), 0.45),
            SdfField::Polycube(PolycubeParams::new(vec![
                BoxParams::new(vec3(-0.3, 0.0, 0.0), vec3(0.3, 0.2, 0.2)),
                BoxParams::new(vec3(0.3, 0.1, 0.0), vec3(0.2, 0.35, 0.2)),
            ])),
        ];
        for f in &fields {
            let pts = points();
            let mut tape = Tape::new();
            let seeded = surfmap_nn::dual::seed_positions(&mut tape, as_tensor(&pts));
            let s = eval_taped_dual(f, &mut tape, seeded).unwrap();
            let g = surfmap_nn::dual::gradient(&mut tape, s);
            for (i, &p) in pts.iter().enumerate() {
                let (_, grad) = f.eval_grad(p);
                let row = tape.value(g).row(i).to_vec();
                for (a, b) in row.iter().zip(grad.to_array()) {
                    assert!((a - b).abs() < 1e-10, "dual {} vs closed {}", a, b);
                }
            }
        }
    }

    #[test]
    fn grad_taped_matches_eval_grad() {
        let pc = SdfField::Polycube(PolycubeParams::new(vec![
            BoxParams::new(vec3(-0.3, 0.0, 0.0), vec3(0.3, 0.2, 0.2)),
            BoxParams::new(vec3(0.3, 0.1, 0.0), vec3(0.2, 0.35, 0.2)),
        ]));
        let pts = points();
        let mut tape = Tape::new();
        let pv = tape.constant(as_tensor(&pts));
        let g = grad_taped(&pc, &mut tape, pv).unwrap();
        for (i, &p) in pts.iter().enumerate() {
            let (_, grad) = pc.eval_grad(p);
            let row = tape.value(g).row(i).to_vec();
            for (a, b) in row.iter().zip(grad.to_array()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
