//! Forward-mode tangent propagation layered on top of the reverse tape.
//!
//! A [`DualVar`] carries a value tensor plus three tangent tensors (∂/∂x, ∂/∂y,
//! ∂/∂z of some seed coordinates). All four live on the tape, so spatial
//! gradients built this way stay differentiable with respect to parameters —
//! which is what the Eikonal term and normal inputs need.

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct DualVar {
    pub val: Var,
    pub tan: [Var; 3],
}

/// Seed a constant N×3 position batch with identity tangents.
pub fn seed_positions(tape: &mut Tape, positions: Tensor) -> DualVar {
    let n = positions.rows();
    assert_eq!(positions.cols(), 3, "seed_positions expects N×3");
    let val = tape.constant(positions);
    let mut tan = [val; 3];
    for (k, t) in tan.iter_mut().enumerate() {
        let mut basis = Tensor::zeros(&[n, 3]);
        for r in 0..n {
            basis.data[r * 3 + k] = 1.0;
        }
        *t = tape.constant(basis);
    }
    DualVar { val, tan }
}

/// Wrap a value whose tangents are zero (constants w.r.t. the seed coords).
pub fn constant_dual(tape: &mut Tape, val: Var) -> DualVar {
    let shape = tape.value(val).shape.clone();
    let z = tape.constant(Tensor::zeros(&shape));
    DualVar { val, tan: [z, z, z] }
}

pub fn add(tape: &mut Tape, a: DualVar, b: DualVar) -> DualVar {
    DualVar {
        val: tape.add(a.val, b.val),
        tan: [
            tape.add(a.tan[0], b.tan[0]),
            tape.add(a.tan[1], b.tan[1]),
            tape.add(a.tan[2], b.tan[2]),
        ],
    }
}

pub fn sub(tape: &mut Tape, a: DualVar, b: DualVar) -> DualVar {
    DualVar {
        val: tape.sub(a.val, b.val),
        tan: [
            tape.sub(a.tan[0], b.tan[0]),
            tape.sub(a.tan[1], b.tan[1]),
            tape.sub(a.tan[2], b.tan[2]),
        ],
    }
}

pub fn mul(tape: &mut Tape, a: DualVar, b: DualVar) -> DualVar {
    let val = tape.mul(a.val, b.val);
    let mut tan = [val; 3];
    for k in 0..3 {
        let t1 = tape.mul(a.tan[k], b.val);
        let t2 = tape.mul(a.val, b.tan[k]);
        tan[k] = tape.add(t1, t2);
    }
    DualVar { val, tan }
}

pub fn mul_scalar(tape: &mut Tape, a: DualVar, c: f64) -> DualVar {
    DualVar {
        val: tape.mul_scalar(a.val, c),
        tan: [
            tape.mul_scalar(a.tan[0], c),
            tape.mul_scalar(a.tan[1], c),
            tape.mul_scalar(a.tan[2], c),
        ],
    }
}

pub fn add_scalar(tape: &mut Tape, a: DualVar, c: f64) -> DualVar {
    DualVar {
        val: tape.add_scalar(a.val, c),
        tan: a.tan,
    }
}

/// Chain rule for an elementwise map: tangents multiply by f'(val).
fn chain(tape: &mut Tape, a: DualVar, val: Var, dval: Var) -> DualVar {
    let mut tan = [val; 3];
    for k in 0..3 {
        tan[k] = tape.mul(a.tan[k], dval);
    }
    DualVar { val, tan }
}

pub fn exp(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.exp(a.val);
    chain(tape, a, val, val)
}

pub fn ln(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.ln(a.val);
    let dval = tape.recip(a.val);
    chain(tape, a, val, dval)
}

pub fn sqrt(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.sqrt(a.val);
    let inv = tape.recip(val);
    let dval = tape.mul_scalar(inv, 0.5);
    chain(tape, a, val, dval)
}

pub fn abs(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.abs(a.val);
    let dval = tape.sign(a.val);
    chain(tape, a, val, dval)
}

pub fn square(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.square(a.val);
    let dval = tape.mul_scalar(a.val, 2.0);
    chain(tape, a, val, dval)
}

pub fn sin(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.sin(a.val);
    let dval = tape.cos(a.val);
    chain(tape, a, val, dval)
}

pub fn cos(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.cos(a.val);
    let s = tape.sin(a.val);
    let dval = tape.neg(s);
    chain(tape, a, val, dval)
}

pub fn relu(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.relu(a.val);
    let dval = tape.step(a.val);
    chain(tape, a, val, dval)
}

pub fn softplus_beta(tape: &mut Tape, a: DualVar, beta: f64) -> DualVar {
    let val = tape.softplus_beta(a.val, beta);
    let scaled = tape.mul_scalar(a.val, beta);
    let dval = tape.sigmoid(scaled);
    chain(tape, a, val, dval)
}

pub fn sigmoid(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.sigmoid(a.val);
    let neg = tape.neg(val);
    let one_minus = tape.add_scalar(neg, 1.0);
    let dval = tape.mul(val, one_minus);
    chain(tape, a, val, dval)
}

pub fn tanh(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.tanh(a.val);
    let sq = tape.square(val);
    let neg = tape.neg(sq);
    let dval = tape.add_scalar(neg, 1.0);
    chain(tape, a, val, dval)
}

pub fn neg(tape: &mut Tape, a: DualVar) -> DualVar {
    DualVar {
        val: tape.neg(a.val),
        tan: [
            tape.neg(a.tan[0]),
            tape.neg(a.tan[1]),
            tape.neg(a.tan[2]),
        ],
    }
}

pub fn concat_cols(tape: &mut Tape, parts: &[DualVar]) -> DualVar {
    let vals: Vec<Var> = parts.iter().map(|p| p.val).collect();
    let val = tape.concat_cols(&vals);
    let mut tan = [val; 3];
    for k in 0..3 {
        let ts: Vec<Var> = parts.iter().map(|p| p.tan[k]).collect();
        tan[k] = tape.concat_cols(&ts);
    }
    DualVar { val, tan }
}

pub fn slice_cols(tape: &mut Tape, a: DualVar, from: usize, to: usize) -> DualVar {
    DualVar {
        val: tape.slice_cols(a.val, from, to),
        tan: [
            tape.slice_cols(a.tan[0], from, to),
            tape.slice_cols(a.tan[1], from, to),
            tape.slice_cols(a.tan[2], from, to),
        ],
    }
}

pub fn gather_rows(tape: &mut Tape, a: DualVar, idx: &[usize]) -> DualVar {
    DualVar {
        val: tape.gather_rows(a.val, idx),
        tan: [
            tape.gather_rows(a.tan[0], idx),
            tape.gather_rows(a.tan[1], idx),
            tape.gather_rows(a.tan[2], idx),
        ],
    }
}

pub fn sum_cols(tape: &mut Tape, a: DualVar) -> DualVar {
    DualVar {
        val: tape.sum_cols(a.val),
        tan: [
            tape.sum_cols(a.tan[0]),
            tape.sum_cols(a.tan[1]),
            tape.sum_cols(a.tan[2]),
        ],
    }
}

/// Row max; tangents follow the argmax branch.
pub fn max_cols(tape: &mut Tape, a: DualVar) -> DualVar {
    let val = tape.max_cols(a.val);
    let t = tape.value(a.val);
    let n = t.rows();
    let mut arg = Vec::with_capacity(n);
    for r in 0..n {
        let row = t.row(r);
        let mut bi = 0usize;
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > row[bi] {
                bi = i;
            }
        }
        arg.push(bi);
    }
    DualVar {
        val,
        tan: [
            tape.take_col_per_row(a.tan[0], &arg),
            tape.take_col_per_row(a.tan[1], &arg),
            tape.take_col_per_row(a.tan[2], &arg),
        ],
    }
}

/// Extract the spatial gradient (N×3) of a scalar-per-row dual (N×1).
pub fn gradient(tape: &mut Tape, a: DualVar) -> Var {
    tape.concat_cols(&[a.tan[0], a.tan[1], a.tan[2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangents_match_closed_form() {
        // f(p) = exp(x)·sin(y) + z²; check tangents at a point.
        let p = Tensor::from_vec(&[1, 3], vec![0.3, 0.7, -0.4]);
        let mut tape = Tape::new();
        let d = seed_positions(&mut tape, p.clone());
        let x = slice_cols(&mut tape, d, 0, 1);
        let y = slice_cols(&mut tape, d, 1, 2);
        let z = slice_cols(&mut tape, d, 2, 3);
        let ex = exp(&mut tape, x);
        let sy = sin(&mut tape, y);
        let prod = mul(&mut tape, ex, sy);
        let z2 = square(&mut tape, z);
        let f = add(&mut tape, prod, z2);
        let g = gradient(&mut tape, f);
        let gv = tape.value(g);
        let (px, py, pz) = (0.3f64, 0.7f64, -0.4f64);
        assert!((gv.data[0] - px.exp() * py.sin()).abs() < 1e-12);
        assert!((gv.data[1] - px.exp() * py.cos()).abs() < 1e-12);
        assert!((gv.data[2] - 2.0 * pz).abs() < 1e-12);
    }
}
