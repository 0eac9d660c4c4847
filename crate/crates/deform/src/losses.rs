//! Parameterization losses, built on the tape so one code path serves both
//! training and plain evaluation.

use surfmap_nn::dual;
use surfmap_nn::{Tape, Tensor, Var};
use surfmap_sdf::{taped as sdf_taped, Vec3};

use crate::model::{taped_forward, taped_forward_dual, DeformModel, DeformVars};
use crate::neighbors::{laplacian_weights, sample_neighbors_batch, NeighborSet};
use crate::{DeformError, SurfaceSample};

/// Keeps row norms differentiable at zero displacement.
pub const NORM_EPS: f64 = 1e-12;

/// Loss coefficients of the total objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lambdas {
    pub eikonal: f64,
    pub cycle: f64,
    pub smooth: f64,
    pub laplace: f64,
    pub shading: f64,
    pub code: f64,
}

impl Default for Lambdas {
    fn default() -> Self {
        Lambdas {
            eikonal: 0.01,
            cycle: 0.01,
            smooth: 0.001,
            laplace: 0.001,
            shading: 0.01,
            code: 0.01,
        }
    }
}

pub fn tensor_from_points(pts: &[Vec3]) -> Tensor {
    Tensor::from_vec(&[pts.len(), 3], pts.iter().flat_map(|p| p.to_array()).collect())
}

/// Row L2 norms with a stabilizing epsilon: N×D -> N×1.
pub fn row_norms(tape: &mut Tape, x: Var) -> Var {
    let sq = tape.square(x);
    let s = tape.sum_cols(sq);
    let se = tape.add_scalar(s, NORM_EPS);
    tape.sqrt(se)
}

/// mean ‖F_def(p)‖ + mean ‖F_inv(p')‖ from already-computed displacements.
pub fn build_smooth(tape: &mut Tape, disp_fwd: Var, disp_inv: Var) -> Var {
    let nf = row_norms(tape, disp_fwd);
    let ni = row_norms(tape, disp_inv);
    let mf = tape.mean_all(nf);
    let mi = tape.mean_all(ni);
    tape.add(mf, mi)
}

/// mean of λ(p)·‖p − p''‖ over the batch.
pub fn build_cycle(tape: &mut Tape, p: Var, p_dd: Var, weights: Var) -> Var {
    let d = tape.sub(p, p_dd);
    let n = row_norms(tape, d);
    let w = tape.mul(n, weights);
    tape.mean_all(w)
}

/// mean over valid samples of ‖Δ(p) − ⟨Δ(p),n⟩n‖ with n the unit domain
/// gradient at p'. Inputs: base points and their neighbor sets (padding-free:
/// samples without enough neighbors are filtered by the caller).
pub struct LaplaceBatch {
    /// Base points, one row each.
    pub base: Vec<Vec3>,
    /// Flattened neighbors, aligned with `base_index`.
    pub neighbors: Vec<Vec3>,
    /// Which base row each neighbor belongs to.
    pub base_index: Vec<usize>,
    /// Normalized ω per neighbor.
    pub weights: Vec<f64>,
}

impl LaplaceBatch {
    /// Assemble from per-sample neighbor sets, dropping excluded samples.
    pub fn assemble(samples: &[SurfaceSample], sets: &[NeighborSet]) -> Option<LaplaceBatch> {
        let mut base = Vec::new();
        let mut neighbors = Vec::new();
        let mut base_index = Vec::new();
        let mut weights = Vec::new();
        for (s, set) in samples.iter().zip(sets) {
            let Some(ns) = set else { continue };
            let w = laplacian_weights(s.p, ns);
            let bi = base.len();
            base.push(s.p);
            for (q, wq) in ns.iter().zip(w) {
                neighbors.push(*q);
                base_index.push(bi);
                weights.push(wq);
            }
        }
        if base.is_empty() {
            None
        } else {
            Some(LaplaceBatch {
                base,
                neighbors,
                base_index,
                weights,
            })
        }
    }
}

pub fn build_laplace(
    tape: &mut Tape,
    vars: &DeformVars,
    model: &DeformModel,
    object: &str,
    batch: &LaplaceBatch,
) -> Result<Var, DeformError> {
    let nb = batch.base.len();
    // One forward pass over base points and neighbors together.
    let mut all = batch.base.clone();
    all.extend_from_slice(&batch.neighbors);
    let pv = tape.constant(tensor_from_points(&all));
    let (mapped, _) = taped_forward(tape, vars, &model.posenc, object, pv);
    let base_rows: Vec<usize> = (0..nb).collect();
    let nbr_rows: Vec<usize> = (nb..all.len()).collect();
    let p_mapped = tape.gather_rows(mapped, &base_rows);
    let q_mapped = tape.gather_rows(mapped, &nbr_rows);
    // Σ_j ω_j q'_j per base row.
    let wv = tape.constant(Tensor::from_vec(&[batch.weights.len(), 1], batch.weights.clone()));
    let weighted = tape.mul_col_broadcast(q_mapped, wv);
    let q_sum = tape.scatter_sum_rows(weighted, &batch.base_index, nb);
    let delta = tape.sub(p_mapped, q_sum);
    // Unit normal from the frozen domain at p'.
    let g = sdf_taped::grad_taped(&model.domain, tape, p_mapped)?;
    let gn = row_norms(tape, g);
    let inv = tape.recip(gn);
    let n = tape.mul_col_broadcast(g, inv);
    let dot = {
        let prod = tape.mul(delta, n);
        tape.sum_cols(prod)
    };
    let proj = tape.mul_col_broadcast(n, dot);
    let tangential = tape.sub(delta, proj);
    let norms = row_norms(tape, tangential);
    Ok(tape.mean_all(norms))
}

/// mean (‖∇s‖ − 1)² of the composed SDF at the given points.
pub fn build_eikonal(
    tape: &mut Tape,
    vars: &DeformVars,
    model: &DeformModel,
    object: &str,
    pts: &[Vec3],
) -> Result<Var, DeformError> {
    let seeded = dual::seed_positions(tape, tensor_from_points(pts));
    let mapped = taped_forward_dual(tape, vars, &model.posenc, object, seeded);
    let s = sdf_taped::eval_taped_dual(&model.domain, tape, mapped)?;
    let grad = dual::gradient(tape, s);
    let n = row_norms(tape, grad);
    let d = tape.add_scalar(n, -1.0);
    let sq = tape.square(d);
    Ok(tape.mean_all(sq))
}

/// ‖z‖₂ for one code (1×d).
pub fn build_code_norm(tape: &mut Tape, code: Var) -> Var {
    let sq = tape.square(code);
    let s = tape.sum_all(sq);
    let se = tape.add_scalar(s, NORM_EPS);
    tape.sqrt(se)
}

// ---- plain evaluation wrappers (op contracts and tests) ----

fn group_by_object<'a>(
    samples: &'a [SurfaceSample],
) -> Vec<(String, Vec<&'a SurfaceSample>)> {
    let mut groups: Vec<(String, Vec<&SurfaceSample>)> = Vec::new();
    for s in samples {
        match groups.iter_mut().find(|(id, _)| *id == s.object) {
            Some((_, v)) => v.push(s),
            None => groups.push((s.object.clone(), vec![s])),
        }
    }
    groups
}

/// mean over the batch of ‖F_def(p)‖ + ‖F_inv(p')‖.
pub fn loss_smooth(model: &DeformModel, samples: &[SurfaceSample]) -> Result<f64, DeformError> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (object, group) in group_by_object(samples) {
        let pts: Vec<Vec3> = group.iter().map(|s| s.p).collect();
        let disp = model.displacement_batch(&pts, &object)?;
        let mapped: Vec<Vec3> = disp.iter().zip(&pts).map(|(d, &p)| p + *d).collect();
        let x = model.inverse_map_batch(&mapped, &object)?;
        for ((d, pm), x2) in disp.iter().zip(&mapped).zip(&x) {
            acc += d.norm() + (*x2 - *pm).norm();
            n += 1;
        }
    }
    Ok(acc / n as f64)
}

/// mean λ(p)·‖p − p''‖.
pub fn loss_cycle(model: &DeformModel, samples: &[SurfaceSample]) -> Result<f64, DeformError> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (object, group) in group_by_object(samples) {
        let pts: Vec<Vec3> = group.iter().map(|s| s.p).collect();
        let mapped = model.forward_map_batch(&pts, &object)?;
        let back = model.inverse_map_batch(&mapped, &object)?;
        for ((s, &p), &pdd) in group.iter().zip(&pts).zip(&back) {
            acc += s.weight * (p - pdd).norm();
            n += 1;
        }
    }
    Ok(acc / n as f64)
}

/// mean tangential Laplacian magnitude; samples without enough surviving
/// neighbors are excluded.
pub fn loss_laplace(
    model: &DeformModel,
    object: &str,
    samples: &[SurfaceSample],
    m_count: usize,
    rho: f64,
    seed: u64,
) -> Result<f64, DeformError> {
    let sets = sample_neighbors_batch(model, object, samples, m_count, rho, seed)?;
    let Some(batch) = LaplaceBatch::assemble(samples, &sets) else {
        return Ok(0.0);
    };
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, &[object.to_string()])?;
    let l = build_laplace(&mut tape, &vars, model, object, &batch)?;
    Ok(tape.value(l).scalar_value())
}

/// mean (‖∇s‖−1)² at the given points.
pub fn loss_eikonal(model: &DeformModel, object: &str, pts: &[Vec3]) -> Result<f64, DeformError> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, &[object.to_string()])?;
    let l = build_eikonal(&mut tape, &vars, model, object, pts)?;
    Ok(tape.value(l).scalar_value())
}

/// mean over objects of ‖z_s‖ (+ ‖z_a‖ when appearance codes are given).
pub fn loss_code(codes: &[&Tensor]) -> f64 {
    if codes.is_empty() {
        return 0.0;
    }
    codes
        .iter()
        .map(|z| z.data.iter().map(|x| x * x).sum::<f64>().sqrt())
        .sum::<f64>()
        / codes.len() as f64
}
