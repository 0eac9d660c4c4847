//! Geometry-supervised parameterization training: the full loss of the image
//! pipeline with the RGB and shading terms replaced by a surface
//! correspondence term (λ(p) ≡ 1), so the deformation machinery is testable
//! without a renderer.

use std::collections::BTreeMap;

use surfmap_nn::{adam_step, cosine_lr, stream_seed, AdamParams, AdamState, Tape};
use surfmap_sdf::{taped as sdf_taped, SdfField};

use crate::losses::{
    build_code_norm, build_cycle, build_eikonal, build_laplace, build_smooth, tensor_from_points,
    Lambdas, LaplaceBatch,
};
use crate::model::{taped_forward, taped_inverse, DeformModel};
use crate::neighbors::sample_neighbors_batch;
use crate::surface::{sample_eikonal_points, sample_surface};
use crate::{DeformError, SurfaceSample};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Surface samples per object per epoch.
    pub batch: usize,
    /// Base samples feeding the Laplacian term.
    pub lap_batch: usize,
    pub eik_batch: usize,
    pub neighbor_m: usize,
    pub neighbor_rho: f64,
    pub lr: f64,
    pub lambdas: Lambdas,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            batch: 256,
            lap_batch: 48,
            eik_batch: 128,
            neighbor_m: 6,
            neighbor_rho: 0.02,
            lr: 1e-3,
            lambdas: Lambdas::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EpochLosses {
    pub surface: f64,
    pub eikonal: f64,
    pub cycle: f64,
    pub smooth: f64,
    pub laplace: f64,
    pub code: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochLosses>,
    pub lambdas: Lambdas,
    /// Set when a non-finite loss aborted training; the model holds the last
    /// good parameters.
    pub aborted: Option<String>,
}

/// Optimize F_def, F_inv-def and the shape codes against analytic targets.
pub fn train_parameterization(
    model: &mut DeformModel,
    targets: &BTreeMap<String, SdfField>,
    cfg: &TrainConfig,
) -> Result<TrainReport, DeformError> {
    for id in targets.keys() {
        model.code(id)?;
    }
    let objects: Vec<String> = targets.keys().cloned().collect();
    let mut net_state = AdamState::default();
    let mut code_states: BTreeMap<String, AdamState> =
        objects.iter().map(|o| (o.clone(), AdamState::default())).collect();
    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        lambdas: cfg.lambdas,
        aborted: None,
    };
    let total_steps = (cfg.epochs * objects.len()) as u64;
    let mut step_idx = 0u64;

    'outer: for epoch in 0..cfg.epochs {
        let mut epoch_losses = EpochLosses::default();
        // Snapshot for NaN rollback.
        let snapshot = model.clone();
        for (oi, object) in objects.iter().enumerate() {
            let target = &targets[object];
            let tag = epoch as u64 * objects.len() as u64 + oi as u64;
            let samples = sample_surface(
                target,
                object,
                cfg.batch,
                stream_seed(cfg.seed, "geo-surface", tag),
            );
            if samples.is_empty() {
                return Err(DeformError::DegenerateTarget(object.clone()));
            }
            // Laplacian base points live on the composed surface.
            let lap_samples = composed_surface_subset(model, object, &samples, cfg.lap_batch)?;
            let lap_sets = sample_neighbors_batch(
                model,
                object,
                &lap_samples,
                cfg.neighbor_m,
                cfg.neighbor_rho,
                stream_seed(cfg.seed, "geo-neighbors", tag),
            )?;
            let lap_batch = LaplaceBatch::assemble(&lap_samples, &lap_sets);
            let eik_pts = sample_eikonal_points(
                &samples,
                cfg.eik_batch,
                stream_seed(cfg.seed, "geo-eik", tag),
            );

            let mut tape = Tape::new();
            let vars = model.register(&mut tape, std::slice::from_ref(object))?;
            let pts: Vec<_> = samples.iter().map(|s| s.p).collect();
            let pv = tape.constant(tensor_from_points(&pts));
            let (p_prime, disp) = taped_forward(&mut tape, &vars, &model.posenc, object, pv);

            // Surface correspondence: mean |F_sdf(p')| with λ ≡ 1.
            let s_at = sdf_taped::eval_taped(&model.domain, &mut tape, p_prime)?;
            let s_abs = tape.abs(s_at);
            let l_surf = tape.mean_all(s_abs);

            let (p_dd, disp_inv) = taped_inverse(&mut tape, &vars, &model.posenc, object, p_prime);
            let weights = tape.constant(surfmap_nn::Tensor::filled(&[pts.len(), 1], 1.0));
            let l_cycle = build_cycle(&mut tape, pv, p_dd, weights);
            let l_smooth = build_smooth(&mut tape, disp, disp_inv);
            let l_lap = match &lap_batch {
                Some(b) => build_laplace(&mut tape, &vars, model, object, b)?,
                None => tape.constant(surfmap_nn::Tensor::scalar(0.0)),
            };
            let l_eik = build_eikonal(&mut tape, &vars, model, object, &eik_pts)?;
            let l_code = build_code_norm(&mut tape, vars.codes[object]);

            let weighted = [
                (1.0, l_surf),
                (cfg.lambdas.eikonal, l_eik),
                (cfg.lambdas.cycle, l_cycle),
                (cfg.lambdas.smooth, l_smooth),
                (cfg.lambdas.laplace, l_lap),
                (cfg.lambdas.code, l_code),
            ];
            let mut total = None;
            for (w, term) in weighted {
                let scaled = tape.mul_scalar(term, w);
                total = Some(match total {
                    None => scaled,
                    Some(t) => tape.add(t, scaled),
                });
            }
            let total = total.expect("loss terms");

            let total_val = tape.value(total).scalar_value();
            if !total_val.is_finite() {
                *model = snapshot;
                report.aborted = Some(format!(
                    "non-finite loss at epoch {epoch} object {object}"
                ));
                break 'outer;
            }
            epoch_losses.surface += tape.value(l_surf).scalar_value();
            epoch_losses.eikonal += tape.value(l_eik).scalar_value();
            epoch_losses.cycle += tape.value(l_cycle).scalar_value();
            epoch_losses.smooth += tape.value(l_smooth).scalar_value();
            epoch_losses.laplace += tape.value(l_lap).scalar_value();
            epoch_losses.code += tape.value(l_code).scalar_value();
            epoch_losses.total += total_val;

            tape.backward(total)?;
            let lr = cosine_lr(cfg.lr, step_idx, total_steps, 0.05);
            step_idx += 1;

            // Shared network parameters first, then this object's code.
            let net_grads: Vec<_> = vars
                .f_def
                .vars()
                .iter()
                .chain(vars.f_inv.vars().iter())
                .map(|&v| tape.grad(v))
                .collect();
            let code_grad = tape.grad(vars.codes[object]);
            {
                let mut refs: Vec<&mut surfmap_nn::Tensor> = Vec::new();
                refs.extend(model.f_def.params_mut());
                refs.extend(model.f_inv.params_mut());
                adam_step(&mut refs, &net_grads, &mut net_state, &AdamParams::new(lr))?;
            }
            {
                let code = model.codes.get_mut(object).expect("code exists");
                adam_step(
                    &mut [code],
                    &[code_grad],
                    code_states.get_mut(object).expect("state"),
                    &AdamParams::new(lr),
                )?;
            }
        }
        let k = objects.len() as f64;
        epoch_losses.surface /= k;
        epoch_losses.eikonal /= k;
        epoch_losses.cycle /= k;
        epoch_losses.smooth /= k;
        epoch_losses.laplace /= k;
        epoch_losses.code /= k;
        epoch_losses.total /= k;
        report.epochs.push(epoch_losses);
    }
    Ok(report)
}

/// Project a subset of target-surface samples onto the composed surface so
/// the Laplacian term sees points of the live geometry.
fn composed_surface_subset(
    model: &DeformModel,
    object: &str,
    samples: &[SurfaceSample],
    count: usize,
) -> Result<Vec<SurfaceSample>, DeformError> {
    let subset = &samples[..count.min(samples.len())];
    let mut pts: Vec<_> = subset.iter().map(|s| s.p).collect();
    let mut converged = vec![false; pts.len()];
    for _ in 0..=5 {
        let sg = model.composed_eval_grad_batch(&pts, object)?;
        let mut all = true;
        for (i, &(s, g, _)) in sg.iter().enumerate() {
            if converged[i] {
                continue;
            }
            if s.abs() <= surfmap_sdf::PROJECT_TOL {
                converged[i] = true;
                continue;
            }
            let g2 = g.norm_squared();
            if g2 < 1e-12 {
                continue;
            }
            pts[i] = pts[i] - g * (s / g2);
            all = false;
        }
        if all {
            break;
        }
    }
    let sg = model.composed_eval_grad_batch(&pts, object)?;
    Ok(subset
        .iter()
        .enumerate()
        .filter(|(i, _)| converged[*i])
        .map(|(i, s)| SurfaceSample {
            p: pts[i],
            weight: 1.0,
            normal: sg[i].1.normalized(),
            object: s.object.clone(),
        })
        .collect())
}

/// Write a training report as a line-oriented trace file.
pub fn write_report(report: &TrainReport, path: &std::path::Path) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str("# surfmap geometry-mode training trace v1\n");
    out.push_str(&format!(
        "lambdas eikonal={} cycle={} smooth={} laplace={} shading={} code={}\n",
        report.lambdas.eikonal,
        report.lambdas.cycle,
        report.lambdas.smooth,
        report.lambdas.laplace,
        report.lambdas.shading,
        report.lambdas.code
    ));
    if let Some(reason) = &report.aborted {
        out.push_str(&format!("aborted {reason}\n"));
    }
    for (i, e) in report.epochs.iter().enumerate() {
        out.push_str(&format!(
            "epoch={} surface={:.6e} eikonal={:.6e} cycle={:.6e} smooth={:.6e} laplace={:.6e} code={:.6e} total={:.6e}\n",
            i, e.surface, e.eikonal, e.cycle, e.smooth, e.laplace, e.code, e.total
        ));
    }
    std::fs::write(path, out)
}
