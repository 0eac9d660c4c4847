//! The two-phase pipeline: a short coarse phase training a plain SDF network
//! with a temporary radiance head, a one-time domain fit against the coarse
//! geometry, and the long phase training deformations, appearance and codes
//! with the domain frozen.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use surfmap_deform::{
    build_code_norm, build_cycle, build_eikonal, build_laplace, build_smooth, taped_forward_dual,
    taped_inverse, DeformConfig, DeformModel, DeformVars, Lambdas, LaplaceBatch, SurfaceSample,
};
use surfmap_domain::{fit_domain, DomainFitReport, DomainKind, DomainSpec};
use surfmap_nn::{
    adam_step, cosine_lr, dual, stream_seed, Activation, AdamParams, AdamState, Mlp, MlpConfig,
    OutputTransform, Tape, Tensor, Var,
};
use surfmap_sdf::{vec3, MlpField, SdfField, Vec3};

use crate::appearance::{taped_radiance, AppearanceConfig, AppearanceModel, AppearanceVars};
use crate::bundle::{ParamModel, ResumeState};
use crate::camera::ray_scene_interval;
use crate::dataset::Dataset;
use crate::density::{density_taped, DensityConfig};
use crate::RenderError;

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub deform: DeformConfig,
    pub appearance: AppearanceConfig,
    pub domain_kind: DomainKind,
    pub domain_k: usize,
    pub domain_lambda_s: f64,
    pub phase_a_epochs: usize,
    pub phase_c_epochs: usize,
    pub pixel_batch: usize,
    pub samples_per_ray: usize,
    pub lr_a: f64,
    pub lr_c: f64,
    pub lambdas: Lambdas,
    pub density: DensityConfig,
    pub background: [f64; 3],
    /// Ray weights below this skip radiance evaluation during training;
    /// zero evaluates everything.
    pub weight_threshold: f64,
    pub eik_batch: usize,
    pub cycle_batch: usize,
    pub lap_batch: usize,
    pub neighbor_m: usize,
    pub neighbor_rho: f64,
    /// Coarse-phase network.
    pub g_depth: usize,
    pub g_width: usize,
    /// Distillation steps pinning the coarse SDF to a centered sphere.
    pub init_steps: usize,
    pub seed: u64,
    /// Write a checkpoint after every N phase-C epochs (0 = off).
    pub checkpoint_every: usize,
    pub checkpoint_stem: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            deform: DeformConfig::default(),
            appearance: AppearanceConfig::default(),
            domain_kind: DomainKind::Sphere,
            domain_k: 1,
            domain_lambda_s: 0.01,
            phase_a_epochs: 20,
            phase_c_epochs: 200,
            pixel_batch: 512,
            samples_per_ray: 64,
            lr_a: 1e-3,
            lr_c: 1e-3,
            lambdas: Lambdas::default(),
            density: DensityConfig::default(),
            background: [1.0, 1.0, 1.0],
            weight_threshold: 1e-4,
            eik_batch: 128,
            cycle_batch: 128,
            lap_batch: 16,
            neighbor_m: 6,
            neighbor_rho: 0.02,
            g_depth: 4,
            g_width: 64,
            init_steps: 200,
            seed: 1,
            checkpoint_every: 0,
            checkpoint_stem: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ImageEpochLosses {
    pub rgb: f64,
    pub eikonal: f64,
    pub cycle: f64,
    pub smooth: f64,
    pub laplace: f64,
    pub shading: f64,
    pub code: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PipelineReport {
    pub phase_a: Vec<(f64, f64)>,
    pub domain: Option<DomainFitReport>,
    pub phase_c: Vec<ImageEpochLosses>,
    pub lambdas: Lambdas,
    pub aborted: Option<String>,
}

/// One sampled training batch: rays that hit the volume, their samples, and
/// everything constant the tape needs.
pub struct PixelBatch {
    pub positions: Vec<Vec3>,
    pub deltas: Vec<f64>,
    pub view_dirs: Vec<Vec3>,
    pub gt: Vec<[f64; 3]>,
    pub n_rays: usize,
    pub samples_per_ray: usize,
}

/// Sample a pixel batch across all views of one object's dataset.
pub fn sample_pixel_batch(
    ds: &Dataset,
    pixel_batch: usize,
    samples_per_ray: usize,
    seed: u64,
) -> PixelBatch {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(pixel_batch * samples_per_ray);
    let mut deltas = Vec::with_capacity(pixel_batch * samples_per_ray);
    let mut view_dirs = Vec::with_capacity(pixel_batch);
    let mut gt = Vec::with_capacity(pixel_batch);
    let mut n_rays = 0;
    let mut guard = 0;
    while n_rays < pixel_batch && guard < pixel_batch * 20 {
        guard += 1;
        let v = rng.gen_range(0..ds.cameras.len());
        let cam = &ds.cameras[v];
        let col = rng.gen_range(0..cam.width);
        let row = rng.gen_range(0..cam.height);
        let dir = cam.pixel_direction(col, row);
        let Some((t0, t1)) = ray_scene_interval(cam.position, dir) else {
            continue;
        };
        let w = (t1 - t0) / samples_per_ray as f64;
        for i in 0..samples_per_ray {
            let jitter: f64 = rng.gen_range(0.0..1.0);
            positions.push(cam.position + dir * (t0 + (i as f64 + jitter) * w));
            deltas.push(w);
        }
        view_dirs.push(dir);
        gt.push(ds.images[v][(row * cam.width + col) as usize]);
        n_rays += 1;
    }
    PixelBatch {
        positions,
        deltas,
        view_dirs,
        gt,
        n_rays,
        samples_per_ray,
    }
}

/// Transparency-based weights on the tape: σδ per sample -> λ per sample.
fn taped_weights(tape: &mut Tape, sigma: Var, deltas: &[f64], n_rays: usize, s: usize) -> Var {
    let dv = tape.constant(Tensor::from_vec(&[deltas.len(), 1], deltas.to_vec()));
    let sd = tape.mul(sigma, dv);
    let grid = tape.reshape(sd, &[n_rays, s]);
    let cum = tape.exclusive_cumsum_rows(grid);
    let ncum = tape.neg(cum);
    let t = tape.exp(ncum);
    let nsd = tape.neg(grid);
    let e = tape.exp(nsd);
    let ne = tape.neg(e);
    let alpha = tape.add_scalar(ne, 1.0);
    let lam = tape.mul(t, alpha);
    tape.reshape(lam, &[deltas.len(), 1])
}

/// Select sample indices worth shading: weight above threshold, ordered by
/// descending weight; deterministic.
fn select_samples(weights: &[f64], threshold: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len())
        .filter(|&i| weights[i] > threshold)
        .collect();
    idx.sort_by(|&a, &b| weights[b].partial_cmp(&weights[a]).unwrap().then(a.cmp(&b)));
    idx
}

pub struct PhaseCLossVars {
    pub rgb: Var,
    pub eikonal: Var,
    pub cycle: Var,
    pub smooth: Var,
    pub laplace: Var,
    pub shading: Var,
    pub code: Var,
    pub total: Var,
}

/// Build the full phase-C objective for one object on one tape. The batch,
/// Laplacian neighbor sets and Eikonal points are constants; everything else
/// is differentiable.
#[allow(clippy::too_many_arguments)]
pub fn build_phase_c_losses(
    tape: &mut Tape,
    model: &ParamModel,
    dvars: &DeformVars,
    avars: &AppearanceVars,
    object: &str,
    batch: &PixelBatch,
    lap_batch: Option<&LaplaceBatch>,
    eik_points: &[Vec3],
    cfg: &PipelineConfig,
) -> Result<PhaseCLossVars, RenderError> {
    let n = batch.positions.len();
    let n_rays = batch.n_rays;
    let s_per = batch.samples_per_ray;
    let deform = &model.deform;

    // Composed SDF with spatial tangents at every ray sample.
    let pos_tensor = Tensor::from_vec(
        &[n, 3],
        batch.positions.iter().flat_map(|p| p.to_array()).collect(),
    );
    let seeded = dual::seed_positions(tape, pos_tensor.clone());
    let mapped = taped_forward_dual(tape, dvars, &deform.posenc, object, seeded);
    let s_dual = surfmap_sdf::taped::eval_taped_dual(&deform.domain, tape, mapped)
        .map_err(RenderError::Sdf)?;
    let grad = dual::gradient(tape, s_dual);
    let sigma = density_taped(tape, s_dual.val, &cfg.density);
    let lam = taped_weights(tape, sigma, &batch.deltas, n_rays, s_per);

    // Radiance on the significant samples.
    let lam_vals = tape.value(lam).data.clone();
    let sel = select_samples(&lam_vals, cfg.weight_threshold);
    let sel_ray: Vec<usize> = sel.iter().map(|&i| i / s_per).collect();
    let p_sel = tape.gather_rows(mapped.val, &sel);
    let g_sel = tape.gather_rows(grad, &sel);
    let gnorm = {
        let sq = tape.square(g_sel);
        let ssum = tape.sum_cols(sq);
        let se = tape.add_scalar(ssum, 1e-12);
        tape.sqrt(se)
    };
    let ginv = tape.recip(gnorm);
    let n_sel = tape.mul_col_broadcast(g_sel, ginv);
    let venc_sel = {
        let vraw = Tensor::from_vec(
            &[sel.len(), 3],
            sel.iter()
                .flat_map(|&i| batch.view_dirs[i / s_per].to_array())
                .collect(),
        );
        tape.constant(model.appearance.posenc_view.encode_batch(&vraw))
    };
    let (rgb_sel, shd_sel) =
        taped_radiance(tape, &model.appearance, avars, object, p_sel, n_sel, venc_sel);
    let lam_sel = tape.gather_rows(lam, &sel);
    let weighted = tape.mul_col_broadcast(rgb_sel, lam_sel);
    let c_fg = tape.scatter_sum_rows(weighted, &sel_ray, n_rays);
    let lam_grid = tape.reshape(lam, &[n_rays, s_per]);
    let opacity = tape.sum_cols(lam_grid);
    let nop = tape.neg(opacity);
    let residual = tape.add_scalar(nop, 1.0);
    let bg = tape.constant(Tensor::from_vec(
        &[n_rays, 3],
        (0..n_rays).flat_map(|_| cfg.background).collect(),
    ));
    let bg_part = tape.mul_col_broadcast(bg, residual);
    let c_pred = tape.add(c_fg, bg_part);
    let gt = tape.constant(Tensor::from_vec(
        &[n_rays, 3],
        batch.gt.iter().flatten().copied().collect(),
    ));
    let diff = tape.sub(c_pred, gt);
    let adiff = tape.abs(diff);
    let l_rgb = tape.mean_all(adiff);

    // Shading sparsity over shaded samples.
    let shd_abs = tape.abs(shd_sel);
    let l_shd = tape.mean_all(shd_abs);

    // Cycle over the strongest samples, weights taken as fixed inputs.
    let cyc: Vec<usize> = sel.iter().copied().take(cfg.cycle_batch).collect();
    let (l_cycle, l_smooth) = if cyc.is_empty() {
        let zero = tape.constant(Tensor::scalar(0.0));
        (zero, zero)
    } else {
        let cyc_rows_in_sel: Vec<usize> = (0..cyc.len()).collect();
        let p_cyc = tape.gather_rows(p_sel, &cyc_rows_in_sel);
        let orig = tape.constant(Tensor::from_vec(
            &[cyc.len(), 3],
            cyc.iter()
                .flat_map(|&i| batch.positions[i].to_array())
                .collect(),
        ));
        let w_cyc = tape.constant(Tensor::from_vec(
            &[cyc.len(), 1],
            cyc.iter().map(|&i| lam_vals[i]).collect(),
        ));
        let (p_dd, disp_inv) = taped_inverse(tape, dvars, &deform.posenc, object, p_cyc);
        let l_cycle = build_cycle(tape, orig, p_dd, w_cyc);
        let disp_fwd = tape.sub(p_cyc, orig);
        let l_smooth = build_smooth(tape, disp_fwd, disp_inv);
        (l_cycle, l_smooth)
    };

    let l_lap = match lap_batch {
        Some(b) => {
            build_laplace(tape, dvars, deform, object, b).map_err(RenderError::Deform)?
        }
        None => tape.constant(Tensor::scalar(0.0)),
    };
    let l_eik = build_eikonal(tape, dvars, deform, object, eik_points)
        .map_err(RenderError::Deform)?;

    let zs_norm = build_code_norm(tape, dvars.codes[object]);
    let za_norm = build_code_norm(tape, avars.codes[object]);
    let l_code = tape.add(zs_norm, za_norm);

    let lam_cfg = cfg.lambdas;
    let terms = [
        (1.0, l_rgb),
        (lam_cfg.eikonal, l_eik),
        (lam_cfg.cycle, l_cycle),
        (lam_cfg.smooth, l_smooth),
        (lam_cfg.laplace, l_lap),
        (lam_cfg.shading, l_shd),
        (lam_cfg.code, l_code),
    ];
    let mut total = None;
    for (w, t) in terms {
        let scaled = tape.mul_scalar(t, w);
        total = Some(match total {
            None => scaled,
            Some(acc) => tape.add(acc, scaled),
        });
    }
    Ok(PhaseCLossVars {
        rgb: l_rgb,
        eikonal: l_eik,
        cycle: l_cycle,
        smooth: l_smooth,
        laplace: l_lap,
        shading: l_shd,
        code: l_code,
        total: total.expect("terms"),
    })
}

/// Near-surface + uniform point mixture for the Eikonal term, built from the
/// strongest ray samples of the batch.
fn eikonal_points(
    model: &ParamModel,
    object: &str,
    batch: &PixelBatch,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec3>, RenderError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(count);
    for _ in 0..count / 2 {
        pts.push(vec3(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ));
    }
    // Band half: evaluate a subsample of ray points, keep those nearest the
    // surface, jitter along the normal.
    let probe: Vec<Vec3> = batch
        .positions
        .iter()
        .step_by((batch.positions.len() / (4 * count).max(1)).max(1))
        .copied()
        .collect();
    if !probe.is_empty() {
        let sg = model
            .deform
            .composed_eval_grad_batch(&probe, object)
            .map_err(RenderError::Deform)?;
        let mut order: Vec<usize> = (0..probe.len()).collect();
        order.sort_by(|&a, &b| sg[a].0.abs().partial_cmp(&sg[b].0.abs()).unwrap());
        for &i in order.iter().take(count - count / 2) {
            let off: f64 = rng.gen_range(-0.1..0.1);
            pts.push(probe[i] + sg[i].1.normalized() * off);
        }
    }
    Ok(pts)
}

/// Laplacian base samples: strongest near-surface ray samples projected onto
/// the composed surface, with their neighbor sets.
fn laplace_inputs(
    model: &ParamModel,
    object: &str,
    batch: &PixelBatch,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Option<LaplaceBatch>, RenderError> {
    let probe: Vec<Vec3> = batch
        .positions
        .iter()
        .step_by((batch.positions.len() / (8 * cfg.lap_batch).max(1)).max(1))
        .copied()
        .collect();
    if probe.is_empty() {
        return Ok(None);
    }
    let sg = model
        .deform
        .composed_eval_grad_batch(&probe, object)
        .map_err(RenderError::Deform)?;
    let mut order: Vec<usize> = (0..probe.len()).collect();
    order.sort_by(|&a, &b| sg[a].0.abs().partial_cmp(&sg[b].0.abs()).unwrap());
    let mut base: Vec<Vec3> = Vec::new();
    for &i in order.iter() {
        if base.len() >= cfg.lap_batch {
            break;
        }
        if sg[i].0.abs() < 0.05 {
            base.push(probe[i]);
        }
    }
    if base.is_empty() {
        return Ok(None);
    }
    // Project exactly onto the surface and take composed normals.
    let mut pts = base.clone();
    for _ in 0..5 {
        let sg = model
            .deform
            .composed_eval_grad_batch(&pts, object)
            .map_err(RenderError::Deform)?;
        for (i, &(s, g, _)) in sg.iter().enumerate() {
            let g2 = g.norm_squared();
            if s.abs() > surfmap_sdf::PROJECT_TOL && g2 > 1e-12 {
                pts[i] = pts[i] - g * (s / g2);
            }
        }
    }
    let sg = model
        .deform
        .composed_eval_grad_batch(&pts, object)
        .map_err(RenderError::Deform)?;
    let samples: Vec<SurfaceSample> = pts
        .iter()
        .zip(&sg)
        .filter(|(_, (s, ..))| s.abs() < 0.05)
        .map(|(&p, (_, g, _))| SurfaceSample {
            p,
            weight: 1.0,
            normal: g.normalized(),
            object: object.to_string(),
        })
        .collect();
    if samples.is_empty() {
        return Ok(None);
    }
    let sets = surfmap_deform::sample_neighbors_batch(
        &model.deform,
        object,
        &samples,
        cfg.neighbor_m,
        cfg.neighbor_rho,
        seed,
    )
    .map_err(RenderError::Deform)?;
    Ok(LaplaceBatch::assemble(&samples, &sets))
}

// ---- phase A ----

struct CoarseState {
    g_sdf: Mlp,
    head: Mlp,
    shape_codes: BTreeMap<String, Tensor>,
    app_codes: BTreeMap<String, Tensor>,
}

fn phase_a(
    datasets: &BTreeMap<String, Dataset>,
    cfg: &PipelineConfig,
    report: &mut PipelineReport,
) -> Result<CoarseState, RenderError> {
    let objects: Vec<String> = datasets.keys().cloned().collect();
    let posenc = cfg.deform.posenc;
    let posenc_view = cfg.appearance.posenc_view;
    let latent = cfg.deform.latent_dim;
    let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(cfg.seed, "phase-a-init", 0));
    let g_cfg = MlpConfig::new(cfg.g_depth, cfg.g_width, posenc.dim() + latent, 1)
        .with_activation(Activation::Softplus);
    let head_cfg = MlpConfig::new(
        3,
        cfg.g_width,
        posenc.dim() + posenc_view.dim() + cfg.appearance.latent_dim,
        3,
    )
    .with_activation(Activation::Relu)
    .with_output(OutputTransform::Sigmoid);
    let mut g_sdf = Mlp::new(g_cfg, &mut rng);
    let head = Mlp::new(head_cfg, &mut rng);
    let mut shape_codes = BTreeMap::new();
    let mut app_codes = BTreeMap::new();
    for (i, id) in objects.iter().enumerate() {
        let mut crng = ChaCha12Rng::seed_from_u64(stream_seed(cfg.seed, "a-zs", i as u64));
        shape_codes.insert(
            id.clone(),
            surfmap_nn::LatentCode::new(id.clone(), latent, &mut crng).z,
        );
        let mut crng = ChaCha12Rng::seed_from_u64(stream_seed(cfg.seed, "a-za", i as u64));
        app_codes.insert(
            id.clone(),
            surfmap_nn::LatentCode::new(id.clone(), cfg.appearance.latent_dim, &mut crng).z,
        );
    }

    // Geometric distillation: pin the coarse SDF to a centered sphere so the
    // density field starts sane.
    let mut dist_state = AdamState::default();
    for step in 0..cfg.init_steps {
        let mut srng =
            ChaCha12Rng::seed_from_u64(stream_seed(cfg.seed, "a-distill", step as u64));
        let pts: Vec<Vec3> = (0..1024)
            .map(|_| {
                vec3(
                    srng.gen_range(-1.0..1.0),
                    srng.gen_range(-1.0..1.0),
                    srng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let target: Vec<f64> = pts.iter().map(|p| p.norm() - 0.45).collect();
        let mut tape = Tape::new();
        let vars = g_sdf.register(&mut tape);
        let mut per_obj_losses = Vec::new();
        for id in &objects {
            let enc = posenc.encode_batch(&Tensor::from_vec(
                &[pts.len(), 3],
                pts.iter().flat_map(|p| p.to_array()).collect(),
            ));
            let encv = tape.constant(enc);
            let z = tape.constant(shape_codes[id].clone());
            let zb = tape.repeat_row(z, pts.len());
            let x = tape.concat_cols(&[encv, zb]);
            let s = vars.forward_taped(&mut tape, x);
            let gtv = tape.constant(Tensor::from_vec(&[pts.len(), 1], target.clone()));
            let d = tape.sub(s, gtv);
            let a = tape.abs(d);
            per_obj_losses.push(tape.mean_all(a));
        }
        let mut loss = per_obj_losses[0];
        for &l in &per_obj_losses[1..] {
            loss = tape.add(loss, l);
        }
        tape.backward(loss).map_err(RenderError::Nn)?;
        let grads: Vec<Tensor> = vars.vars().iter().map(|&v| tape.grad(v)).collect();
        let mut refs = g_sdf.params_mut();
        adam_step(&mut refs, &grads, &mut dist_state, &AdamParams::new(2e-3))
            .map_err(RenderError::Nn)?;
    }

    let mut coarse = CoarseState {
        g_sdf,
        head,
        shape_codes,
        app_codes,
    };
    let mut net_state = AdamState::default();
    let mut code_states: BTreeMap<String, AdamState> = objects
        .iter()
        .map(|o| (o.clone(), AdamState::default()))
        .collect();
    let total_steps = (cfg.phase_a_epochs * objects.len()) as u64;
    let mut step_idx = 0u64;
    for epoch in 0..cfg.phase_a_epochs {
        let mut rgb_acc = 0.0;
        let mut eik_acc = 0.0;
        for (oi, object) in objects.iter().enumerate() {
            let tag = (epoch * objects.len() + oi) as u64;
            let batch = sample_pixel_batch(
                &datasets[object],
                cfg.pixel_batch,
                cfg.samples_per_ray,
                stream_seed(cfg.seed, "a-pixels", tag),
            );
            if batch.n_rays == 0 {
                continue;
            }
            let (rgb, eik) = phase_a_step(
                &mut coarse,
                object,
                &batch,
                cfg,
                stream_seed(cfg.seed, "a-eik", tag),
                cosine_lr(cfg.lr_a, step_idx, total_steps, 0.05),
                &mut net_state,
                code_states.get_mut(object).expect("state"),
            )?;
            step_idx += 1;
            rgb_acc += rgb;
            eik_acc += eik;
        }
        report
            .phase_a
            .push((rgb_acc / objects.len() as f64, eik_acc / objects.len() as f64));
    }
    Ok(coarse)
}

#[allow(clippy::too_many_arguments)]
fn phase_a_step(
    coarse: &mut CoarseState,
    object: &str,
    batch: &PixelBatch,
    cfg: &PipelineConfig,
    eik_seed: u64,
    lr: f64,
    net_state: &mut AdamState,
    code_state: &mut AdamState,
) -> Result<(f64, f64), RenderError> {
    let posenc = cfg.deform.posenc;
    let posenc_view = cfg.appearance.posenc_view;
    let n = batch.positions.len();
    let n_rays = batch.n_rays;
    let s_per = batch.samples_per_ray;

    let mut tape = Tape::new();
    let g_vars = coarse.g_sdf.register(&mut tape);
    let h_vars = coarse.head.register(&mut tape);
    let zs = tape.param(coarse.shape_codes[object].clone());
    let za = tape.param(coarse.app_codes[object].clone());

    let pos_tensor = Tensor::from_vec(
        &[n, 3],
        batch.positions.iter().flat_map(|p| p.to_array()).collect(),
    );
    // Values along rays (no spatial tangents needed here).
    let enc = tape.constant(posenc.encode_batch(&pos_tensor));
    let zsb = tape.repeat_row(zs, n);
    let gx = tape.concat_cols(&[enc, zsb]);
    let s = g_vars.forward_taped(&mut tape, gx);
    let sigma = density_taped(&mut tape, s, &cfg.density);
    let lam = taped_weights(&mut tape, sigma, &batch.deltas, n_rays, s_per);

    let lam_vals = tape.value(lam).data.clone();
    let sel = select_samples(&lam_vals, cfg.weight_threshold);
    let sel_ray: Vec<usize> = sel.iter().map(|&i| i / s_per).collect();
    let enc_sel = tape.gather_rows(enc, &sel);
    let venc_sel = {
        let vraw = Tensor::from_vec(
            &[sel.len(), 3],
            sel.iter()
                .flat_map(|&i| batch.view_dirs[i / s_per].to_array())
                .collect(),
        );
        tape.constant(posenc_view.encode_batch(&vraw))
    };
    let zab = tape.repeat_row(za, sel.len().max(1));
    let rgb_sel = if sel.is_empty() {
        None
    } else {
        let hx = tape.concat_cols(&[enc_sel, venc_sel, zab]);
        Some(h_vars.forward_taped(&mut tape, hx))
    };

    let c_pred = {
        let lam_grid = tape.reshape(lam, &[n_rays, s_per]);
        let opacity = tape.sum_cols(lam_grid);
        let nop = tape.neg(opacity);
        let residual = tape.add_scalar(nop, 1.0);
        let bg = tape.constant(Tensor::from_vec(
            &[n_rays, 3],
            (0..n_rays).flat_map(|_| cfg.background).collect(),
        ));
        let bg_part = tape.mul_col_broadcast(bg, residual);
        match rgb_sel {
            Some(rgb) => {
                let lam_sel = tape.gather_rows(lam, &sel);
                let weighted = tape.mul_col_broadcast(rgb, lam_sel);
                let c_fg = tape.scatter_sum_rows(weighted, &sel_ray, n_rays);
                tape.add(c_fg, bg_part)
            }
            None => bg_part,
        }
    };
    let gt = tape.constant(Tensor::from_vec(
        &[n_rays, 3],
        batch.gt.iter().flatten().copied().collect(),
    ));
    let diff = tape.sub(c_pred, gt);
    let adiff = tape.abs(diff);
    let l_rgb = tape.mean_all(adiff);

    // Eikonal on the coarse SDF.
    let mut erng = ChaCha12Rng::seed_from_u64(eik_seed);
    let eik_pts: Vec<Vec3> = (0..cfg.eik_batch)
        .map(|_| {
            vec3(
                erng.gen_range(-1.0..1.0),
                erng.gen_range(-1.0..1.0),
                erng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let eik_tensor = Tensor::from_vec(
        &[eik_pts.len(), 3],
        eik_pts.iter().flat_map(|p| p.to_array()).collect(),
    );
    let seeded = dual::seed_positions(&mut tape, eik_tensor);
    let enc_dual = posenc.encode_taped_dual(&mut tape, seeded);
    let zse = tape.repeat_row(zs, eik_pts.len());
    let zsd = dual::constant_dual(&mut tape, zse);
    let gx_dual = dual::concat_cols(&mut tape, &[enc_dual, zsd]);
    let s_dual = g_vars.forward_taped_dual(&mut tape, gx_dual);
    let gvec = dual::gradient(&mut tape, s_dual);
    let gsq = tape.square(gvec);
    let gsum = tape.sum_cols(gsq);
    let gse = tape.add_scalar(gsum, 1e-12);
    let gn = tape.sqrt(gse);
    let gd = tape.add_scalar(gn, -1.0);
    let gsq2 = tape.square(gd);
    let l_eik = tape.mean_all(gsq2);

    let zs_norm = build_code_norm(&mut tape, zs);
    let za_norm = build_code_norm(&mut tape, za);
    let l_code = tape.add(zs_norm, za_norm);

    let e_term = tape.mul_scalar(l_eik, cfg.lambdas.eikonal);
    let c_term = tape.mul_scalar(l_code, cfg.lambdas.code);
    let partial = tape.add(l_rgb, e_term);
    let total = tape.add(partial, c_term);

    let rgb_val = tape.value(l_rgb).scalar_value();
    let eik_val = tape.value(l_eik).scalar_value();
    tape.backward(total).map_err(RenderError::Nn)?;

    let net_grads: Vec<Tensor> = g_vars
        .vars()
        .iter()
        .chain(h_vars.vars().iter())
        .map(|&v| tape.grad(v))
        .collect();
    {
        let mut refs: Vec<&mut Tensor> = Vec::new();
        refs.extend(coarse.g_sdf.params_mut());
        refs.extend(coarse.head.params_mut());
        adam_step(&mut refs, &net_grads, net_state, &AdamParams::new(lr))
            .map_err(RenderError::Nn)?;
    }
    {
        let code_grads = vec![tape.grad(zs), tape.grad(za)];
        let mut refs: Vec<&mut Tensor> = vec![
            coarse.shape_codes.get_mut(object).expect("zs"),
            coarse.app_codes.get_mut(object).expect("za"),
        ];
        adam_step(&mut refs, &code_grads, code_state, &AdamParams::new(lr))
            .map_err(RenderError::Nn)?;
    }
    Ok((rgb_val, eik_val))
}

// ---- the full pipeline ----

pub fn two_phase_train(
    datasets: &BTreeMap<String, Dataset>,
    cfg: &PipelineConfig,
) -> Result<(ParamModel, PipelineReport), RenderError> {
    if datasets.is_empty() {
        return Err(RenderError::BadDataset("no objects given".into()));
    }
    for (id, ds) in datasets {
        if ds.cameras.len() < 2 {
            return Err(RenderError::BadDataset(format!(
                "object {id:?} needs at least 2 views"
            )));
        }
    }
    let objects: Vec<String> = datasets.keys().cloned().collect();
    let mut report = PipelineReport {
        lambdas: cfg.lambdas,
        ..Default::default()
    };

    // Phase A: coarse geometry + throwaway radiance head.
    let coarse = phase_a(datasets, cfg, &mut report)?;

    // Phase B: one-time domain fit against the coarse SDF at the mean code,
    // after which the coarse network is discarded.
    let mean_code: Vec<f64> = {
        let dim = cfg.deform.latent_dim;
        let mut acc = vec![0.0; dim];
        for z in coarse.shape_codes.values() {
            for (a, b) in acc.iter_mut().zip(&z.data) {
                *a += b;
            }
        }
        acc.iter().map(|a| a / objects.len() as f64).collect()
    };
    let coarse_field = SdfField::Mlp(MlpField {
        mlp: coarse.g_sdf.clone(),
        posenc: cfg.deform.posenc,
        latent: Some(mean_code),
    });
    let mut spec = match cfg.domain_kind {
        DomainKind::Sphere => DomainSpec::sphere(stream_seed(cfg.seed, "domain-fit", 0)),
        DomainKind::Polycube => {
            DomainSpec::polycube(cfg.domain_k, stream_seed(cfg.seed, "domain-fit", 0))
        }
    };
    spec.lambda_s = cfg.domain_lambda_s;
    let (domain, fit_report) =
        fit_domain(&coarse_field, &spec).map_err(|e| RenderError::DomainFit(e.to_string()))?;
    if !fit_report.converged {
        report.domain = Some(fit_report);
        return Err(RenderError::DomainFit(format!(
            "domain fit did not converge (final L_sdf {})",
            report.domain.as_ref().unwrap().final_l_sdf
        )));
    }
    report.domain = Some(fit_report);

    // Phase C model: identity deformations over the frozen domain, codes
    // carried over from the coarse phase.
    let mut model = ParamModel {
        deform: {
            let mut m = DeformModel::new(&cfg.deform, domain, &objects, cfg.seed);
            m.codes = coarse.shape_codes.clone();
            m
        },
        appearance: {
            let mut a = AppearanceModel::new(&cfg.appearance, &objects, cfg.seed);
            a.codes = coarse.app_codes.clone();
            a
        },
        density: cfg.density,
        background: cfg.background,
        seed: cfg.seed,
    };

    let mut resume = ResumeState::default();
    for o in &objects {
        resume.code_states.insert(o.clone(), AdamState::default());
    }
    run_phase_c(&mut model, &mut resume, datasets, cfg, &mut report)?;
    Ok((model, report))
}

/// Continue phase C from a checkpointed epoch; sampling depends only on
/// (seed, epoch), so resumed trajectories are bit-identical.
pub fn resume_phase_c(
    model: &mut ParamModel,
    resume: &mut ResumeState,
    datasets: &BTreeMap<String, Dataset>,
    cfg: &PipelineConfig,
) -> Result<PipelineReport, RenderError> {
    let mut report = PipelineReport {
        lambdas: cfg.lambdas,
        ..Default::default()
    };
    run_phase_c(model, resume, datasets, cfg, &mut report)?;
    Ok(report)
}

fn run_phase_c(
    model: &mut ParamModel,
    resume: &mut ResumeState,
    datasets: &BTreeMap<String, Dataset>,
    cfg: &PipelineConfig,
    report: &mut PipelineReport,
) -> Result<(), RenderError> {
    let objects: Vec<String> = datasets.keys().cloned().collect();
    let total_steps = (cfg.phase_c_epochs * objects.len()) as u64;
    let start = resume.epoch;

    for epoch in start..cfg.phase_c_epochs {
        let snapshot = (model.deform.clone(), model.appearance.clone());
        let mut losses = ImageEpochLosses::default();
        for (oi, object) in objects.iter().enumerate() {
            let tag = (epoch * objects.len() + oi) as u64;
            let batch = sample_pixel_batch(
                &datasets[object],
                cfg.pixel_batch,
                cfg.samples_per_ray,
                stream_seed(cfg.seed, "c-pixels", tag),
            );
            if batch.n_rays == 0 {
                continue;
            }
            let lap = laplace_inputs(
                model,
                object,
                &batch,
                cfg,
                stream_seed(cfg.seed, "c-neighbors", tag),
            )?;
            let eik = eikonal_points(
                model,
                object,
                &batch,
                cfg.eik_batch,
                stream_seed(cfg.seed, "c-eik", tag),
            )?;

            let mut tape = Tape::new();
            let dvars = model
                .deform
                .register(&mut tape, std::slice::from_ref(object))
                .map_err(RenderError::Deform)?;
            let avars = model
                .appearance
                .register(&mut tape, std::slice::from_ref(object))?;
            let built = build_phase_c_losses(
                &mut tape,
                model,
                &dvars,
                &avars,
                object,
                &batch,
                lap.as_ref(),
                &eik,
                cfg,
            )?;
            let total_val = tape.value(built.total).scalar_value();
            if !total_val.is_finite() {
                model.deform = snapshot.0;
                model.appearance = snapshot.1;
                report.aborted =
                    Some(format!("non-finite loss at epoch {epoch} object {object}"));
                return Ok(());
            }
            losses.rgb += tape.value(built.rgb).scalar_value();
            losses.eikonal += tape.value(built.eikonal).scalar_value();
            losses.cycle += tape.value(built.cycle).scalar_value();
            losses.smooth += tape.value(built.smooth).scalar_value();
            losses.laplace += tape.value(built.laplace).scalar_value();
            losses.shading += tape.value(built.shading).scalar_value();
            losses.code += tape.value(built.code).scalar_value();
            losses.total += total_val;

            tape.backward(built.total).map_err(RenderError::Nn)?;
            let step_idx = epoch as u64 * objects.len() as u64 + oi as u64;
            let lr = cosine_lr(cfg.lr_c, step_idx, total_steps, 0.05);

            let net_grads: Vec<Tensor> = dvars
                .f_def
                .vars()
                .iter()
                .chain(dvars.f_inv.vars().iter())
                .chain(avars.f_mat.vars().iter())
                .chain(avars.f_shd.vars().iter())
                .map(|&v| tape.grad(v))
                .collect();
            {
                let mut refs: Vec<&mut Tensor> = Vec::new();
                refs.extend(model.deform.f_def.params_mut());
                refs.extend(model.deform.f_inv.params_mut());
                refs.extend(model.appearance.f_mat.params_mut());
                refs.extend(model.appearance.f_shd.params_mut());
                adam_step(&mut refs, &net_grads, &mut resume.net_state, &AdamParams::new(lr))
                    .map_err(RenderError::Nn)?;
            }
            {
                let code_grads = vec![
                    tape.grad(dvars.codes[object]),
                    tape.grad(avars.codes[object]),
                ];
                let state = resume
                    .code_states
                    .entry(object.clone())
                    .or_default();
                let mut refs: Vec<&mut Tensor> = vec![
                    model.deform.codes.get_mut(object).expect("zs"),
                    model.appearance.codes.get_mut(object).expect("za"),
                ];
                adam_step(&mut refs, &code_grads, state, &AdamParams::new(lr))
                    .map_err(RenderError::Nn)?;
            }
        }
        let k = objects.len() as f64;
        losses.rgb /= k;
        losses.eikonal /= k;
        losses.cycle /= k;
        losses.smooth /= k;
        losses.laplace /= k;
        losses.shading /= k;
        losses.code /= k;
        losses.total /= k;
        report.phase_c.push(losses);
        resume.epoch = epoch + 1;

        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            if let Some(stem) = &cfg.checkpoint_stem {
                model.save(stem, Some(resume))?;
            }
        }
    }
    Ok(())
}

/// Line-oriented trace with exactly the seven loss names of the total
/// objective.
pub fn write_pipeline_report(
    report: &PipelineReport,
    path: &std::path::Path,
) -> std::io::Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from("# surfmap two-phase training trace v1\n");
    let l = &report.lambdas;
    let _ = writeln!(
        out,
        "lambdas eikonal={} cycle={} smooth={} laplace={} shading={} code={}",
        l.eikonal, l.cycle, l.smooth, l.laplace, l.shading, l.code
    );
    if let Some(reason) = &report.aborted {
        let _ = writeln!(out, "aborted {reason}");
    }
    for (i, (rgb, eik)) in report.phase_a.iter().enumerate() {
        let _ = writeln!(out, "phase=A epoch={i} rgb={rgb:.6e} eikonal={eik:.6e}");
    }
    if let Some(d) = &report.domain {
        let _ = writeln!(
            out,
            "phase=B iterations={} converged={} final_l_sdf={:.6e}",
            d.iterations_used, d.converged, d.final_l_sdf
        );
    }
    for (i, e) in report.phase_c.iter().enumerate() {
        let _ = writeln!(
            out,
            "phase=C epoch={} rgb={:.6e} eikonal={:.6e} cycle={:.6e} smooth={:.6e} laplace={:.6e} shading={:.6e} code={:.6e} total={:.6e}",
            i, e.rgb, e.eikonal, e.cycle, e.smooth, e.laplace, e.shading, e.code, e.total
        );
    }
    std::fs::write(path, out)
}
