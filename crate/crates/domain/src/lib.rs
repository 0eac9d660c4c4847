//! One-time domain fitting: optimize the handful of sphere or polycube
//! parameters so the domain SDF matches a coarse target SDF, under an L1
//! value term plus a Laplacian complexity penalty.

mod loss;
mod sample;

pub use loss::{loss_param, LossParts};
pub use sample::{init_boxes, init_sphere, sample_fit_points};

use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;
use thiserror::Error;

use surfmap_nn::{adam_step, stream_seed, AdamParams, AdamState, Tensor};
use surfmap_sdf::{PolycubeParams, SdfField, Vec3};

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("rejection sampling found no interior points (degenerate target)")]
    DegenerateTarget,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Sdf(#[from] surfmap_sdf::SdfError),
    #[error(transparent)]
    Nn(#[from] surfmap_nn::NnError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    Sphere,
    Polycube,
}

#[derive(Clone, Debug)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub k: usize,
    pub lambda_s: f64,
    pub ks_lambda: f64,
    pub max_iters: usize,
    pub samples_per_iter: usize,
    pub seed: u64,
    pub lr: f64,
}

impl DomainSpec {
    pub fn sphere(seed: u64) -> Self {
        DomainSpec {
            kind: DomainKind::Sphere,
            k: 1,
            lambda_s: 0.01,
            ks_lambda: 100.0,
            max_iters: 60,
            samples_per_iter: 4096,
            seed,
            lr: 0.012,
        }
    }

    pub fn polycube(k: usize, seed: u64) -> Self {
        DomainSpec {
            kind: DomainKind::Polycube,
            k,
            lr: 0.12,
            ..DomainSpec::sphere(seed)
        }
    }

    fn validate(&self) -> Result<(), DomainError> {
        if self.k < 1 {
            return Err(DomainError::InvalidSpec("k must be >= 1".into()));
        }
        if self.lambda_s < 0.0 {
            return Err(DomainError::InvalidSpec("lambda_s must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DomainFitReport {
    /// Per-iteration (L_sdf, L_lapsdf) values.
    pub trace: Vec<(f64, f64)>,
    pub converged: bool,
    pub iterations_used: usize,
    pub final_l_sdf: f64,
}

/// Minimum half extent / radius kept during optimization.
pub const EXTENT_CLAMP: f64 = 0.02;

/// Stop when the best loss of the last 5 iterations improves on the best
/// before them by less than this relative amount. The check starts late
/// enough that optimizer transients cannot trigger it.
const EARLY_STOP_REL: f64 = 1e-4;
const EARLY_STOP_FROM: usize = 40;

/// Learning rate decays exponentially to this fraction of its start so an
/// L1 objective settles instead of orbiting the optimum at step size.
const LR_FLOOR_FRAC: f64 = 1.5e-3;

pub fn fit_domain(
    target: &SdfField,
    spec: &DomainSpec,
) -> Result<(SdfField, DomainFitReport), DomainError> {
    spec.validate()?;
    match spec.kind {
        DomainKind::Sphere => fit_generic(target, spec, SphereDof::init(target, spec)?),
        DomainKind::Polycube => fit_generic(target, spec, PolycubeDof::init(target, spec)?),
    }
}

/// Degrees of freedom of a fit: packs parameters into one tensor.
trait DomainDof: Sized {
    fn params(&self) -> Tensor;
    fn set_params(&mut self, t: &Tensor);
    fn clamp(&mut self);
    fn ks_lambda(&self) -> f64;
    fn to_field(&self) -> SdfField;
    fn collapsed(&self) -> bool;
}

struct SphereDof {
    center: Vec3,
    radius: f64,
}

impl SphereDof {
    fn init(target: &SdfField, spec: &DomainSpec) -> Result<Self, DomainError> {
        let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(spec.seed, "sphere-init", 0));
        let (center, radius) = init_sphere(target, &mut rng)?;
        Ok(SphereDof { center, radius })
    }
}

impl DomainDof for SphereDof {
    fn params(&self) -> Tensor {
        Tensor::from_vec(
            &[1, 4],
            vec![self.center.x, self.center.y, self.center.z, self.radius],
        )
    }
    fn set_params(&mut self, t: &Tensor) {
        self.center = Vec3::from_array([t.data[0], t.data[1], t.data[2]]);
        self.radius = t.data[3];
    }
    fn clamp(&mut self) {
        self.radius = self.radius.max(EXTENT_CLAMP);
    }
    fn ks_lambda(&self) -> f64 {
        100.0
    }
    fn to_field(&self) -> SdfField {
        SdfField::sphere(self.center, self.radius)
    }
    fn collapsed(&self) -> bool {
        self.radius <= EXTENT_CLAMP + 1e-9
    }
}

struct PolycubeDof {
    pc: PolycubeParams,
}

impl PolycubeDof {
    fn init(target: &SdfField, spec: &DomainSpec) -> Result<Self, DomainError> {
        let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(spec.seed, "box-init", 0));
        let mut pc = init_boxes(target, spec.k, &mut rng)?;
        pc.ks_lambda = spec.ks_lambda;
        Ok(PolycubeDof { pc })
    }
}

impl DomainDof for PolycubeDof {
    fn params(&self) -> Tensor {
        let k = self.pc.k();
        let mut data = Vec::with_capacity(k * 6);
        for b in &self.pc.boxes {
            data.extend_from_slice(&b.center.to_array());
            data.extend_from_slice(&b.half_extents.to_array());
        }
        Tensor::from_vec(&[k, 6], data)
    }
    fn set_params(&mut self, t: &Tensor) {
        for (i, b) in self.pc.boxes.iter_mut().enumerate() {
            let row = t.row(i);
            b.center = Vec3::from_array([row[0], row[1], row[2]]);
            b.half_extents = Vec3::from_array([row[3], row[4], row[5]]);
        }
    }
    fn clamp(&mut self) {
        for b in &mut self.pc.boxes {
            b.half_extents.x = b.half_extents.x.max(EXTENT_CLAMP);
            b.half_extents.y = b.half_extents.y.max(EXTENT_CLAMP);
            b.half_extents.z = b.half_extents.z.max(EXTENT_CLAMP);
        }
    }
    fn ks_lambda(&self) -> f64 {
        self.pc.ks_lambda
    }
    fn to_field(&self) -> SdfField {
        SdfField::Polycube(self.pc.clone())
    }
    fn collapsed(&self) -> bool {
        self.pc.boxes.iter().all(|b| {
            b.half_extents.x <= EXTENT_CLAMP + 1e-9
                && b.half_extents.y <= EXTENT_CLAMP + 1e-9
                && b.half_extents.z <= EXTENT_CLAMP + 1e-9
        })
    }
}

fn fit_generic<D: DomainDof>(
    target: &SdfField,
    spec: &DomainSpec,
    mut dof: D,
) -> Result<(SdfField, DomainFitReport), DomainError> {
    let mut state = AdamState::default();
    let mut trace: Vec<(f64, f64)> = Vec::with_capacity(spec.max_iters);
    let mut totals: Vec<f64> = Vec::with_capacity(spec.max_iters);
    let mut stopped_early = false;

    for iter in 0..spec.max_iters {
        let pts = sample_fit_points(
            target,
            spec.samples_per_iter,
            stream_seed(spec.seed, "fit-points", iter as u64),
        );
        let target_vals: Vec<f64> = target.eval_batch(&pts);

        let mut tape = surfmap_nn::Tape::new();
        let pvar = tape.param(dof.params());
        let parts = loss_param(
            &mut tape,
            pvar,
            matches!(spec.kind, DomainKind::Sphere),
            dof.ks_lambda(),
            &pts,
            &target_vals,
            spec.lambda_s,
        );
        let l_sdf = tape.value(parts.l_sdf).scalar_value();
        let l_lap = tape.value(parts.l_lapsdf).scalar_value();
        trace.push((l_sdf, l_lap));
        totals.push(tape.value(parts.total).scalar_value());

        tape.backward(parts.total)?;
        let grad = tape.grad(pvar);
        let mut params = dof.params();
        let ratio = LR_FLOOR_FRAC.powf(1.0 / spec.max_iters as f64);
        let lr = spec.lr * ratio.powi(iter as i32);
        let hp = AdamParams {
            beta1: 0.5,
            ..AdamParams::new(lr)
        };
        adam_step(&mut [&mut params], &[grad], &mut state, &hp)?;
        dof.set_params(&params);
        dof.clamp();

        // Relative-improvement stop: two equal 5-iteration windows so
        // resampling noise does not bias the comparison.
        if iter >= EARLY_STOP_FROM {
            let last5 = totals[iter - 4..=iter].iter().cloned().fold(f64::INFINITY, f64::min);
            let prev5 = totals[iter - 9..=iter - 5]
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if prev5.is_finite() && (prev5 - last5) / prev5.max(1e-12) < EARLY_STOP_REL {
                stopped_early = true;
                break;
            }
        }
    }

    let iterations_used = trace.len();
    let final_l_sdf = trace.last().map(|t| t.0).unwrap_or(f64::INFINITY);
    let collapsed = dof.collapsed() && final_l_sdf > 0.5;
    let report = DomainFitReport {
        trace,
        converged: !collapsed && (stopped_early || final_l_sdf < 0.5),
        iterations_used,
        final_l_sdf,
    };
    Ok((dof.to_field(), report))
}

/// Fitted-domain export for the editing path.
pub fn export_domain(field: &SdfField, path: &std::path::Path) -> Result<(), DomainError> {
    surfmap_sdf::write_domain_file(field, path)?;
    Ok(())
}

pub use surfmap_sdf::read_domain_file as import_domain;
