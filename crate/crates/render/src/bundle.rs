//! The trained bundle and its checkpoint round trip.

use std::collections::BTreeMap;
use std::path::Path;

use surfmap_deform::{DeformConfig, DeformModel};
use surfmap_nn::{
    Activation, AdamState, Checkpoint, Mlp, MlpConfig, OutputTransform, PosEncConfig, Tensor,
};
use surfmap_sdf::{format_field_descriptor, parse_field_descriptor, SdfField};

use crate::appearance::{AppearanceConfig, AppearanceModel};
use crate::density::DensityConfig;
use crate::RenderError;

/// Everything a render needs: the frozen domain, both deformations, the
/// appearance networks and all per-object codes.
#[derive(Clone, Debug)]
pub struct ParamModel {
    pub deform: DeformModel,
    pub appearance: AppearanceModel,
    pub density: DensityConfig,
    pub background: [f64; 3],
    pub seed: u64,
}

/// Optimizer snapshot stored with a checkpoint so training can resume
/// bit-identically.
#[derive(Clone, Debug, Default)]
pub struct ResumeState {
    pub epoch: usize,
    pub net_state: AdamState,
    pub code_states: BTreeMap<String, AdamState>,
}

impl ParamModel {
    pub fn object_ids(&self) -> Vec<String> {
        self.deform.codes.keys().cloned().collect()
    }

    /// Replace the parametric domain; rendering and meshing then use the new
    /// composed geometry with no retraining.
    pub fn with_domain(&self, domain: SdfField) -> ParamModel {
        let mut out = self.clone();
        out.deform.domain = domain;
        out
    }

    pub fn to_checkpoint(&self, resume: Option<&ResumeState>) -> Result<Checkpoint, RenderError> {
        let mut ck = Checkpoint {
            seed: self.seed,
            ..Default::default()
        };
        let cfg = &mut ck.config;
        cfg.insert(
            "domain".into(),
            format_field_descriptor(&self.deform.domain)
                .map_err(|e| RenderError::Checkpoint(e.to_string()))?,
        );
        cfg.insert("objects".into(), self.object_ids().join(","));
        cfg.insert("deform.posenc".into(), self.deform.posenc.num_frequencies.to_string());
        cfg.insert("deform.latent_dim".into(), self.deform.latent_dim.to_string());
        cfg.insert("deform.depth".into(), self.deform.f_def.cfg.depth.to_string());
        cfg.insert("deform.width".into(), self.deform.f_def.cfg.width.to_string());
        cfg.insert(
            "app.posenc_pos".into(),
            self.appearance.posenc_pos.num_frequencies.to_string(),
        );
        cfg.insert(
            "app.posenc_view".into(),
            self.appearance.posenc_view.num_frequencies.to_string(),
        );
        cfg.insert("app.latent_dim".into(), self.appearance.latent_dim.to_string());
        cfg.insert("app.depth".into(), self.appearance.f_mat.cfg.depth.to_string());
        cfg.insert("app.width".into(), self.appearance.f_mat.cfg.width.to_string());
        cfg.insert("density.beta".into(), self.density.beta.to_string());
        cfg.insert("density.alpha".into(), self.density.alpha.to_string());
        cfg.insert(
            "background".into(),
            format!("{},{},{}", self.background[0], self.background[1], self.background[2]),
        );

        push_mlp(&mut ck, "deform.f_def", &self.deform.f_def);
        push_mlp(&mut ck, "deform.f_inv", &self.deform.f_inv);
        push_mlp(&mut ck, "app.f_mat", &self.appearance.f_mat);
        push_mlp(&mut ck, "app.f_shd", &self.appearance.f_shd);
        for (id, z) in &self.deform.codes {
            ck.push(format!("code.shape.{id}"), z.clone());
        }
        for (id, z) in &self.appearance.codes {
            ck.push(format!("code.app.{id}"), z.clone());
        }
        if let Some(r) = resume {
            ck.config.insert("resume.epoch".into(), r.epoch.to_string());
            push_adam(&mut ck, "opt.net", &r.net_state);
            for (id, st) in &r.code_states {
                push_adam(&mut ck, &format!("opt.code.{id}"), st);
            }
        }
        Ok(ck)
    }

    pub fn save(&self, stem: &Path, resume: Option<&ResumeState>) -> Result<(), RenderError> {
        self.to_checkpoint(resume)?
            .save(stem)
            .map_err(RenderError::Nn)
    }

    pub fn from_checkpoint(mut ck: Checkpoint) -> Result<(ParamModel, Option<ResumeState>), RenderError> {
        let domain = parse_field_descriptor(ck.config_str("domain")?)
            .map_err(|e| RenderError::Checkpoint(e.to_string()))?;
        let objects: Vec<String> = ck
            .config_str("objects")?
            .split(',')
            .map(|s| s.to_string())
            .collect();
        let parse = |ck: &Checkpoint, key: &str| -> Result<usize, RenderError> {
            ck.config_str(key)?
                .parse::<usize>()
                .map_err(|e| RenderError::Checkpoint(format!("{key}: {e}")))
        };
        let deform_cfg = DeformConfig {
            posenc: PosEncConfig::new(parse(&ck, "deform.posenc")?),
            latent_dim: parse(&ck, "deform.latent_dim")?,
            depth: parse(&ck, "deform.depth")?,
            width: parse(&ck, "deform.width")?,
        };
        let app_cfg = AppearanceConfig {
            posenc_pos: PosEncConfig::new(parse(&ck, "app.posenc_pos")?),
            posenc_view: PosEncConfig::new(parse(&ck, "app.posenc_view")?),
            latent_dim: parse(&ck, "app.latent_dim")?,
            depth: parse(&ck, "app.depth")?,
            width: parse(&ck, "app.width")?,
        };
        let density = DensityConfig {
            beta: ck
                .config_str("density.beta")?
                .parse()
                .map_err(|e| RenderError::Checkpoint(format!("density.beta: {e}")))?,
            alpha: ck
                .config_str("density.alpha")?
                .parse()
                .map_err(|e| RenderError::Checkpoint(format!("density.alpha: {e}")))?,
        };
        let bg: Vec<f64> = ck
            .config_str("background")?
            .split(',')
            .filter_map(|t| t.parse().ok())
            .collect();
        if bg.len() != 3 {
            return Err(RenderError::Checkpoint("background needs 3 numbers".into()));
        }

        let f_def = take_mlp(
            &mut ck,
            "deform.f_def",
            MlpConfig::new(
                deform_cfg.depth,
                deform_cfg.width,
                deform_cfg.posenc.dim() + deform_cfg.latent_dim,
                3,
            )
            .with_activation(Activation::Softplus),
        )?;
        let f_inv = take_mlp(
            &mut ck,
            "deform.f_inv",
            MlpConfig::new(
                deform_cfg.depth,
                deform_cfg.width,
                deform_cfg.posenc.dim() + deform_cfg.latent_dim,
                3,
            )
            .with_activation(Activation::Softplus),
        )?;
        let f_mat = take_mlp(
            &mut ck,
            "app.f_mat",
            MlpConfig::new(
                app_cfg.depth,
                app_cfg.width,
                app_cfg.posenc_pos.dim() + 3 + app_cfg.latent_dim,
                3,
            )
            .with_activation(Activation::Relu)
            .with_output(OutputTransform::Sigmoid),
        )?;
        let f_shd = take_mlp(
            &mut ck,
            "app.f_shd",
            MlpConfig::new(
                app_cfg.depth,
                app_cfg.width,
                app_cfg.posenc_pos.dim() + 3 + app_cfg.posenc_view.dim() + app_cfg.latent_dim,
                1,
            )
            .with_activation(Activation::Relu),
        )?;
        let mut shape_codes = BTreeMap::new();
        let mut app_codes = BTreeMap::new();
        for id in &objects {
            shape_codes.insert(id.clone(), ck.take(&format!("code.shape.{id}"))?);
            app_codes.insert(id.clone(), ck.take(&format!("code.app.{id}"))?);
        }

        let resume = if ck.config.contains_key("resume.epoch") {
            let epoch: usize = ck
                .config_str("resume.epoch")?
                .parse()
                .map_err(|e| RenderError::Checkpoint(format!("resume.epoch: {e}")))?;
            let net_state = take_adam(&mut ck, "opt.net")?;
            let mut code_states = BTreeMap::new();
            for id in &objects {
                code_states.insert(id.clone(), take_adam(&mut ck, &format!("opt.code.{id}"))?);
            }
            Some(ResumeState {
                epoch,
                net_state,
                code_states,
            })
        } else {
            None
        };

        let model = ParamModel {
            deform: DeformModel {
                f_def,
                f_inv,
                domain,
                codes: shape_codes,
                posenc: deform_cfg.posenc,
                latent_dim: deform_cfg.latent_dim,
            },
            appearance: AppearanceModel {
                f_mat,
                f_shd,
                codes: app_codes,
                posenc_pos: app_cfg.posenc_pos,
                posenc_view: app_cfg.posenc_view,
                latent_dim: app_cfg.latent_dim,
            },
            density,
            background: [bg[0], bg[1], bg[2]],
            seed: ck.seed,
        };
        Ok((model, resume))
    }

    pub fn load(stem: &Path) -> Result<(ParamModel, Option<ResumeState>), RenderError> {
        Self::from_checkpoint(Checkpoint::load(stem)?)
    }
}

fn push_mlp(ck: &mut Checkpoint, prefix: &str, mlp: &Mlp) {
    for (i, layer) in mlp.layers.iter().enumerate() {
        ck.push(format!("{prefix}.{i}.w"), layer.w.clone());
        ck.push(format!("{prefix}.{i}.b"), layer.b.clone());
    }
}

fn take_mlp(ck: &mut Checkpoint, prefix: &str, cfg: MlpConfig) -> Result<Mlp, RenderError> {
    let mut layers = Vec::with_capacity(cfg.depth);
    for i in 0..cfg.depth {
        let w = ck.take(&format!("{prefix}.{i}.w"))?;
        let b = ck.take(&format!("{prefix}.{i}.b"))?;
        layers.push(surfmap_nn::mlp::Linear { w, b });
    }
    Ok(Mlp { cfg, layers })
}

fn push_adam(ck: &mut Checkpoint, prefix: &str, st: &AdamState) {
    ck.push(
        format!("{prefix}.step"),
        Tensor::scalar(st.step as f64),
    );
    for (i, m) in st.m.iter().enumerate() {
        ck.push(format!("{prefix}.m.{i}"), m.clone());
    }
    for (i, v) in st.v.iter().enumerate() {
        ck.push(format!("{prefix}.v.{i}"), v.clone());
    }
}

fn take_adam(ck: &mut Checkpoint, prefix: &str) -> Result<AdamState, RenderError> {
    let step = ck.take(&format!("{prefix}.step"))?.scalar_value() as u64;
    let mut m = Vec::new();
    let mut v = Vec::new();
    let mut i = 0;
    while let Ok(t) = ck.take(&format!("{prefix}.m.{i}")) {
        m.push(t);
        v.push(ck.take(&format!("{prefix}.v.{i}"))?);
        i += 1;
    }
    Ok(AdamState { step, m, v })
}
