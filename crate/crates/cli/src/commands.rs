//! Subcommand implementations. Progress output is line-oriented key=value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use surfmap_deform::{DeformConfig, DeformModel, TrainConfig};
use surfmap_domain::{fit_domain, DomainSpec};
use surfmap_mesh::{
    bake_texture, chamfer_distance, distortion_report, extract_surface, map_mesh,
    transfer_texture, TextureAtlas, TriangleMesh,
};
use surfmap_nn::PosEncConfig;
use surfmap_render::{
    generate_synthetic_dataset, load_dataset, psnr_rgb, read_cameras, render_image, two_phase_train,
    write_pipeline_report, Albedo, AppearanceConfig, AppearanceModel, Camera, Dataset,
    DatasetConfig, DensityConfig, DirLight, ParamModel, PipelineConfig, RenderOptions, SceneSpec,
    ShadingMode,
};
use surfmap_sdf::{parse_field_descriptor, read_domain_file, vec3, SdfField, Vec3};

use crate::config::RunConfig;
use crate::error::CliError;

pub fn cmd_gen_data(cfg: &RunConfig, out_override: Option<&Path>) -> Result<(), CliError> {
    let base = out_override
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| Path::new(&cfg.output.dir).join("data"));
    for obj in &cfg.scene.objects {
        let sdf = obj
            .sdf
            .as_deref()
            .ok_or_else(|| CliError::usage(format!("object {:?} has no sdf descriptor", obj.id)))?;
        let shape = parse_field_descriptor(sdf)?;
        let albedo = match &obj.albedo {
            Some(a) => Albedo::parse(a)?,
            None => Albedo::Constant([0.75, 0.75, 0.75]),
        };
        let spec = SceneSpec {
            shape,
            shape_descriptor: sdf.to_string(),
            albedo,
            lights: cfg
                .scene
                .lights
                .iter()
                .map(|l| DirLight {
                    dir: vec3(l[0], l[1], l[2]).normalized(),
                    intensity: l[3],
                })
                .collect(),
            ambient: cfg.scene.ambient,
        };
        let ds_cfg = DatasetConfig {
            n_views: cfg.scene.views,
            resolution: cfg.render.resolution,
            seed: cfg.train.seed,
            camera_radius: cfg.scene.camera_radius,
            background: cfg.render.background,
        };
        let dir = base.join(&obj.id);
        generate_synthetic_dataset(&spec, &ds_cfg, &dir)?;
        println!("event=gen-data object={} dir={} views={}", obj.id, dir.display(), cfg.scene.views);
    }
    Ok(())
}

fn pipeline_config(cfg: &RunConfig, out_dir: &Path) -> Result<PipelineConfig, CliError> {
    Ok(PipelineConfig {
        deform: DeformConfig {
            posenc: PosEncConfig::new(cfg.train.posenc_pos),
            latent_dim: cfg.train.latent_dim,
            depth: cfg.train.deform_depth,
            width: cfg.train.deform_width,
        },
        appearance: AppearanceConfig {
            posenc_pos: PosEncConfig::new(cfg.train.posenc_pos),
            posenc_view: PosEncConfig::new(cfg.train.posenc_view),
            latent_dim: cfg.train.latent_dim,
            depth: cfg.train.app_depth,
            width: cfg.train.app_width,
        },
        domain_kind: cfg.domain_kind()?,
        domain_k: cfg.domain.k,
        domain_lambda_s: cfg.domain.lambda_s,
        phase_a_epochs: cfg.train.phase_a_epochs,
        phase_c_epochs: cfg.train.phase_c_epochs,
        pixel_batch: cfg.train.pixel_batch,
        samples_per_ray: cfg.render.samples_per_ray,
        lr_a: cfg.train.lr,
        lr_c: cfg.train.lr,
        lambdas: cfg.lambdas(),
        density: DensityConfig::with_beta(cfg.render.beta),
        background: cfg.render.background,
        weight_threshold: cfg.train.weight_threshold,
        eik_batch: cfg.train.eik_batch,
        cycle_batch: cfg.train.cycle_batch,
        lap_batch: cfg.train.lap_batch,
        neighbor_m: cfg.train.neighbor_m,
        neighbor_rho: cfg.train.neighbor_rho,
        g_depth: cfg.train.deform_depth,
        g_width: cfg.train.deform_width,
        init_steps: 200,
        seed: cfg.train.seed,
        checkpoint_every: cfg.train.checkpoint_every,
        checkpoint_stem: Some(out_dir.join("checkpoint")),
    })
}

pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<(), CliError> {
    let out_dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&out_dir)?;
    match cfg.train.supervision.as_str() {
        "images" => train_images(cfg, &out_dir, resume),
        "geometry" => train_geometry(cfg, &out_dir),
        other => Err(CliError::usage(format!(
            "train.supervision must be images or geometry, got {other:?}"
        ))),
    }
}

fn train_images(cfg: &RunConfig, out_dir: &Path, resume: Option<&Path>) -> Result<(), CliError> {
    let mut datasets: BTreeMap<String, Dataset> = BTreeMap::new();
    for obj in &cfg.scene.objects {
        let path = obj.dataset.as_deref().ok_or_else(|| {
            CliError::usage(format!("object {:?} has no dataset path", obj.id))
        })?;
        datasets.insert(obj.id.clone(), load_dataset(Path::new(path))?);
    }
    let pipe_cfg = pipeline_config(cfg, out_dir)?;
    echo_lambdas(&pipe_cfg);

    let (model, report) = match resume {
        None => {
            let (model, report) =
                two_phase_train(&datasets, &pipe_cfg).map_err(numerical_if_aborted)?;
            (model, report)
        }
        Some(stem) => {
            let (mut model, resume_state) = ParamModel::load(stem)?;
            let mut state = resume_state.ok_or_else(|| {
                CliError::usage("checkpoint has no optimizer state; cannot resume")
            })?;
            println!("event=resume epoch={}", state.epoch);
            let report =
                surfmap_render::resume_phase_c(&mut model, &mut state, &datasets, &pipe_cfg)
                    .map_err(numerical_if_aborted)?;
            (model, report)
        }
    };
    if let Some(reason) = &report.aborted {
        // Persist the last good state before failing.
        model.save(&out_dir.join("checkpoint"), None)?;
        return Err(CliError::numerical(format!("training aborted: {reason}")));
    }
    for (i, e) in report.phase_c.iter().enumerate() {
        println!(
            "phase=C epoch={} rgb={:.6e} eikonal={:.6e} cycle={:.6e} smooth={:.6e} laplace={:.6e} shading={:.6e} code={:.6e}",
            i, e.rgb, e.eikonal, e.cycle, e.smooth, e.laplace, e.shading, e.code
        );
    }
    model.save(&out_dir.join("checkpoint"), None)?;
    write_pipeline_report(&report, &out_dir.join("train_trace.txt"))?;
    surfmap_sdf::write_domain_file(&model.deform.domain, &out_dir.join("domain.txt"))?;
    println!("event=trained checkpoint={}", out_dir.join("checkpoint").display());
    Ok(())
}

fn numerical_if_aborted(e: surfmap_render::RenderError) -> CliError {
    CliError::from(e)
}

fn train_geometry(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let mut targets: BTreeMap<String, SdfField> = BTreeMap::new();
    for obj in &cfg.scene.objects {
        let sdf = obj
            .sdf
            .as_deref()
            .ok_or_else(|| CliError::usage(format!("object {:?} has no sdf descriptor", obj.id)))?;
        targets.insert(obj.id.clone(), parse_field_descriptor(sdf)?);
    }
    let objects: Vec<String> = targets.keys().cloned().collect();

    // Domain fit directly against the first analytic target (geometry mode
    // skips the coarse image phase).
    let mut spec = match cfg.domain_kind()? {
        surfmap_domain::DomainKind::Sphere => DomainSpec::sphere(cfg.train.seed),
        surfmap_domain::DomainKind::Polycube => DomainSpec::polycube(cfg.domain.k, cfg.train.seed),
    };
    spec.lambda_s = cfg.domain.lambda_s;
    spec.ks_lambda = cfg.domain.ks_lambda;
    let first_target = targets.values().next().expect("nonempty");
    let (domain, fit_report) = fit_domain(first_target, &spec)?;
    if !fit_report.converged {
        return Err(CliError::numerical(format!(
            "domain fit did not converge: final L_sdf {}",
            fit_report.final_l_sdf
        )));
    }
    println!(
        "phase=B iterations={} final_l_sdf={:.6e}",
        fit_report.iterations_used, fit_report.final_l_sdf
    );
    surfmap_sdf::write_domain_file(&domain, &out_dir.join("domain.txt"))?;

    let deform_cfg = DeformConfig {
        posenc: PosEncConfig::new(cfg.train.posenc_pos),
        latent_dim: cfg.train.latent_dim,
        depth: cfg.train.deform_depth,
        width: cfg.train.deform_width,
    };
    let mut model = DeformModel::new(&deform_cfg, domain, &objects, cfg.train.seed);
    let tcfg = TrainConfig {
        epochs: cfg.train.geometry_epochs,
        batch: cfg.train.geometry_batch,
        lap_batch: cfg.train.lap_batch,
        eik_batch: cfg.train.eik_batch,
        neighbor_m: cfg.train.neighbor_m,
        neighbor_rho: cfg.train.neighbor_rho,
        lr: cfg.train.lr,
        lambdas: cfg.lambdas(),
        seed: cfg.train.seed,
    };
    let report = surfmap_deform::train_parameterization(&mut model, &targets, &tcfg)?;
    if let Some(reason) = &report.aborted {
        return Err(CliError::numerical(format!("training aborted: {reason}")));
    }
    surfmap_deform::write_report(&report, &out_dir.join("train_trace.txt"))?;
    // Bundle with fresh appearance networks so every downstream command
    // works; geometry supervision trains only the parameterization.
    let app = AppearanceModel::new(
        &AppearanceConfig {
            posenc_pos: PosEncConfig::new(cfg.train.posenc_pos),
            posenc_view: PosEncConfig::new(cfg.train.posenc_view),
            latent_dim: cfg.train.latent_dim,
            depth: cfg.train.app_depth,
            width: cfg.train.app_width,
        },
        &objects,
        cfg.train.seed,
    );
    let bundle = ParamModel {
        deform: model,
        appearance: app,
        density: DensityConfig::with_beta(cfg.render.beta),
        background: cfg.render.background,
        seed: cfg.train.seed,
    };
    bundle.save(&out_dir.join("checkpoint"), None)?;
    let last = report.epochs.last().expect("epochs");
    println!(
        "event=trained mode=geometry surface={:.6e} cycle={:.6e}",
        last.surface, last.cycle
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportWhat {
    Mesh,
    DomainMesh,
    Metrics,
    Texture,
}

impl std::str::FromStr for ExportWhat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mesh" => Ok(ExportWhat::Mesh),
            "domain-mesh" => Ok(ExportWhat::DomainMesh),
            "metrics" => Ok(ExportWhat::Metrics),
            "texture" => Ok(ExportWhat::Texture),
            other => Err(format!("unknown export target {other:?}")),
        }
    }
}

pub struct ExportArgs<'a> {
    pub checkpoint: &'a Path,
    pub what: ExportWhat,
    pub object: Option<&'a str>,
    pub resolution: u32,
    pub texture_width: u32,
    pub out: Option<&'a Path>,
}

fn single_object(model: &ParamModel, requested: Option<&str>) -> Result<String, CliError> {
    match requested {
        Some(id) => {
            model
                .deform
                .code(id)
                .map_err(|e| CliError::usage(e.to_string()))?;
            Ok(id.to_string())
        }
        None => {
            let ids = model.object_ids();
            if ids.len() == 1 {
                Ok(ids[0].clone())
            } else {
                Err(CliError::usage(format!(
                    "bundle has {} objects; pass --object (one of {})",
                    ids.len(),
                    ids.join(", ")
                )))
            }
        }
    }
}

pub fn cmd_export(args: &ExportArgs) -> Result<(), CliError> {
    let (model, _) = ParamModel::load(args.checkpoint)?;
    let object = single_object(&model, args.object)?;
    let out_dir = args
        .out
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| args.checkpoint.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&out_dir)?;
    match args.what {
        ExportWhat::Mesh => {
            let mesh = extract_surface(&model, &object, args.resolution)?;
            if mesh.is_empty() {
                println!("event=export-mesh warning=empty-iso-surface");
            }
            let path = out_dir.join(format!("{object}_surface.obj"));
            mesh.write_obj(&path)?;
            println!(
                "event=export-mesh object={object} vertices={} triangles={} path={}",
                mesh.vertices.len(),
                mesh.triangles.len(),
                path.display()
            );
        }
        ExportWhat::DomainMesh => {
            let mesh = extract_surface(&model, &object, args.resolution)?;
            let mapped = map_mesh(&mesh, &model.deform, &object)?;
            let domain_mesh = TriangleMesh {
                vertices: mapped.mapped.clone().expect("mapped"),
                triangles: mapped.triangles.clone(),
                ..Default::default()
            };
            let path = out_dir.join(format!("{object}_domain.obj"));
            domain_mesh.write_obj(&path)?;
            println!(
                "event=export-domain-mesh object={object} vertices={} path={}",
                domain_mesh.vertices.len(),
                path.display()
            );
        }
        ExportWhat::Metrics => {
            let mesh = extract_surface(&model, &object, args.resolution)?;
            let mapped = map_mesh(&mesh, &model.deform, &object)?;
            let report = distortion_report(&mapped)?;
            let path = out_dir.join(format!("{object}_distortion.txt"));
            report.write(&path)?;
            println!(
                "event=export-metrics object={object} e_angle={} e_area={} path={}",
                report.mean_angle,
                report.mean_area,
                path.display()
            );
        }
        ExportWhat::Texture => {
            let atlas = bake_texture(&model, &object, args.texture_width, 2, None)?;
            let dir = out_dir.join(format!("{object}_atlas"));
            atlas.export(&dir)?;
            println!(
                "event=export-texture object={object} charts={} width={} occupancy={:.3} path={}",
                atlas.charts.len(),
                atlas.width,
                atlas.occupied_fraction(),
                dir.display()
            );
        }
    }
    Ok(())
}

pub struct RenderArgs<'a> {
    pub checkpoint: &'a Path,
    pub object: Option<&'a str>,
    pub out: &'a Path,
    pub camera: Option<&'a str>,
    pub resolution: Option<u32>,
    pub samples_per_ray: usize,
    pub texture_override: Option<&'a Path>,
    pub shading_from: Option<&'a str>,
    pub domain: Option<&'a Path>,
}

fn load_camera(arg: Option<&str>, fallback_res: u32) -> Result<Camera, CliError> {
    match arg {
        None => Ok(Camera::look_at(
            vec3(0.0, 0.3, 2.4),
            Vec3::ZERO,
            vec3(0.0, 1.0, 0.0),
            fallback_res as f64 * 1.2,
            fallback_res,
            fallback_res,
        )),
        Some(spec) => {
            let (path, index) = match spec.rsplit_once(':') {
                Some((p, idx)) if idx.chars().all(|c| c.is_ascii_digit()) => {
                    (p, idx.parse::<usize>().unwrap())
                }
                _ => (spec, 0),
            };
            let cams = read_cameras(Path::new(path))?;
            cams.get(index).copied().ok_or_else(|| {
                CliError::usage(format!(
                    "camera index {index} out of range ({} views)",
                    cams.len()
                ))
            })
        }
    }
}

pub fn cmd_render(args: &RenderArgs) -> Result<(), CliError> {
    let (mut model, _) = ParamModel::load(args.checkpoint)?;
    let object = single_object(&model, args.object)?;
    if let Some(domain_path) = args.domain {
        let new_domain = read_domain_file(domain_path)?;
        model = surfmap_mesh::swap_domain(&model, new_domain);
        println!("event=domain-swap path={}", domain_path.display());
    }
    let atlas = match args.texture_override {
        Some(dir) => {
            let atlas = TextureAtlas::import(dir)?;
            transfer_texture(&atlas, &model, &object)?;
            Some(atlas)
        }
        None => None,
    };
    if let Some(from) = args.shading_from {
        model
            .appearance
            .code(from)
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let cam = load_camera(args.camera, args.resolution.unwrap_or(64))?;
    let opts = RenderOptions {
        resolution: args.resolution,
        samples_per_ray: args.samples_per_ray,
        background: model.background,
        weight_threshold: 1e-5,
        mode: ShadingMode::Full,
        material_override: atlas.as_ref().map(|a| a as &dyn surfmap_render::MaterialLookup),
        shading_from: args.shading_from.map(|s| s.to_string()),
    };
    let out = render_image(&model, &cam, &object, &opts)?;
    if out.rgb.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::numerical("render produced non-finite pixels"));
    }
    out.to_image()
        .save(args.out)
        .map_err(|e| CliError::io(e.to_string()))?;
    println!(
        "event=render object={object} width={} height={} path={}",
        out.width,
        out.height,
        args.out.display()
    );
    Ok(())
}

pub struct EvalArgs<'a> {
    pub checkpoint: &'a Path,
    pub dataset: &'a Path,
    pub heldout: Vec<usize>,
    pub object: Option<&'a str>,
    pub out: Option<&'a Path>,
    pub samples_per_ray: usize,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let (model, _) = ParamModel::load(args.checkpoint)?;
    let object = single_object(&model, args.object)?;
    let ds = load_dataset(args.dataset)?;
    let mut lines = vec!["# surfmap eval v1".to_string()];
    let mut psnr_sum = 0.0;
    for &v in &args.heldout {
        let cam = ds.cameras.get(v).ok_or_else(|| {
            CliError::usage(format!("held-out view {v} out of range ({} views)", ds.cameras.len()))
        })?;
        let opts = RenderOptions {
            samples_per_ray: args.samples_per_ray,
            background: model.background,
            ..Default::default()
        };
        let out = render_image(&model, cam, &object, &opts)?;
        let p = psnr_rgb(&out.rgb, &ds.images[v]);
        psnr_sum += p;
        lines.push(format!("view={v} psnr={p:.4}"));
        println!("event=eval view={v} psnr={p:.4}");
    }
    if !args.heldout.is_empty() {
        let mean = psnr_sum / args.heldout.len() as f64;
        lines.push(format!("psnr_mean={mean:.4}"));
        println!("event=eval psnr_mean={mean:.4}");
    }
    // Chamfer against the analytic ground truth when the dataset records one.
    if let Ok(gt) = ds.shape() {
        let mesh = extract_surface(&model, &object, 64)?;
        if !mesh.is_empty() {
            let mesh_pts = mesh.sample_surface(10_000, 17);
            let gt_pts = analytic_surface_samples(&gt, 10_000, 23);
            let cd = chamfer_distance(&mesh_pts, &gt_pts)?;
            lines.push(format!("cd_e3={:.6}", cd * 1e3));
            println!("event=eval cd_e3={:.6}", cd * 1e3);
        }
    }
    if let Some(path) = args.out {
        std::fs::write(path, lines.join("\n") + "\n")?;
    }
    Ok(())
}

fn analytic_surface_samples(field: &SdfField, n: usize, seed: u64) -> Vec<Vec3> {
    surfmap_deform::sample_surface(field, "gt", n, seed)
        .into_iter()
        .map(|s| s.p)
        .collect()
}

fn echo_lambdas(cfg: &PipelineConfig) {
    let l = &cfg.lambdas;
    println!(
        "lambdas eikonal={} cycle={} smooth={} laplace={} shading={} code={}",
        l.eikonal, l.cycle, l.smooth, l.laplace, l.shading, l.code
    );
}

