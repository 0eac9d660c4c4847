//! Full-frame volume rendering of a trained bundle, with the editing hooks:
//! material override from a baked atlas, shading transfer, domain swap (via
//! `ParamModel::with_domain`).

use rayon::prelude::*;

use surfmap_sdf::Vec3;

use crate::bundle::ParamModel;
use crate::camera::{ray_scene_interval, Camera};
use crate::density::density_from_sdf;
use crate::integrate::compute_weights;
use crate::RenderError;

/// Source of material colors when rendering with an edited texture. `None`
/// for a texel falls back to the material network.
pub trait MaterialLookup: Sync {
    fn material(&self, p_prime: Vec3) -> Option<[f64; 3]>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShadingMode {
    Full,
    /// Radiance = material only (the exp(shading) factor is omitted).
    MaterialOnly,
}

pub struct RenderOptions<'a> {
    pub resolution: Option<u32>,
    pub samples_per_ray: usize,
    pub background: [f64; 3],
    /// Weights below this threshold skip radiance evaluation.
    pub weight_threshold: f64,
    pub mode: ShadingMode,
    pub material_override: Option<&'a dyn MaterialLookup>,
    /// Take the appearance code driving F_shd from another object.
    pub shading_from: Option<String>,
}

impl Default for RenderOptions<'_> {
    fn default() -> Self {
        RenderOptions {
            resolution: None,
            samples_per_ray: 64,
            background: [1.0, 1.0, 1.0],
            weight_threshold: 1e-5,
            mode: ShadingMode::Full,
            material_override: None,
            shading_from: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
    /// Σ λ_i·exp(shading_i) + (1−Σλ): independent of any material override.
    pub shading: Vec<f64>,
}

impl RenderOutput {
    pub fn to_image(&self) -> image::RgbImage {
        crate::dataset::quantize(&self.rgb, self.width, self.height)
    }

    /// Foreground = pixels with opacity above one half.
    pub fn foreground_mean_rgb(&self) -> [f64; 3] {
        let mut acc = [0.0f64; 3];
        let mut n = 0usize;
        for (p, &o) in self.rgb.iter().zip(&self.opacity) {
            if o > 0.5 {
                for k in 0..3 {
                    acc[k] += p[k];
                }
                n += 1;
            }
        }
        if n > 0 {
            for a in &mut acc {
                *a /= n as f64;
            }
        }
        acc
    }

    /// Mean chroma (per-pixel RGB normalized by luminance) over foreground.
    pub fn foreground_mean_chroma(&self) -> [f64; 3] {
        let mut acc = [0.0f64; 3];
        let mut n = 0usize;
        for (p, &o) in self.rgb.iter().zip(&self.opacity) {
            if o > 0.5 {
                let lum = (p[0] + p[1] + p[2]).max(1e-9) / 3.0;
                for k in 0..3 {
                    acc[k] += p[k] / lum;
                }
                n += 1;
            }
        }
        if n > 0 {
            for a in &mut acc {
                *a /= n as f64;
            }
        }
        acc
    }
}

/// Render one frame. Deterministic: samples sit at stratum midpoints.
pub fn render_image(
    model: &ParamModel,
    camera: &Camera,
    object: &str,
    opts: &RenderOptions,
) -> Result<RenderOutput, RenderError> {
    let cam = match opts.resolution {
        Some(r) => camera.with_resolution(r, r),
        None => *camera,
    };
    let shading_object = opts.shading_from.as_deref().unwrap_or(object);
    // Validate ids upfront.
    model.deform.code(object)?;
    model.appearance.code(object)?;
    model.appearance.code(shading_object)?;

    let w = cam.width as usize;
    let h = cam.height as usize;
    let rows: Result<Vec<Vec<([f64; 3], f64, f64)>>, RenderError> = (0..h)
        .into_par_iter()
        .map(|row| render_row(model, &cam, object, shading_object, opts, row as u32))
        .collect();
    let rows = rows?;
    let mut rgb = Vec::with_capacity(w * h);
    let mut opacity = Vec::with_capacity(w * h);
    let mut shading = Vec::with_capacity(w * h);
    for r in rows {
        for (c, o, s) in r {
            rgb.push(c);
            opacity.push(o);
            shading.push(s);
        }
    }
    Ok(RenderOutput {
        width: cam.width,
        height: cam.height,
        rgb,
        opacity,
        shading,
    })
}

fn render_row(
    model: &ParamModel,
    cam: &Camera,
    object: &str,
    shading_object: &str,
    opts: &RenderOptions,
    row: u32,
) -> Result<Vec<([f64; 3], f64, f64)>, RenderError> {
    let s_per = opts.samples_per_ray;
    let w = cam.width as usize;
    // Gather all sample positions of the row's rays that hit the volume.
    let mut positions: Vec<Vec3> = Vec::with_capacity(w * s_per);
    let mut deltas: Vec<f64> = Vec::with_capacity(w * s_per);
    let mut ray_dir: Vec<Vec3> = Vec::with_capacity(w);
    let mut hit: Vec<bool> = Vec::with_capacity(w);
    for col in 0..w {
        let dir = cam.pixel_direction(col as u32, row);
        ray_dir.push(dir);
        match ray_scene_interval(cam.position, dir) {
            Some((t0, t1)) => {
                hit.push(true);
                let width = (t1 - t0) / s_per as f64;
                for i in 0..s_per {
                    let t = t0 + (i as f64 + 0.5) * width;
                    positions.push(cam.position + dir * t);
                    deltas.push(width);
                }
            }
            None => hit.push(false),
        }
    }

    let sg = model
        .deform
        .composed_eval_grad_batch(&positions, object)
        .map_err(RenderError::Deform)?;

    // Weights per ray, then radiance only where it matters.
    let mut out = Vec::with_capacity(w);
    let mut cursor = 0usize;
    let mut sel_p: Vec<Vec3> = Vec::new();
    let mut sel_n: Vec<Vec3> = Vec::new();
    let mut sel_v: Vec<Vec3> = Vec::new();
    let mut sel_weight: Vec<f64> = Vec::new();
    let mut sel_ray: Vec<usize> = Vec::new();
    let mut ray_opacity = vec![0.0f64; w];
    for col in 0..w {
        if !hit[col] {
            continue;
        }
        let sigma: Vec<f64> = (0..s_per)
            .map(|i| density_from_sdf(sg[cursor + i].0, &model.density))
            .collect();
        let delta = &deltas[cursor..cursor + s_per];
        let (_, weights) = compute_weights(&sigma, delta);
        ray_opacity[col] = weights.iter().sum();
        for (i, &lam) in weights.iter().enumerate() {
            if lam > opts.weight_threshold {
                let (_, grad, p_prime) = sg[cursor + i];
                sel_p.push(p_prime);
                sel_n.push(grad.normalized());
                sel_v.push(ray_dir[col]);
                sel_weight.push(lam);
                sel_ray.push(col);
            }
        }
        cursor += s_per;
    }

    // Radiance for the selected samples.
    let materials: Vec<[f64; 3]> = if sel_p.is_empty() {
        Vec::new()
    } else {
        let mut mats = model.appearance.material_batch(&sel_p, &sel_n, object)?;
        if let Some(ov) = opts.material_override {
            for (i, m) in mats.iter_mut().enumerate() {
                if let Some(c) = ov.material(sel_p[i]) {
                    *m = c;
                }
            }
        }
        mats
    };
    let shadings: Vec<f64> = if sel_p.is_empty() {
        Vec::new()
    } else {
        model
            .appearance
            .shading_batch(&sel_p, &sel_n, &sel_v, shading_object)?
    };

    let mut color = vec![[0.0f64; 3]; w];
    let mut shade_buf = vec![0.0f64; w];
    for (i, &ray) in sel_ray.iter().enumerate() {
        let lam = sel_weight[i];
        let e = shadings[i].exp();
        let r = match opts.mode {
            ShadingMode::Full => [
                materials[i][0] * e,
                materials[i][1] * e,
                materials[i][2] * e,
            ],
            ShadingMode::MaterialOnly => materials[i],
        };
        for k in 0..3 {
            color[ray][k] += lam * r[k];
        }
        shade_buf[ray] += lam * e;
    }
    for col in 0..w {
        let residual = 1.0 - ray_opacity[col];
        for k in 0..3 {
            color[col][k] += residual * opts.background[k];
        }
        shade_buf[col] += residual;
        out.push((color[col], ray_opacity[col], shade_buf[col]));
    }
    Ok(out)
}
