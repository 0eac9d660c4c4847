//! Synthetic multi-view datasets: sphere-traced ground-truth renders of an
//! analytic shape under Lambertian directional lights plus ambient.
//!
//! Directory layout: `images/view_{index:04}.png`, `cameras.txt`, `meta.txt`,
//! `checksums.txt` (sha256 per file).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use surfmap_sdf::{parse_field_descriptor, vec3, SdfField, Vec3};

use crate::camera::{ray_scene_interval, write_cameras, Camera};
use crate::RenderError;

#[derive(Clone, Debug, PartialEq)]
pub enum Albedo {
    Constant([f64; 3]),
    Checker {
        scale: f64,
        a: [f64; 3],
        b: [f64; 3],
    },
}

impl Albedo {
    pub fn eval(&self, p: Vec3) -> [f64; 3] {
        match self {
            Albedo::Constant(c) => *c,
            Albedo::Checker { scale, a, b } => {
                let q = |x: f64| (x * scale).floor() as i64;
                if (q(p.x) + q(p.y) + q(p.z)).rem_euclid(2) == 0 {
                    *a
                } else {
                    *b
                }
            }
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            Albedo::Constant(c) => format!("constant:{},{},{}", c[0], c[1], c[2]),
            Albedo::Checker { scale, a, b } => format!(
                "checker:{},{},{},{},{},{},{}",
                scale, a[0], a[1], a[2], b[0], b[1], b[2]
            ),
        }
    }

    pub fn parse(desc: &str) -> Result<Albedo, RenderError> {
        let (head, rest) = desc
            .split_once(':')
            .ok_or_else(|| RenderError::BadDataset(format!("albedo {desc:?}: missing ':'")))?;
        let nums: Result<Vec<f64>, _> = rest.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|e| RenderError::BadDataset(format!("albedo {desc:?}: {e}")))?;
        match (head, nums.len()) {
            ("constant", 3) => Ok(Albedo::Constant([nums[0], nums[1], nums[2]])),
            ("checker", 7) => Ok(Albedo::Checker {
                scale: nums[0],
                a: [nums[1], nums[2], nums[3]],
                b: [nums[4], nums[5], nums[6]],
            }),
            _ => Err(RenderError::BadDataset(format!("unknown albedo {desc:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirLight {
    /// Direction pointing from the surface toward the light.
    pub dir: Vec3,
    pub intensity: f64,
}

#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub shape: SdfField,
    pub shape_descriptor: String,
    pub albedo: Albedo,
    pub lights: Vec<DirLight>,
    pub ambient: f64,
}

impl SceneSpec {
    pub fn lambertian_sphere() -> SceneSpec {
        SceneSpec {
            shape: SdfField::sphere(Vec3::ZERO, 0.5),
            shape_descriptor: "sphere:0,0,0,0.5".into(),
            albedo: Albedo::Checker {
                scale: 4.0,
                a: [0.85, 0.35, 0.25],
                b: [0.2, 0.45, 0.8],
            },
            lights: vec![DirLight {
                dir: vec3(0.35, 0.6, 0.9).normalized(),
                intensity: 0.6,
            }],
            ambient: 0.4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub n_views: usize,
    pub resolution: u32,
    pub seed: u64,
    pub camera_radius: f64,
    pub background: [f64; 3],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_views: 9,
            resolution: 64,
            seed: 1,
            camera_radius: 2.4,
            background: [1.0, 1.0, 1.0],
        }
    }
}

/// Fibonacci-sphere camera ring looking at the origin.
pub fn view_cameras(n: usize, radius: f64, resolution: u32) -> Vec<Camera> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            // Keep elevations off the poles so `up` stays valid.
            let y = if n == 1 {
                0.0
            } else {
                0.85 * (1.0 - 2.0 * i as f64 / (n - 1) as f64)
            };
            let r = (1.0 - y * y).sqrt();
            let theta = golden * i as f64;
            let eye = vec3(r * theta.cos(), y, r * theta.sin()) * radius;
            let focal = resolution as f64 * 1.2;
            Camera::look_at(eye, Vec3::ZERO, vec3(0.0, 1.0, 0.0), focal, resolution, resolution)
        })
        .collect()
}

/// Sphere-trace a single ray; returns the hit point when it converges.
fn sphere_trace(shape: &SdfField, origin: Vec3, dir: Vec3) -> Option<Vec3> {
    let (t0, t1) = ray_scene_interval(origin, dir)?;
    let mut t = t0;
    for _ in 0..192 {
        let p = origin + dir * t;
        let s = shape.eval(p);
        if s < 1e-5 {
            return Some(p);
        }
        t += s.max(1e-4);
        if t > t1 {
            return None;
        }
    }
    None
}

/// Lambertian shade at a hit point.
fn shade(spec: &SceneSpec, p: Vec3) -> [f64; 3] {
    let n = spec.shape.grad(p).normalized();
    let mut light = spec.ambient;
    for l in &spec.lights {
        light += l.intensity * n.dot(l.dir).max(0.0);
    }
    let albedo = spec.albedo.eval(p);
    [
        (albedo[0] * light).clamp(0.0, 1.0),
        (albedo[1] * light).clamp(0.0, 1.0),
        (albedo[2] * light).clamp(0.0, 1.0),
    ]
}

pub fn render_ground_truth(spec: &SceneSpec, cam: &Camera, background: [f64; 3]) -> Vec<[f64; 3]> {
    let w = cam.width as usize;
    let h = cam.height as usize;
    let rows: Vec<Vec<[f64; 3]>> = (0..h)
        .into_par_iter()
        .map(|row| {
            (0..w)
                .map(|col| {
                    let dir = cam.pixel_direction(col as u32, row as u32);
                    match sphere_trace(&spec.shape, cam.position, dir) {
                        Some(p) => shade(spec, p),
                        None => background,
                    }
                })
                .collect()
        })
        .collect();
    rows.into_iter().flatten().collect()
}

pub fn quantize(pixels: &[[f64; 3]], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::new(width, height);
    for (i, p) in pixels.iter().enumerate() {
        let x = (i as u32) % width;
        let y = (i as u32) / width;
        img.put_pixel(
            x,
            y,
            image::Rgb([
                (p[0].clamp(0.0, 1.0) * 255.0).round() as u8,
                (p[1].clamp(0.0, 1.0) * 255.0).round() as u8,
                (p[2].clamp(0.0, 1.0) * 255.0).round() as u8,
            ]),
        );
    }
    img
}

pub fn image_to_float(img: &RgbImage) -> Vec<[f64; 3]> {
    img.pixels()
        .map(|p| {
            [
                p.0[0] as f64 / 255.0,
                p.0[1] as f64 / 255.0,
                p.0[2] as f64 / 255.0,
            ]
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DatasetMeta {
    pub seed: u64,
    pub shape_descriptor: String,
    pub albedo_descriptor: String,
    pub lights: Vec<DirLight>,
    pub ambient: f64,
    pub background: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    /// Row-major [0,1] pixels per view, as loaded from the 8-bit files.
    pub images: Vec<Vec<[f64; 3]>>,
    pub meta: DatasetMeta,
}

pub fn generate_synthetic_dataset(
    spec: &SceneSpec,
    cfg: &DatasetConfig,
    dir: &Path,
) -> Result<DatasetMeta, RenderError> {
    std::fs::create_dir_all(dir.join("images"))?;
    let cams = view_cameras(cfg.n_views, cfg.camera_radius, cfg.resolution);
    let mut files: Vec<PathBuf> = Vec::new();
    for (i, cam) in cams.iter().enumerate() {
        let pixels = render_ground_truth(spec, cam, cfg.background);
        let img = quantize(&pixels, cam.width, cam.height);
        let path = dir.join("images").join(format!("view_{i:04}.png"));
        img.save(&path).map_err(|e| RenderError::Image(e.to_string()))?;
        files.push(path);
    }
    let cam_path = dir.join("cameras.txt");
    write_cameras(&cams, &cam_path)?;
    files.push(cam_path);

    let mut meta = String::from("# surfmap dataset meta v1\n");
    let _ = writeln!(meta, "seed {}", cfg.seed);
    let _ = writeln!(meta, "shape {}", spec.shape_descriptor);
    let _ = writeln!(meta, "albedo {}", spec.albedo.descriptor());
    for l in &spec.lights {
        let _ = writeln!(meta, "light {} {} {} {}", l.dir.x, l.dir.y, l.dir.z, l.intensity);
    }
    let _ = writeln!(meta, "ambient {}", spec.ambient);
    let _ = writeln!(
        meta,
        "background {} {} {}",
        cfg.background[0], cfg.background[1], cfg.background[2]
    );
    let meta_path = dir.join("meta.txt");
    std::fs::write(&meta_path, meta)?;
    files.push(meta_path);

    // Checksums over everything written so far.
    let mut sums = String::new();
    for f in &files {
        let bytes = std::fs::read(f)?;
        let digest = Sha256::digest(&bytes);
        let rel = f.strip_prefix(dir).unwrap_or(f);
        let _ = writeln!(sums, "{:x}  {}", digest, rel.display());
    }
    std::fs::write(dir.join("checksums.txt"), sums)?;

    Ok(DatasetMeta {
        seed: cfg.seed,
        shape_descriptor: spec.shape_descriptor.clone(),
        albedo_descriptor: spec.albedo.descriptor(),
        lights: spec.lights.clone(),
        ambient: spec.ambient,
        background: cfg.background,
    })
}

pub fn verify_checksums(dir: &Path) -> Result<bool, RenderError> {
    let text = std::fs::read_to_string(dir.join("checksums.txt"))?;
    for line in text.lines() {
        let Some((sum, rel)) = line.split_once("  ") else {
            continue;
        };
        let bytes = std::fs::read(dir.join(rel))?;
        let digest = format!("{:x}", Sha256::digest(&bytes));
        if digest != sum {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, RenderError> {
    let cameras = crate::camera::read_cameras(&dir.join("cameras.txt"))?;
    let mut images = Vec::with_capacity(cameras.len());
    for i in 0..cameras.len() {
        let path = dir.join("images").join(format!("view_{i:04}.png"));
        let img = image::open(&path)
            .map_err(|e| RenderError::Image(format!("{}: {e}", path.display())))?
            .to_rgb8();
        images.push(image_to_float(&img));
    }
    let meta = read_meta(&dir.join("meta.txt"))?;
    Ok(Dataset {
        cameras,
        images,
        meta,
    })
}

fn read_meta(path: &Path) -> Result<DatasetMeta, RenderError> {
    let text = std::fs::read_to_string(path)?;
    let mut seed = 0u64;
    let mut shape_descriptor = String::new();
    let mut albedo_descriptor = String::new();
    let mut lights = Vec::new();
    let mut ambient = 0.0;
    let mut background = [1.0; 3];
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "seed" => seed = rest.trim().parse().unwrap_or(0),
            "shape" => shape_descriptor = rest.trim().to_string(),
            "albedo" => albedo_descriptor = rest.trim().to_string(),
            "light" => {
                let v: Vec<f64> = rest
                    .split_whitespace()
                    .filter_map(|t| t.parse().ok())
                    .collect();
                if v.len() == 4 {
                    lights.push(DirLight {
                        dir: vec3(v[0], v[1], v[2]),
                        intensity: v[3],
                    });
                }
            }
            "ambient" => ambient = rest.trim().parse().unwrap_or(0.0),
            "background" => {
                let v: Vec<f64> = rest
                    .split_whitespace()
                    .filter_map(|t| t.parse().ok())
                    .collect();
                if v.len() == 3 {
                    background = [v[0], v[1], v[2]];
                }
            }
            _ => {}
        }
    }
    Ok(DatasetMeta {
        seed,
        shape_descriptor,
        albedo_descriptor,
        lights,
        ambient,
        background,
    })
}

impl Dataset {
    pub fn shape(&self) -> Result<SdfField, RenderError> {
        parse_field_descriptor(&self.meta.shape_descriptor)
            .map_err(|e| RenderError::BadDataset(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brightest_pixel_under_head_on_light() {
        // Light from +z, camera at +z, unit albedo: peak brightness where the
        // normal faces the camera, i.e. the sphere center of the frame.
        let spec = SceneSpec {
            shape: SdfField::sphere(Vec3::ZERO, 0.5),
            shape_descriptor: "sphere:0,0,0,0.5".into(),
            albedo: Albedo::Constant([1.0, 1.0, 1.0]),
            lights: vec![DirLight {
                dir: vec3(0.0, 0.0, 1.0),
                intensity: 1.0,
            }],
            ambient: 0.0,
        };
        let cam = Camera::look_at(
            vec3(0.0, 0.0, 2.4),
            Vec3::ZERO,
            vec3(0.0, 1.0, 0.0),
            76.8,
            64,
            64,
        );
        let img = render_ground_truth(&spec, &cam, [0.0, 0.0, 0.0]);
        let mut best = (0usize, -1.0f64);
        for (i, p) in img.iter().enumerate() {
            if p[0] > best.1 {
                best = (i, p[0]);
            }
        }
        let (x, y) = (best.0 % 64, best.0 / 64);
        assert!(
            (30..=33).contains(&x) && (30..=33).contains(&y),
            "brightest pixel at ({x},{y})"
        );
    }

    #[test]
    fn ambient_only_is_albedo() {
        let spec = SceneSpec {
            shape: SdfField::sphere(Vec3::ZERO, 0.5),
            shape_descriptor: "sphere:0,0,0,0.5".into(),
            albedo: Albedo::Constant([0.3, 0.6, 0.9]),
            lights: vec![],
            ambient: 1.0,
        };
        let cam = view_cameras(3, 2.4, 32);
        for c in &cam {
            let img = render_ground_truth(&spec, c, [0.0, 0.0, 0.0]);
            for p in img.iter().filter(|p| p.iter().any(|&v| v > 0.0)) {
                assert!((p[0] - 0.3).abs() < 1e-9);
                assert!((p[1] - 0.6).abs() < 1e-9);
                assert!((p[2] - 0.9).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dataset_generation_is_byte_identical() {
        let spec = SceneSpec::lambertian_sphere();
        let cfg = DatasetConfig {
            n_views: 3,
            resolution: 24,
            ..Default::default()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_synthetic_dataset(&spec, &cfg, d1.path()).unwrap();
        generate_synthetic_dataset(&spec, &cfg, d2.path()).unwrap();
        for i in 0..3 {
            let a = std::fs::read(d1.path().join(format!("images/view_{i:04}.png"))).unwrap();
            let b = std::fs::read(d2.path().join(format!("images/view_{i:04}.png"))).unwrap();
            assert_eq!(a, b, "view {i} differs");
        }
        assert!(verify_checksums(d1.path()).unwrap());
        let ds = load_dataset(d1.path()).unwrap();
        assert_eq!(ds.cameras.len(), 3);
        assert_eq!(ds.images[0].len(), 24 * 24);
    }
}
