//! Texture atlases over the parametric domain: a six-face cubemap for sphere
//! domains, a per-box six-face atlas for polycubes. Point→texel mapping is
//! total and deterministic; its inverse drives baking.

use std::fmt::Write as _;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;

use surfmap_render::{MaterialLookup, ParamModel};
use surfmap_sdf::{vec3, PolycubeParams, SdfField, Vec3};

use crate::MeshError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtlasKind {
    SphereCubemap,
    PolycubeFaces,
}

impl AtlasKind {
    pub fn name(&self) -> &'static str {
        match self {
            AtlasKind::SphereCubemap => "sphere_cubemap",
            AtlasKind::PolycubeFaces => "polycube_faces",
        }
    }
}

/// The analytic domain parameters an atlas maps over.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainDescriptor {
    Sphere { center: Vec3, radius: f64 },
    Polycube(PolycubeParams),
}

impl DomainDescriptor {
    pub fn from_field(f: &SdfField) -> Result<DomainDescriptor, MeshError> {
        match f {
            SdfField::Sphere { center, radius } => Ok(DomainDescriptor::Sphere {
                center: *center,
                radius: *radius,
            }),
            SdfField::Polycube(pc) => Ok(DomainDescriptor::Polycube(pc.clone())),
            SdfField::Box(b) => Ok(DomainDescriptor::Polycube(PolycubeParams::new(vec![*b]))),
            _ => Err(MeshError::UnsupportedDomain),
        }
    }

    pub fn kind(&self) -> AtlasKind {
        match self {
            DomainDescriptor::Sphere { .. } => AtlasKind::SphereCubemap,
            DomainDescriptor::Polycube(_) => AtlasKind::PolycubeFaces,
        }
    }

    pub fn n_charts(&self) -> usize {
        match self {
            DomainDescriptor::Sphere { .. } => 6,
            DomainDescriptor::Polycube(pc) => 6 * pc.k(),
        }
    }

    pub fn descriptor_string(&self) -> String {
        let field = match self {
            DomainDescriptor::Sphere { center, radius } => SdfField::Sphere {
                center: *center,
                radius: *radius,
            },
            DomainDescriptor::Polycube(pc) => SdfField::Polycube(pc.clone()),
        };
        surfmap_sdf::format_field_descriptor(&field).expect("closed-form domain")
    }

    pub fn parse(s: &str) -> Result<DomainDescriptor, MeshError> {
        let f = surfmap_sdf::parse_field_descriptor(s)
            .map_err(|e| MeshError::BadAtlas(e.to_string()))?;
        DomainDescriptor::from_field(&f)
    }

    /// Matches within a small tolerance (atlases baked for one domain only
    /// apply to that domain).
    pub fn approx_eq(&self, other: &DomainDescriptor) -> bool {
        match (self, other) {
            (
                DomainDescriptor::Sphere { center: c1, radius: r1 },
                DomainDescriptor::Sphere { center: c2, radius: r2 },
            ) => (*c1 - *c2).norm() < 1e-9 && (r1 - r2).abs() < 1e-9,
            (DomainDescriptor::Polycube(a), DomainDescriptor::Polycube(b)) => {
                a.k() == b.k()
                    && a.boxes.iter().zip(&b.boxes).all(|(x, y)| {
                        (x.center - y.center).norm() < 1e-9
                            && (x.half_extents - y.half_extents).norm() < 1e-9
                    })
            }
            _ => false,
        }
    }
}

/// Cubemap face of a direction: the dominant axis. Faces are ordered
/// +x, −x, +y, −y, +z, −z.
fn cubemap_face(d: Vec3) -> usize {
    let a = d.abs();
    if a.x >= a.y && a.x >= a.z {
        if d.x >= 0.0 {
            0
        } else {
            1
        }
    } else if a.y >= a.z {
        if d.y >= 0.0 {
            2
        } else {
            3
        }
    } else if d.z >= 0.0 {
        4
    } else {
        5
    }
}

fn cubemap_uv(face: usize, d: Vec3) -> (f64, f64) {
    let (u, v, m) = match face {
        0 => (-d.z, -d.y, d.x.abs()),
        1 => (d.z, -d.y, d.x.abs()),
        2 => (d.x, d.z, d.y.abs()),
        3 => (d.x, -d.z, d.y.abs()),
        4 => (d.x, -d.y, d.z.abs()),
        _ => (-d.x, -d.y, d.z.abs()),
    };
    (0.5 * (u / m + 1.0), 0.5 * (v / m + 1.0))
}

fn cubemap_direction(face: usize, u: f64, v: f64) -> Vec3 {
    let uc = 2.0 * u - 1.0;
    let vc = 2.0 * v - 1.0;
    match face {
        0 => vec3(1.0, -vc, -uc),
        1 => vec3(-1.0, -vc, uc),
        2 => vec3(uc, 1.0, vc),
        3 => vec3(uc, -1.0, -vc),
        4 => vec3(uc, -vc, 1.0),
        _ => vec3(-uc, -vc, -1.0),
    }
    .normalized()
}

/// Chart and in-chart coordinates of a domain point. Total and deterministic.
pub fn domain_uv(desc: &DomainDescriptor, p_prime: Vec3) -> (u32, f64, f64) {
    match desc {
        DomainDescriptor::Sphere { center, .. } => {
            let d = (p_prime - *center).normalized();
            let face = cubemap_face(d);
            let (u, v) = cubemap_uv(face, d);
            (face as u32, u.clamp(0.0, 1.0), v.clamp(0.0, 1.0))
        }
        DomainDescriptor::Polycube(pc) => {
            // Nearest box, then its nearest face from the dominating axis.
            let mut best = (0usize, f64::INFINITY);
            for (i, b) in pc.boxes.iter().enumerate() {
                let phi = surfmap_sdf::eval_box_sdf(b, p_prime.to_array());
                if phi < best.1 {
                    best = (i, phi);
                }
            }
            let b = &pc.boxes[best.0];
            let d = p_prime - b.center;
            let t = [
                d.x.abs() - b.half_extents.x,
                d.y.abs() - b.half_extents.y,
                d.z.abs() - b.half_extents.z,
            ];
            let mut axis = 0;
            for a in 1..3 {
                if t[a] > t[axis] {
                    axis = a;
                }
            }
            let positive = d.component(axis) >= 0.0;
            let face = axis * 2 + usize::from(!positive);
            let h = b.half_extents;
            let (u, v) = match axis {
                0 => (d.y / h.y, d.z / h.z),
                1 => (d.x / h.x, d.z / h.z),
                _ => (d.x / h.x, d.y / h.y),
            };
            (
                (best.0 * 6 + face) as u32,
                (0.5 * (u + 1.0)).clamp(0.0, 1.0),
                (0.5 * (v + 1.0)).clamp(0.0, 1.0),
            )
        }
    }
}

/// Inverse mapping: the domain point of chart coordinates.
pub fn chart_point(desc: &DomainDescriptor, chart: u32, u: f64, v: f64) -> Vec3 {
    match desc {
        DomainDescriptor::Sphere { center, radius } => {
            *center + cubemap_direction(chart as usize, u, v) * *radius
        }
        DomainDescriptor::Polycube(pc) => {
            let b = &pc.boxes[chart as usize / 6];
            let face = chart as usize % 6;
            let axis = face / 2;
            let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
            let uc = (2.0 * u - 1.0) * match axis {
                0 => b.half_extents.y,
                1 => b.half_extents.x,
                _ => b.half_extents.x,
            };
            let vc = (2.0 * v - 1.0) * match axis {
                0 => b.half_extents.z,
                1 => b.half_extents.z,
                _ => b.half_extents.y,
            };
            let mut d = Vec3::ZERO;
            match axis {
                0 => {
                    d.x = sign * b.half_extents.x;
                    d.y = uc;
                    d.z = vc;
                }
                1 => {
                    d.y = sign * b.half_extents.y;
                    d.x = uc;
                    d.z = vc;
                }
                _ => {
                    d.z = sign * b.half_extents.z;
                    d.x = uc;
                    d.y = vc;
                }
            }
            b.center + d
        }
    }
}

#[derive(Clone, Debug)]
pub struct TextureAtlas {
    pub kind: AtlasKind,
    pub descriptor: DomainDescriptor,
    pub width: u32,
    /// Row-major RGB per chart.
    pub charts: Vec<Vec<[f64; 3]>>,
    pub occupancy: Vec<Vec<bool>>,
}

impl TextureAtlas {
    pub fn constant(desc: DomainDescriptor, width: u32, color: [f64; 3]) -> TextureAtlas {
        let n = desc.n_charts();
        let texels = (width * width) as usize;
        TextureAtlas {
            kind: desc.kind(),
            descriptor: desc,
            width,
            charts: vec![vec![color; texels]; n],
            occupancy: vec![vec![true; texels]; n],
        }
    }

    fn texel(&self, chart: u32, i: i64, j: i64) -> Option<[f64; 3]> {
        let w = self.width as i64;
        let (i, j) = (i.clamp(0, w - 1), j.clamp(0, w - 1));
        let idx = (j * w + i) as usize;
        if self.occupancy[chart as usize][idx] {
            Some(self.charts[chart as usize][idx])
        } else {
            None
        }
    }

    /// Bilinear lookup honoring the occupancy mask; `None` when no occupied
    /// texel contributes.
    pub fn sample(&self, chart: u32, u: f64, v: f64) -> Option<[f64; 3]> {
        let w = self.width as f64;
        let x = (u * w - 0.5).clamp(0.0, w - 1.0);
        let y = (v * w - 0.5).clamp(0.0, w - 1.0);
        let (i0, j0) = (x.floor() as i64, y.floor() as i64);
        let (fx, fy) = (x - i0 as f64, y - j0 as f64);
        let mut acc = [0.0f64; 3];
        let mut wsum = 0.0;
        for (di, dj, wgt) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            if let Some(c) = self.texel(chart, i0 + di, j0 + dj) {
                for k in 0..3 {
                    acc[k] += wgt * c[k];
                }
                wsum += wgt;
            }
        }
        if wsum <= 1e-12 {
            return None;
        }
        Some([acc[0] / wsum, acc[1] / wsum, acc[2] / wsum])
    }

    pub fn occupied_fraction(&self) -> f64 {
        let total: usize = self.occupancy.iter().map(|c| c.len()).sum();
        let on: usize = self
            .occupancy
            .iter()
            .map(|c| c.iter().filter(|&&b| b).count())
            .sum();
        on as f64 / total as f64
    }

    pub fn export(&self, dir: &Path) -> Result<(), MeshError> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::from("# surfmap atlas v1\n");
        let _ = writeln!(manifest, "kind {}", self.kind.name());
        let _ = writeln!(manifest, "domain {}", self.descriptor.descriptor_string());
        let _ = writeln!(manifest, "width {}", self.width);
        let _ = writeln!(manifest, "charts {}", self.charts.len());
        std::fs::write(dir.join("atlas.txt"), manifest)?;
        for (c, pixels) in self.charts.iter().enumerate() {
            let img = surfmap_render::quantize(pixels, self.width, self.width);
            img.save(dir.join(format!("chart_{}_{c}.png", self.kind.name())))
                .map_err(|e| MeshError::BadAtlas(e.to_string()))?;
            let mut occ = RgbImage::new(self.width, self.width);
            for (idx, &on) in self.occupancy[c].iter().enumerate() {
                let x = idx as u32 % self.width;
                let y = idx as u32 / self.width;
                let v = if on { 255 } else { 0 };
                occ.put_pixel(x, y, image::Rgb([v, v, v]));
            }
            occ.save(dir.join(format!("occupancy_{c}.png")))
                .map_err(|e| MeshError::BadAtlas(e.to_string()))?;
        }
        Ok(())
    }

    pub fn import(dir: &Path) -> Result<TextureAtlas, MeshError> {
        let manifest = std::fs::read_to_string(dir.join("atlas.txt"))?;
        let mut kind = None;
        let mut domain = None;
        let mut width = 0u32;
        let mut n_charts = 0usize;
        for line in manifest.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "kind" => {
                    kind = Some(match rest.trim() {
                        "sphere_cubemap" => AtlasKind::SphereCubemap,
                        "polycube_faces" => AtlasKind::PolycubeFaces,
                        other => {
                            return Err(MeshError::BadAtlas(format!("unknown kind {other:?}")))
                        }
                    })
                }
                "domain" => domain = Some(DomainDescriptor::parse(rest.trim())?),
                "width" => {
                    width = rest
                        .trim()
                        .parse()
                        .map_err(|e| MeshError::BadAtlas(format!("width: {e}")))?
                }
                "charts" => {
                    n_charts = rest
                        .trim()
                        .parse()
                        .map_err(|e| MeshError::BadAtlas(format!("charts: {e}")))?
                }
                _ => {}
            }
        }
        let kind = kind.ok_or_else(|| MeshError::BadAtlas("missing kind".into()))?;
        let descriptor = domain.ok_or_else(|| MeshError::BadAtlas("missing domain".into()))?;
        let mut charts = Vec::with_capacity(n_charts);
        let mut occupancy = Vec::with_capacity(n_charts);
        for c in 0..n_charts {
            let img = image::open(dir.join(format!("chart_{}_{c}.png", kind.name())))
                .map_err(|e| MeshError::BadAtlas(e.to_string()))?
                .to_rgb8();
            charts.push(surfmap_render::image_to_float(&img));
            let occ = image::open(dir.join(format!("occupancy_{c}.png")))
                .map_err(|e| MeshError::BadAtlas(e.to_string()))?
                .to_rgb8();
            occupancy.push(occ.pixels().map(|p| p.0[0] > 127).collect());
        }
        Ok(TextureAtlas {
            kind,
            descriptor,
            width,
            charts,
            occupancy,
        })
    }
}

impl MaterialLookup for TextureAtlas {
    fn material(&self, p_prime: Vec3) -> Option<[f64; 3]> {
        let (chart, u, v) = domain_uv(&self.descriptor, p_prime);
        self.sample(chart, u, v)
    }
}

/// Pullback tolerance: texels whose surface point strays further are flagged
/// unoccupied.
pub const BAKE_SURFACE_TOL: f64 = 0.05;

/// Bake the view-independent material into an atlas: texel → domain point →
/// inverse map (+ short projection refinement) → material at that surface
/// point. Supersampled box filter; `material_override` substitutes an
/// existing atlas for the network (re-baking after transfer).
pub fn bake_texture(
    model: &ParamModel,
    object: &str,
    width: u32,
    supersample: u32,
    material_override: Option<&dyn MaterialLookup>,
) -> Result<TextureAtlas, MeshError> {
    let desc = DomainDescriptor::from_field(&model.deform.domain)?;
    let n_charts = desc.n_charts();
    let ss = supersample.max(1);
    let texels = (width * width) as usize;

    let charts: Result<Vec<(Vec<[f64; 3]>, Vec<bool>)>, MeshError> = (0..n_charts)
        .into_par_iter()
        .map(|chart| {
            // All subsample domain points for this chart.
            let mut p_primes = Vec::with_capacity(texels * (ss * ss) as usize);
            for j in 0..width {
                for i in 0..width {
                    for sj in 0..ss {
                        for si in 0..ss {
                            let u = (i as f64 + (si as f64 + 0.5) / ss as f64) / width as f64;
                            let v = (j as f64 + (sj as f64 + 0.5) / ss as f64) / width as f64;
                            p_primes.push(chart_point(&desc, chart as u32, u, v));
                        }
                    }
                }
            }
            // Pull back to the surface.
            let mut pts = model
                .deform
                .inverse_map_batch(&p_primes, object)
                .map_err(|e| MeshError::Deform(e.to_string()))?;
            for _ in 0..3 {
                let sg = model
                    .deform
                    .composed_eval_grad_batch(&pts, object)
                    .map_err(|e| MeshError::Deform(e.to_string()))?;
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
                .map_err(|e| MeshError::Deform(e.to_string()))?;
            let valid: Vec<bool> = sg.iter().map(|(s, ..)| s.abs() <= BAKE_SURFACE_TOL).collect();
            let normals: Vec<Vec3> = sg.iter().map(|(_, g, _)| g.normalized()).collect();
            let colors: Vec<[f64; 3]> = match material_override {
                Some(ov) => p_primes
                    .iter()
                    .zip(&normals)
                    .map(|(&pp, &n)| {
                        ov.material(pp).unwrap_or_else(|| {
                            model
                                .appearance
                                .material_batch(&[pp], &[n], object)
                                .map(|v| v[0])
                                .unwrap_or([0.0; 3])
                        })
                    })
                    .collect(),
                None => model
                    .appearance
                    .material_batch(&p_primes, &normals, object)
                    .map_err(|e| MeshError::Render(e.to_string()))?,
            };
            // Box filter over valid subsamples.
            let ss2 = (ss * ss) as usize;
            let mut chart_pixels = vec![[0.0f64; 3]; texels];
            let mut chart_occ = vec![false; texels];
            for t in 0..texels {
                let mut acc = [0.0f64; 3];
                let mut count = 0usize;
                for s in 0..ss2 {
                    let idx = t * ss2 + s;
                    if valid[idx] {
                        for k in 0..3 {
                            acc[k] += colors[idx][k];
                        }
                        count += 1;
                    }
                }
                if count > 0 {
                    chart_occ[t] = true;
                    for k in 0..3 {
                        chart_pixels[t][k] = acc[k] / count as f64;
                    }
                }
            }
            Ok((chart_pixels, chart_occ))
        })
        .collect();
    let charts = charts?;
    Ok(TextureAtlas {
        kind: desc.kind(),
        descriptor: desc,
        width,
        charts: charts.iter().map(|(c, _)| c.clone()).collect(),
        occupancy: charts.into_iter().map(|(_, o)| o).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn sphere_axis_point_hits_chart_center() {
        let desc = DomainDescriptor::Sphere {
            center: Vec3::ZERO,
            radius: 0.5,
        };
        let (chart, u, v) = domain_uv(&desc, vec3(0.5, 0.0, 0.0));
        assert_eq!(chart, 0);
        assert!((u - 0.5).abs() < 1e-12 && (v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn box_face_corner_maps_to_uv_corner() {
        let pc = PolycubeParams::new(vec![surfmap_sdf::BoxParams::new(
            Vec3::ZERO,
            vec3(0.5, 0.4, 0.3),
        )]);
        let desc = DomainDescriptor::Polycube(pc);
        // +x face, corner at (+h.x, -h.y, -h.z) → uv (0, 0).
        let (chart, u, v) = domain_uv(&desc, vec3(0.5, -0.4, -0.3) + vec3(1e-9, 1e-4, 1e-4));
        assert_eq!(chart, 0);
        assert!(u < 0.01 && v < 0.01, "u={u} v={v}");
    }

    #[test]
    fn round_trip_chart_interior() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let descs = [
            DomainDescriptor::Sphere {
                center: vec3(0.05, 0.0, -0.1),
                radius: 0.45,
            },
            DomainDescriptor::Polycube(PolycubeParams::new(vec![
                surfmap_sdf::BoxParams::new(vec3(-0.3, 0.0, 0.0), vec3(0.3, 0.25, 0.25)),
                surfmap_sdf::BoxParams::new(vec3(0.35, 0.05, 0.0), vec3(0.25, 0.3, 0.25)),
            ])),
        ];
        let w = 64.0;
        for desc in &descs {
            let mut checked = 0;
            while checked < 10_000 {
                let chart = rng.gen_range(0..desc.n_charts() as u32);
                let u: f64 = rng.gen_range(0.0..1.0);
                let v: f64 = rng.gen_range(0.0..1.0);
                // Interiors only: more than 2 texels from seams.
                let m = 2.5 / w;
                if u < m || u > 1.0 - m || v < m || v > 1.0 - m {
                    continue;
                }
                let p = chart_point(desc, chart, u, v);
                // Skip face points occluded by overlap with another box.
                if let DomainDescriptor::Polycube(pc) = desc {
                    let own = chart as usize / 6;
                    let occluded = pc.boxes.iter().enumerate().any(|(i, b)| {
                        i != own && surfmap_sdf::eval_box_sdf(b, p.to_array()) < -1e-9
                    });
                    if occluded {
                        continue;
                    }
                }
                let (chart2, u2, v2) = domain_uv(desc, p);
                assert_eq!(chart, chart2, "chart changed for uv=({u},{v})");
                assert!((u - u2).abs() < 1e-9, "{u} vs {u2}");
                assert!((v - v2).abs() < 1e-9, "{v} vs {v2}");
                checked += 1;
            }
        }
    }

    #[test]
    fn atlas_export_import_round_trip() {
        let desc = DomainDescriptor::Sphere {
            center: Vec3::ZERO,
            radius: 0.5,
        };
        let mut atlas = TextureAtlas::constant(desc, 16, [0.25, 0.5, 0.75]);
        atlas.occupancy[2][5] = false;
        let dir = tempfile::tempdir().unwrap();
        atlas.export(dir.path()).unwrap();
        let back = TextureAtlas::import(dir.path()).unwrap();
        assert_eq!(back.width, 16);
        assert_eq!(back.charts.len(), 6);
        assert!(!back.occupancy[2][5]);
        assert!(back.occupancy[2][6]);
        // Colors survive within quantization.
        for (a, b) in atlas.charts[0].iter().zip(&back.charts[0]) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1.0 / 255.0);
            }
        }
    }
}
