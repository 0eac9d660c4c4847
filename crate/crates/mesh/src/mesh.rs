//! Indexed triangle meshes with optional mapped positions and UVs, plus the
//! OBJ round trip.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use surfmap_sdf::{vec3, Vec3};

use crate::MeshError;

#[derive(Clone, Debug, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Image of each vertex under the forward map, when computed.
    pub mapped: Option<Vec<Vec3>>,
    /// Per-vertex (u, v) plus chart id, when baked.
    pub uvs: Option<Vec<[f64; 2]>>,
    pub charts: Option<Vec<u32>>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_positions(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(p: [Vec3; 3]) -> f64 {
        0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| Self::triangle_area(self.triangle_positions(t)))
            .sum()
    }

    /// V − E + F with E counted over unique undirected edges.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Every undirected edge shared by exactly two triangles.
    pub fn is_two_manifold(&self) -> bool {
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().all(|&c| c == 2)
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        (lo, hi)
    }

    /// Area-weighted random surface points.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Vec<Vec3> {
        let areas: Vec<f64> = (0..self.triangles.len())
            .map(|t| Self::triangle_area(self.triangle_positions(t)))
            .collect();
        let total: f64 = areas.iter().sum();
        let mut cdf = Vec::with_capacity(areas.len());
        let mut acc = 0.0;
        for a in &areas {
            acc += a / total;
            cdf.push(acc);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen_range(0.0..1.0);
                let t = cdf.partition_point(|&c| c < u).min(self.triangles.len() - 1);
                let p = self.triangle_positions(t);
                let (mut a, mut b): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
                if a + b > 1.0 {
                    a = 1.0 - a;
                    b = 1.0 - b;
                }
                p[0] + (p[1] - p[0]) * a + (p[2] - p[0]) * b
            })
            .collect()
    }

    /// OBJ export. When UVs and charts are present, `vt` records encode the
    /// chart by tiling: chart c occupies [c, c+1) in u.
    pub fn write_obj(&self, path: &Path) -> Result<(), MeshError> {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        let has_uv = self.uvs.is_some() && self.charts.is_some();
        if let (Some(uvs), Some(charts)) = (&self.uvs, &self.charts) {
            for (uv, &c) in uvs.iter().zip(charts) {
                let _ = writeln!(out, "vt {} {}", c as f64 + uv[0], uv[1]);
            }
        }
        for t in &self.triangles {
            if has_uv {
                let _ = writeln!(
                    out,
                    "f {}/{} {}/{} {}/{}",
                    t[0] + 1,
                    t[0] + 1,
                    t[1] + 1,
                    t[1] + 1,
                    t[2] + 1,
                    t[2] + 1
                );
            } else {
                let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_obj(path: &Path) -> Result<TriangleMesh, MeshError> {
        let text = std::fs::read_to_string(path)?;
        let mut mesh = TriangleMesh::default();
        let mut uvs: Vec<[f64; 2]> = Vec::new();
        for line in text.lines() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let v: Vec<f64> = parts.filter_map(|t| t.parse().ok()).collect();
                    if v.len() != 3 {
                        return Err(MeshError::BadObj("vertex needs 3 coords".into()));
                    }
                    mesh.vertices.push(vec3(v[0], v[1], v[2]));
                }
                Some("vt") => {
                    let v: Vec<f64> = parts.filter_map(|t| t.parse().ok()).collect();
                    if v.len() < 2 {
                        return Err(MeshError::BadObj("vt needs 2 coords".into()));
                    }
                    uvs.push([v[0], v[1]]);
                }
                Some("f") => {
                    let idx: Vec<u32> = parts
                        .map(|t| {
                            t.split('/')
                                .next()
                                .unwrap_or("0")
                                .parse::<u32>()
                                .map(|i| i - 1)
                        })
                        .collect::<Result<_, _>>()
                        .map_err(|e| MeshError::BadObj(e.to_string()))?;
                    if idx.len() != 3 {
                        return Err(MeshError::BadObj("only triangles supported".into()));
                    }
                    mesh.triangles.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        if !uvs.is_empty() {
            // Undo the chart tiling.
            let mut plain = Vec::with_capacity(uvs.len());
            let mut charts = Vec::with_capacity(uvs.len());
            for uv in uvs {
                let c = uv[0].floor().max(0.0);
                plain.push([uv[0] - c, uv[1]]);
                charts.push(c as u32);
            }
            mesh.uvs = Some(plain);
            mesh.charts = Some(charts);
        }
        Ok(mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriangleMesh {
        TriangleMesh {
            vertices: vec![
                vec3(0.0, 0.0, 0.0),
                vec3(1.0, 0.0, 0.0),
                vec3(0.0, 1.0, 0.0),
                vec3(0.0, 0.0, 1.0),
            ],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
            ..Default::default()
        }
    }

    #[test]
    fn tetrahedron_is_closed() {
        let m = tetrahedron();
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.is_two_manifold());
    }

    #[test]
    fn obj_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tet.obj");
        let mut m = tetrahedron();
        m.uvs = Some(vec![[0.1, 0.2]; 4]);
        m.charts = Some(vec![0, 1, 2, 5]);
        m.write_obj(&path).unwrap();
        let back = TriangleMesh::read_obj(&path).unwrap();
        assert_eq!(back.vertices.len(), 4);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.charts.as_ref().unwrap(), &vec![0, 1, 2, 5]);
        for (a, b) in back.uvs.unwrap().iter().zip(m.uvs.unwrap()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn surface_samples_lie_on_mesh() {
        let m = tetrahedron();
        let pts = m.sample_surface(64, 3);
        assert_eq!(pts.len(), 64);
        // All samples must be inside the tetrahedron's bounding box.
        for p in pts {
            assert!(p.x >= -1e-12 && p.y >= -1e-12 && p.z >= -1e-12);
            assert!(p.x + p.y + p.z <= 1.0 + 1e-9);
        }
    }
}
