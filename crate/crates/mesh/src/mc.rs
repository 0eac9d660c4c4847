//! Marching cubes over a uniform grid on [-1,1]³ with exact edge-keyed vertex
//! sharing, an epsilon weld and degenerate-triangle cleanup.

use std::collections::HashMap;

use rayon::prelude::*;

use surfmap_sdf::{vec3, SdfField, Vec3};

use crate::mesh::TriangleMesh;
use crate::tables::{CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE};

pub const WELD_EPS: f64 = 1e-7;
const DEGENERATE_AREA: f64 = 1e-12;

/// Extract the iso-surface. `resolution` counts cells per axis. An absent
/// crossing yields an empty mesh, reported by the caller, not fatal.
pub fn marching_cubes(field: &SdfField, resolution: u32, iso: f64) -> TriangleMesh {
    assert!(resolution >= 8, "resolution must be at least 8");
    let n = resolution as usize;
    let np = n + 1;
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / n as f64;

    // Sample the grid in z-major slabs, batched through the field.
    let samples: Vec<f64> = (0..np)
        .into_par_iter()
        .flat_map_iter(|iz| {
            let pts: Vec<Vec3> = (0..np * np)
                .map(|i| {
                    let ix = i % np;
                    let iy = i / np;
                    vec3(coord(ix), coord(iy), coord(iz))
                })
                .collect();
            field.eval_batch(&pts).into_iter()
        })
        .collect();
    // The iso crossing interpolation divides by the value difference; nudge
    // exact hits off zero so shared-corner degeneracies cannot arise.
    let at = |ix: usize, iy: usize, iz: usize| -> f64 {
        let s = samples[(iz * np + iy) * np + ix] - iso;
        if s == 0.0 {
            1e-12
        } else {
            s
        }
    };

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // Global edge key: (base corner, axis).
    let mut edge_cache: HashMap<(usize, usize, usize, u8), u32> = HashMap::new();

    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                let corner_vals: [f64; 8] = std::array::from_fn(|c| {
                    let (dx, dy, dz) = CORNER_OFFSETS[c];
                    at(ix + dx, iy + dy, iz + dz)
                });
                let mut cube_index = 0usize;
                for (c, &v) in corner_vals.iter().enumerate() {
                    if v < 0.0 {
                        cube_index |= 1 << c;
                    }
                }
                let tris = &TRI_TABLE[cube_index];
                if tris[0] < 0 {
                    continue;
                }
                let mut edge_vertex = [u32::MAX; 12];
                let mut needed = [false; 12];
                for &e in tris.iter().take_while(|&&e| e >= 0) {
                    needed[e as usize] = true;
                }
                for (e, need) in needed.iter().enumerate() {
                    if !need {
                        continue;
                    }
                    let (c0, c1) = EDGE_CORNERS[e];
                    let (o0, o1) = (CORNER_OFFSETS[c0], CORNER_OFFSETS[c1]);
                    let g0 = (ix + o0.0, iy + o0.1, iz + o0.2);
                    let g1 = (ix + o1.0, iy + o1.1, iz + o1.2);
                    // Canonical key: the lower corner plus the axis along
                    // which the edge runs.
                    let axis = if g0.0 != g1.0 {
                        0u8
                    } else if g0.1 != g1.1 {
                        1
                    } else {
                        2
                    };
                    let base = (g0.0.min(g1.0), g0.1.min(g1.1), g0.2.min(g1.2));
                    let key = (base.0, base.1, base.2, axis);
                    let idx = *edge_cache.entry(key).or_insert_with(|| {
                        let va = corner_vals[c0];
                        let vb = corner_vals[c1];
                        let t = va / (va - vb);
                        let pa = vec3(coord(g0.0), coord(g0.1), coord(g0.2));
                        let pb = vec3(coord(g1.0), coord(g1.1), coord(g1.2));
                        let id = vertices.len() as u32;
                        vertices.push(pa + (pb - pa) * t);
                        id
                    });
                    edge_vertex[e] = idx;
                }
                let mut i = 0;
                while tris[i] >= 0 {
                    triangles.push([
                        edge_vertex[tris[i] as usize],
                        edge_vertex[tris[i + 1] as usize],
                        edge_vertex[tris[i + 2] as usize],
                    ]);
                    i += 3;
                }
            }
        }
    }

    weld_and_clean(TriangleMesh {
        vertices,
        triangles,
        ..Default::default()
    })
}

/// Merge vertices within the weld epsilon (quantized hashing) and drop
/// degenerate or duplicate-index triangles plus unused vertices.
pub fn weld_and_clean(mesh: TriangleMesh) -> TriangleMesh {
    let quant = |x: f64| (x / WELD_EPS).round() as i64;
    let mut canon: HashMap<(i64, i64, i64), u32> = HashMap::new();
    let mut remap = vec![0u32; mesh.vertices.len()];
    let mut new_vertices: Vec<Vec3> = Vec::new();
    for (i, v) in mesh.vertices.iter().enumerate() {
        let key = (quant(v.x), quant(v.y), quant(v.z));
        let idx = *canon.entry(key).or_insert_with(|| {
            let id = new_vertices.len() as u32;
            new_vertices.push(*v);
            id
        });
        remap[i] = idx;
    }
    let mut new_triangles = Vec::with_capacity(mesh.triangles.len());
    for t in &mesh.triangles {
        let m = [remap[t[0] as usize], remap[t[1] as usize], remap[t[2] as usize]];
        if m[0] == m[1] || m[1] == m[2] || m[0] == m[2] {
            continue;
        }
        let p = [
            new_vertices[m[0] as usize],
            new_vertices[m[1] as usize],
            new_vertices[m[2] as usize],
        ];
        if TriangleMesh::triangle_area(p) < DEGENERATE_AREA {
            continue;
        }
        new_triangles.push(m);
    }
    // Drop unused vertices.
    let mut used = vec![false; new_vertices.len()];
    for t in &new_triangles {
        for &i in t {
            used[i as usize] = true;
        }
    }
    let mut compact = vec![0u32; new_vertices.len()];
    let mut final_vertices = Vec::new();
    for (i, v) in new_vertices.iter().enumerate() {
        if used[i] {
            compact[i] = final_vertices.len() as u32;
            final_vertices.push(*v);
        }
    }
    let final_triangles = new_triangles
        .into_iter()
        .map(|t| [compact[t[0] as usize], compact[t[1] as usize], compact[t[2] as usize]])
        .collect();
    TriangleMesh {
        vertices: final_vertices,
        triangles: final_triangles,
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_mesh_is_closed_and_accurate() {
        let f = SdfField::sphere(Vec3::ZERO, 0.5);
        let mesh = marching_cubes(&f, 64, 0.0);
        assert!(!mesh.is_empty());
        // Every vertex close to the surface.
        let cell_diag = (2.0 / 64.0) * 3.0f64.sqrt();
        for v in &mesh.vertices {
            assert!(f.eval(*v).abs() < cell_diag);
        }
        assert_eq!(mesh.euler_characteristic(), 2);
        assert!(mesh.is_two_manifold());
        let area = mesh.surface_area();
        let analytic = 4.0 * std::f64::consts::PI * 0.25;
        assert!(
            (area - analytic).abs() / analytic < 0.03,
            "area {area} vs analytic {analytic}"
        );
    }

    #[test]
    fn no_crossing_gives_empty_mesh() {
        let f = SdfField::sphere(vec3(0.0, 0.0, 0.0), 0.5);
        let mesh = marching_cubes(&f, 16, 10.0);
        assert!(mesh.is_empty());
    }

    #[test]
    fn box_mesh_is_closed() {
        let f = SdfField::Box(surfmap_sdf::BoxParams::new(
            vec3(0.1, 0.0, -0.05),
            vec3(0.4, 0.3, 0.5),
        ));
        let mesh = marching_cubes(&f, 48, 0.0);
        assert_eq!(mesh.euler_characteristic(), 2);
        assert!(mesh.is_two_manifold());
    }

    #[test]
    fn torus_has_genus_one() {
        let f = SdfField::Torus {
            major: 0.5,
            minor: 0.2,
        };
        let mesh = marching_cubes(&f, 64, 0.0);
        // Euler characteristic 0 for a torus.
        assert_eq!(mesh.euler_characteristic(), 0);
        assert!(mesh.is_two_manifold());
    }
}
