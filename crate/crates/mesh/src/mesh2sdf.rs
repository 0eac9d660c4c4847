//! Offline brute-force mesh→grid conversion: nearest-triangle distance with
//! inside/outside from ray parity. Meant for closed meshes at modest
//! resolutions (≤ 128).

use rayon::prelude::*;

use surfmap_sdf::{vec3, GridSdf, Vec3};

use crate::mesh::TriangleMesh;
use crate::MeshError;

pub const MAX_GRID_RESOLUTION: u32 = 128;

/// Closest point on a triangle (Ericson-style region tests).
fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return a + ab * t;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return a + ac * t;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * t;
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Möller–Trumbore, counting crossings with t > 0.
fn ray_hits_triangle(origin: Vec3, dir: Vec3, a: Vec3, b: Vec3, c: Vec3) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(e2);
    let det = e1.dot(h);
    if det.abs() < 1e-12 {
        return false;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(h) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(q) * inv > 1e-12
}

/// Sample a closed mesh onto a cubic signed-distance grid.
pub fn mesh_to_grid(
    mesh: &TriangleMesh,
    resolution: u32,
    bbox_min: Vec3,
    bbox_max: Vec3,
) -> Result<GridSdf, MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    if resolution > MAX_GRID_RESOLUTION {
        return Err(MeshError::ResolutionTooHigh(resolution));
    }
    let tris: Vec<[Vec3; 3]> = (0..mesh.triangles.len())
        .map(|t| mesh.triangle_positions(t))
        .collect();
    // Slightly tilted parity ray avoids edge-grazing degeneracies.
    let parity_dir = vec3(1.0, 1.7e-4, 2.9e-4).normalized();
    let r = resolution as usize;
    let coord = |i: usize, lo: f64, hi: f64| lo + (hi - lo) * i as f64 / (r - 1) as f64;
    let samples: Vec<f32> = (0..r * r * r)
        .into_par_iter()
        .map(|idx| {
            let ix = idx % r;
            let iy = (idx / r) % r;
            let iz = idx / (r * r);
            let p = vec3(
                coord(ix, bbox_min.x, bbox_max.x),
                coord(iy, bbox_min.y, bbox_max.y),
                coord(iz, bbox_min.z, bbox_max.z),
            );
            let mut best = f64::INFINITY;
            let mut crossings = 0usize;
            for t in &tris {
                let q = closest_point_on_triangle(p, t[0], t[1], t[2]);
                best = best.min((p - q).norm_squared());
                if ray_hits_triangle(p, parity_dir, t[0], t[1], t[2]) {
                    crossings += 1;
                }
            }
            let d = best.sqrt();
            (if crossings % 2 == 1 { -d } else { d }) as f32
        })
        .collect();
    GridSdf::new([resolution; 3], bbox_min, bbox_max, samples)
        .map_err(|e| MeshError::BadAtlas(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use surfmap_sdf::SdfField;

    #[test]
    fn sphere_mesh_round_trips_to_grid() {
        let sphere = SdfField::sphere(Vec3::ZERO, 0.5);
        let mesh = crate::mc::marching_cubes(&sphere, 24, 0.0);
        let grid = mesh_to_grid(&mesh, 24, Vec3::splat(-1.0), Vec3::splat(1.0)).unwrap();
        // Compare against the analytic field away from the surface too.
        for p in [
            Vec3::ZERO,
            vec3(0.5, 0.0, 0.0),
            vec3(0.8, 0.0, 0.0),
            vec3(0.0, -0.7, 0.3),
        ] {
            let got = grid.eval(p);
            let want = sphere.eval(p);
            assert!(
                (got - want).abs() < 0.08,
                "at {p:?}: grid {got} vs analytic {want}"
            );
        }
    }
}
