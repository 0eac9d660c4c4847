//! Per-triangle angle and area distortion between a mesh and its mapped
//! image. Both metrics are ≥ 1, hitting 1 exactly for similarity (angle) and
//! equal-area (area) maps.

use std::fmt::Write as _;
use std::path::Path;

use surfmap_sdf::Vec3;

use crate::mesh::TriangleMesh;
use crate::MeshError;

/// cot(energy) quotient: (cot α·|a|² + cot β·|b|² + cot γ·|c|²) / (4·A) with
/// sides a,b,c of the original triangle (opposite vertices 0,1,2), angles
/// α,β,γ of the mapped triangle at those vertices, and A the original area.
/// `None` for degenerate inputs.
pub fn angle_distortion(orig: [Vec3; 3], mapped: [Vec3; 3]) -> Option<f64> {
    let area = TriangleMesh::triangle_area(orig);
    if area < 1e-12 {
        return None;
    }
    // Side opposite vertex i.
    let side = |p: [Vec3; 3], i: usize| (p[(i + 2) % 3] - p[(i + 1) % 3]).norm();
    let mut acc = 0.0;
    for i in 0..3 {
        let u = mapped[(i + 1) % 3] - mapped[i];
        let v = mapped[(i + 2) % 3] - mapped[i];
        let cross = u.cross(v).norm();
        if cross < 1e-15 {
            return None;
        }
        let cot = u.dot(v) / cross;
        let a = side(orig, i);
        acc += cot * a * a;
    }
    Some(acc / (4.0 * area))
}

/// ½·(A/Â + Â/A); `None` when either area vanishes.
pub fn area_distortion(area_orig: f64, area_mapped: f64) -> Option<f64> {
    if area_orig <= 0.0 || area_mapped <= 0.0 {
        return None;
    }
    Some(0.5 * (area_orig / area_mapped + area_mapped / area_orig))
}

pub const HIST_BINS: usize = 16;
pub const HIST_LO: f64 = 1.0;
pub const HIST_HI: f64 = 4.0;

#[derive(Clone, Debug)]
pub struct DistortionReport {
    /// (triangle index, E_angle, E_area) for every valid triangle.
    pub per_triangle: Vec<(usize, f64, f64)>,
    pub excluded: usize,
    /// Area-weighted means, weights from original triangle areas.
    pub mean_angle: f64,
    pub mean_area: f64,
    /// 16 bins over [1,4] plus an overflow bin.
    pub hist_angle: [u32; HIST_BINS + 1],
    pub hist_area: [u32; HIST_BINS + 1],
}

fn hist_slot(x: f64) -> usize {
    if x >= HIST_HI {
        HIST_BINS
    } else {
        (((x - HIST_LO) / (HIST_HI - HIST_LO) * HIST_BINS as f64).floor() as usize).min(HIST_BINS)
    }
}

pub fn distortion_report(mesh: &TriangleMesh) -> Result<DistortionReport, MeshError> {
    let mapped = mesh
        .mapped
        .as_ref()
        .ok_or(MeshError::MissingMappedPositions)?;
    let mut per_triangle = Vec::with_capacity(mesh.triangles.len());
    let mut excluded = 0usize;
    let mut wsum = 0.0;
    let mut acc_angle = 0.0;
    let mut acc_area = 0.0;
    let mut hist_angle = [0u32; HIST_BINS + 1];
    let mut hist_area = [0u32; HIST_BINS + 1];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let orig = mesh.triangle_positions(t);
        let m = [
            mapped[tri[0] as usize],
            mapped[tri[1] as usize],
            mapped[tri[2] as usize],
        ];
        let a_orig = TriangleMesh::triangle_area(orig);
        let a_mapped = TriangleMesh::triangle_area(m);
        let (Some(ea), Some(er)) = (
            angle_distortion(orig, m),
            area_distortion(a_orig, a_mapped),
        ) else {
            excluded += 1;
            continue;
        };
        per_triangle.push((t, ea, er));
        wsum += a_orig;
        acc_angle += ea * a_orig;
        acc_area += er * a_orig;
        hist_angle[hist_slot(ea)] += 1;
        hist_area[hist_slot(er)] += 1;
    }
    if wsum <= 0.0 {
        return Err(MeshError::EmptyMesh);
    }
    Ok(DistortionReport {
        per_triangle,
        excluded,
        mean_angle: acc_angle / wsum,
        mean_area: acc_area / wsum,
        hist_angle,
        hist_area,
    })
}

impl DistortionReport {
    pub fn write(&self, path: &Path) -> Result<(), MeshError> {
        let mut out = String::from("# surfmap distortion report v1\n");
        let _ = writeln!(out, "mean_angle {}", self.mean_angle);
        let _ = writeln!(out, "mean_area {}", self.mean_area);
        let _ = writeln!(out, "excluded {}", self.excluded);
        let _ = write!(out, "hist_angle");
        for h in self.hist_angle {
            let _ = write!(out, " {h}");
        }
        out.push('\n');
        let _ = write!(out, "hist_area");
        for h in self.hist_area {
            let _ = write!(out, " {h}");
        }
        out.push('\n');
        out.push_str("triangle,e_angle,e_area\n");
        for (t, ea, er) in &self.per_triangle {
            let _ = writeln!(out, "{t},{ea},{er}");
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use surfmap_sdf::vec3;

    fn tri(a: (f64, f64, f64), b: (f64, f64, f64), c: (f64, f64, f64)) -> [Vec3; 3] {
        [vec3(a.0, a.1, a.2), vec3(b.0, b.1, b.2), vec3(c.0, c.1, c.2)]
    }

    #[test]
    fn identity_is_one() {
        let t = tri((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.3, 0.8, 0.0));
        let e = angle_distortion(t, t).unwrap();
        assert!((e - 1.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn similarity_is_one() {
        let t = tri((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.3, 0.8, 0.0));
        // Scale by 3, rotate into another plane, translate.
        let m: Vec<Vec3> = t
            .iter()
            .map(|p| {
                let s = *p * 3.0;
                vec3(s.x, s.z, -s.y) + vec3(0.5, -1.0, 2.0)
            })
            .collect();
        let e = angle_distortion(t, [m[0], m[1], m[2]]).unwrap();
        assert!((e - 1.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn stretch_matches_brute_force() {
        // Equilateral side 1, stretched 2x along x; compare against the
        // cot formula computed from explicit coordinates.
        let t = tri(
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (0.5, 3.0f64.sqrt() / 2.0, 0.0),
        );
        let m = [
            vec3(0.0, 0.0, 0.0),
            vec3(2.0, 0.0, 0.0),
            vec3(1.0, 3.0f64.sqrt() / 2.0, 0.0),
        ];
        let e = angle_distortion(t, m).unwrap();
        // Oracle arithmetic.
        let angle_at = |p: [Vec3; 3], i: usize| {
            let u = p[(i + 1) % 3] - p[i];
            let v = p[(i + 2) % 3] - p[i];
            (u.dot(v) / (u.norm() * v.norm())).acos()
        };
        let side = |p: [Vec3; 3], i: usize| (p[(i + 2) % 3] - p[(i + 1) % 3]).norm();
        let area = TriangleMesh::triangle_area(t);
        let mut expected = 0.0;
        for i in 0..3 {
            expected += side(t, i).powi(2) / angle_at(m, i).tan();
        }
        expected /= 4.0 * area;
        assert!((e - expected).abs() < 1e-12);
        assert!(e > 1.0);
    }

    #[test]
    fn area_distortion_closed_forms() {
        assert_eq!(area_distortion(1.0, 1.0).unwrap(), 1.0);
        // Linear scale 2 → area ×4 → ½(¼ + 4) = 2.125.
        assert_eq!(area_distortion(1.0, 4.0).unwrap(), 2.125);
        assert_eq!(
            area_distortion(1.0, 4.0).unwrap(),
            area_distortion(4.0, 1.0).unwrap()
        );
        assert!(area_distortion(0.0, 1.0).is_none());
    }
}
