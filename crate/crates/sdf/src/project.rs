//! Newton projection of points onto the zero level set.

use crate::field::SdfField;
use crate::vec3::Vec3;

pub const PROJECT_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
pub struct Projection {
    pub point: Vec3,
    pub converged: bool,
    pub iterations: u32,
}

/// q ← q − s·∇s/‖∇s‖² until |s| ≤ 1e-4 or the step budget runs out. Returns
/// the last iterate with a convergence flag; degenerate gradients flag
/// non-convergence immediately.
pub fn project_to_surface(f: &SdfField, p: Vec3, steps: u32) -> Projection {
    let mut q = p;
    for it in 0..=steps {
        let (s, g) = f.eval_grad(q);
        if s.abs() <= PROJECT_TOL {
            return Projection {
                point: q,
                converged: true,
                iterations: it,
            };
        }
        if it == steps {
            break;
        }
        let g2 = g.norm_squared();
        if g2 < 1e-12 {
            return Projection {
                point: q,
                converged: false,
                iterations: it,
            };
        }
        q = q - g * (s / g2);
    }
    Projection {
        point: q,
        converged: false,
        iterations: steps,
    }
}

/// Batched projection so network-backed fields amortize matrix work across
/// the active points of every Newton sweep.
pub fn project_batch(f: &SdfField, pts: &[Vec3], steps: u32) -> Vec<Projection> {
    let mut out: Vec<Projection> = pts
        .iter()
        .map(|&p| Projection {
            point: p,
            converged: false,
            iterations: 0,
        })
        .collect();
    let mut active: Vec<usize> = (0..pts.len()).collect();
    for it in 0..=steps {
        if active.is_empty() {
            break;
        }
        let q: Vec<Vec3> = active.iter().map(|&i| out[i].point).collect();
        let sg = f.eval_grad_batch(&q);
        let mut next = Vec::with_capacity(active.len());
        for (slot, &i) in active.iter().enumerate() {
            let (s, g) = sg[slot];
            out[i].iterations = it;
            if s.abs() <= PROJECT_TOL {
                out[i].converged = true;
                continue;
            }
            if it == steps {
                continue;
            }
            let g2 = g.norm_squared();
            if g2 < 1e-12 {
                continue;
            }
            out[i].point = out[i].point - g * (s / g2);
            next.push(i);
        }
        active = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polycube::BoxParams;
    use crate::vec3::vec3;

    #[test]
    fn sphere_projection() {
        let f = SdfField::sphere(Vec3::ZERO, 0.5);
        let r = project_to_surface(&f, vec3(0.7, 0.0, 0.0), 8);
        assert!(r.converged);
        assert!((r.point - vec3(0.5, 0.0, 0.0)).norm() < 1e-4);
    }

    #[test]
    fn on_surface_is_fixed_point() {
        let f = SdfField::sphere(Vec3::ZERO, 0.5);
        let p = vec3(0.5, 0.0, 0.0);
        let r = project_to_surface(&f, p, 8);
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.point, p);
    }

    #[test]
    fn box_face_foot_point() {
        let f = SdfField::Box(BoxParams::new(Vec3::ZERO, vec3(0.5, 0.4, 0.3)));
        // Outside near the +x face: the foot point keeps y,z.
        let r = project_to_surface(&f, vec3(0.8, 0.1, -0.05), 8);
        assert!(r.converged);
        assert!((r.point - vec3(0.5, 0.1, -0.05)).norm() < 1e-4);
    }

    #[test]
    fn degenerate_gradient_flagged() {
        // Center of a sphere: zero gradient.
        let f = SdfField::sphere(Vec3::ZERO, 0.5);
        let r = project_to_surface(&f, Vec3::ZERO, 8);
        assert!(!r.converged);
    }

    #[test]
    fn batch_matches_single() {
        let f = SdfField::sphere(vec3(0.1, 0.0, 0.0), 0.4);
        let pts = [vec3(0.7, 0.2, 0.0), vec3(-0.3, -0.5, 0.6), vec3(0.1, 0.0, 0.9)];
        let batch = project_batch(&f, &pts, 8);
        for (i, &p) in pts.iter().enumerate() {
            let single = project_to_surface(&f, p, 8);
            assert_eq!(batch[i].converged, single.converged);
            assert!((batch[i].point - single.point).norm() < 1e-12);
        }
    }
}
