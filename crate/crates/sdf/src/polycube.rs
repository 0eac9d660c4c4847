//! Axis-aligned boxes and their polycube union with Kreisselmeier-Steinhauser
//! smoothing. Sign convention: negative inside, so the hard union is a min
//! over per-box distances and the KS form is a smooth lower bound within
//! log(k)/λ of it.

use crate::error::SdfError;
use crate::scalar::Scalar;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxParams {
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl BoxParams {
    pub fn new(center: Vec3, half_extents: Vec3) -> Self {
        BoxParams { center, half_extents }
    }

    pub fn validate(&self) -> Result<(), SdfError> {
        if !self.center.is_finite() || !self.half_extents.is_finite() {
            return Err(SdfError::InvalidParams("box parameters must be finite".into()));
        }
        if self.half_extents.x <= 0.0 || self.half_extents.y <= 0.0 || self.half_extents.z <= 0.0 {
            return Err(SdfError::InvalidParams("box half extents must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolycubeParams {
    pub boxes: Vec<BoxParams>,
    /// KS sharpness λ; the smooth union stays within log(k)/λ of the hard one.
    pub ks_lambda: f64,
}

pub const DEFAULT_KS_LAMBDA: f64 = 100.0;

impl PolycubeParams {
    pub fn new(boxes: Vec<BoxParams>) -> Self {
        PolycubeParams {
            boxes,
            ks_lambda: DEFAULT_KS_LAMBDA,
        }
    }

    pub fn validate(&self) -> Result<(), SdfError> {
        if self.boxes.is_empty() {
            return Err(SdfError::InvalidParams("polycube needs at least one box".into()));
        }
        if !(self.ks_lambda.is_finite() && self.ks_lambda > 0.0) {
            return Err(SdfError::InvalidParams("ks_lambda must be finite and positive".into()));
        }
        for b in &self.boxes {
            b.validate()?;
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.boxes.len()
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = Vec3::ZERO;
        for b in &self.boxes {
            c += b.center;
        }
        c / self.boxes.len() as f64
    }

    /// Uniform scale about a pivot: centers move toward the pivot, extents shrink.
    pub fn scaled_about(&self, pivot: Vec3, scale: f64) -> PolycubeParams {
        PolycubeParams {
            boxes: self
                .boxes
                .iter()
                .map(|b| BoxParams {
                    center: pivot + (b.center - pivot) * scale,
                    half_extents: b.half_extents * scale,
                })
                .collect(),
            ks_lambda: self.ks_lambda,
        }
    }
}

/// Per-box distance: max over axes of |p−c| − h. Negative strictly inside,
/// zero on the boundary.
pub fn eval_box_sdf<S: Scalar>(b: &BoxParams, p: [S; 3]) -> S {
    let c = b.center.to_array();
    let h = b.half_extents.to_array();
    let mut best = (p[0] - S::from_f64(c[0])).abs() - S::from_f64(h[0]);
    for a in 1..3 {
        let t = (p[a] - S::from_f64(c[a])).abs() - S::from_f64(h[a]);
        best = best.max_s(t);
    }
    best
}

/// Hard union of the boxes: min over per-box distances.
pub fn eval_polycube_exact(pc: &PolycubeParams, p: Vec3) -> f64 {
    let pa = p.to_array();
    pc.boxes
        .iter()
        .map(|b| eval_box_sdf(b, pa))
        .fold(f64::INFINITY, f64::min)
}

/// KS-smoothed union −(1/λ)·log Σ exp(−λφᵢ), evaluated via a shifted
/// log-sum-exp so large λ·φ never overflows.
pub fn eval_polycube_ks<S: Scalar>(pc: &PolycubeParams, p: [S; 3]) -> S {
    let lam = pc.ks_lambda;
    let phi: Vec<S> = pc.boxes.iter().map(|b| eval_box_sdf(b, p)).collect();
    let mut m = phi[0];
    for t in &phi[1..] {
        m = m.min_s(*t);
    }
    // −(1/λ)·ln Σ exp(−λφᵢ) = m − (1/λ)·ln Σ exp(−λ(φᵢ−m))
    let mut sum = S::from_f64(0.0);
    for t in phi {
        sum = sum + ((t - m) * S::from_f64(-lam)).exp();
    }
    m - sum.ln() * S::from_f64(1.0 / lam)
}

/// Closed-form gradient of the per-box distance: signed axis unit vector of
/// the dominating term (a.e. defined; ties pick the first axis).
pub fn box_sdf_gradient(b: &BoxParams, p: Vec3) -> Vec3 {
    let d = p - b.center;
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
    let s = if d.component(axis) >= 0.0 { 1.0 } else { -1.0 };
    Vec3::ZERO.with_component(axis, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec3::vec3;

    fn unit_box() -> BoxParams {
        BoxParams::new(Vec3::ZERO, vec3(1.0, 1.0, 1.0))
    }

    #[test]
    fn box_center_inside() {
        assert_eq!(eval_box_sdf(&unit_box(), [0.0, 0.0, 0.0]), -1.0);
    }

    #[test]
    fn box_outside_face() {
        assert_eq!(eval_box_sdf(&unit_box(), [2.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn box_on_face() {
        let b = BoxParams::new(vec3(0.5, 0.0, 0.0), vec3(0.5, 1.0, 1.0));
        assert_eq!(eval_box_sdf(&b, [1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn single_box_union_reduces() {
        let pc = PolycubeParams::new(vec![unit_box()]);
        assert_eq!(eval_polycube_exact(&pc, Vec3::ZERO), -1.0);
        // k=1 KS equals the box exactly: log of a single exp.
        let ks: f64 = eval_polycube_ks(&pc, [0.0, 0.0, 0.0]);
        assert!((ks + 1.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_boxes_are_idempotent_in_exact_union() {
        let pc1 = PolycubeParams::new(vec![unit_box()]);
        let pc2 = PolycubeParams::new(vec![unit_box(), unit_box()]);
        for p in [Vec3::ZERO, vec3(1.5, 0.2, -0.3), vec3(-0.9, 0.9, 0.4)] {
            assert_eq!(eval_polycube_exact(&pc1, p), eval_polycube_exact(&pc2, p));
        }
    }

    #[test]
    fn ks_of_two_identical_boxes_shifts_by_log2_over_lambda() {
        let pc = PolycubeParams::new(vec![unit_box(), unit_box()]);
        let exact = eval_polycube_exact(&pc, Vec3::ZERO);
        let ks: f64 = eval_polycube_ks(&pc, [0.0, 0.0, 0.0]);
        let expected = exact - 2.0f64.ln() / 100.0;
        assert!((ks - expected).abs() < 1e-12, "{} vs {}", ks, expected);
    }

    #[test]
    fn two_abutting_boxes_union_matches_per_box_min() {
        let pc = PolycubeParams::new(vec![
            BoxParams::new(vec3(-1.0, 0.0, 0.0), vec3(1.0, 1.0, 1.0)),
            BoxParams::new(vec3(1.0, 0.0, 0.0), vec3(1.0, 1.0, 1.0)),
        ]);
        // The union is min over per-box values. The midpoint sits on the
        // shared seam where both per-box values vanish, so the min-union
        // reads 0 there even though the true union distance is -1; the union
        // of per-box distances is only a bound in overlap/seam regions.
        let b0 = eval_box_sdf(&pc.boxes[0], [0.0, 0.0, 0.0]);
        let b1 = eval_box_sdf(&pc.boxes[1], [0.0, 0.0, 0.0]);
        assert_eq!(eval_polycube_exact(&pc, Vec3::ZERO), b0.min(b1));
        assert_eq!(eval_polycube_exact(&pc, Vec3::ZERO), 0.0);
        // Off the seam, interior points read negative as expected.
        assert_eq!(eval_polycube_exact(&pc, vec3(-1.0, 0.0, 0.0)), -1.0);
        assert_eq!(eval_polycube_exact(&pc, vec3(0.5, 0.0, 0.0)), -0.5);
    }

    #[test]
    fn ks_no_overflow_far_away() {
        let pc = PolycubeParams::new(vec![unit_box()]);
        let ks: f64 = eval_polycube_ks(&pc, [1e3, 0.0, 0.0]);
        assert!(ks.is_finite());
        assert!((ks - 999.0).abs() < 1e-9);
    }
}
