//! Regular-grid SDF with trilinear interpolation.
//!
//! Binary format: a 16-byte header (12-byte magic, 32-bit LE version), the
//! bounding box as 6 little-endian f64 (min xyz, max xyz), the resolution as
//! 3 little-endian u32, then res.x·res.y·res.z f32 samples in x-fastest order.

use std::path::Path;

use crate::error::SdfError;
use crate::vec3::{vec3, Vec3};

const MAGIC: &[u8; 12] = b"SURFMAPGRID\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct GridSdf {
    pub resolution: [u32; 3],
    pub bbox_min: Vec3,
    pub bbox_max: Vec3,
    samples: Vec<f32>,
}

impl GridSdf {
    pub fn new(
        resolution: [u32; 3],
        bbox_min: Vec3,
        bbox_max: Vec3,
        samples: Vec<f32>,
    ) -> Result<Self, SdfError> {
        let n = resolution.iter().map(|&r| r as usize).product::<usize>();
        if resolution.iter().any(|&r| r < 2) {
            return Err(SdfError::InvalidParams("grid resolution must be >= 2 per axis".into()));
        }
        if samples.len() != n {
            return Err(SdfError::InvalidParams(format!(
                "expected {} samples, got {}",
                n,
                samples.len()
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(SdfError::NonFiniteSamples);
        }
        Ok(GridSdf {
            resolution,
            bbox_min,
            bbox_max,
            samples,
        })
    }

    /// Sample an arbitrary field onto a cubic grid over `bbox`.
    pub fn sample_from(
        eval: impl Fn(Vec3) -> f64,
        resolution: u32,
        bbox_min: Vec3,
        bbox_max: Vec3,
    ) -> Result<Self, SdfError> {
        let r = resolution as usize;
        let mut samples = Vec::with_capacity(r * r * r);
        for iz in 0..r {
            for iy in 0..r {
                for ix in 0..r {
                    let t = |i: usize| i as f64 / (r - 1) as f64;
                    let p = vec3(
                        bbox_min.x + (bbox_max.x - bbox_min.x) * t(ix),
                        bbox_min.y + (bbox_max.y - bbox_min.y) * t(iy),
                        bbox_min.z + (bbox_max.z - bbox_min.z) * t(iz),
                    );
                    samples.push(eval(p) as f32);
                }
            }
        }
        GridSdf::new([resolution; 3], bbox_min, bbox_max, samples)
    }

    fn cell_size(&self) -> Vec3 {
        vec3(
            (self.bbox_max.x - self.bbox_min.x) / (self.resolution[0] - 1) as f64,
            (self.bbox_max.y - self.bbox_min.y) / (self.resolution[1] - 1) as f64,
            (self.bbox_max.z - self.bbox_min.z) / (self.resolution[2] - 1) as f64,
        )
    }

    pub fn min_cell_size(&self) -> f64 {
        let c = self.cell_size();
        c.x.min(c.y).min(c.z)
    }

    fn at(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        let [rx, ry, _] = self.resolution.map(|r| r as usize);
        self.samples[(iz * ry + iy) * rx + ix] as f64
    }

    /// Trilinear interpolation inside the bbox; outside, the value at the
    /// clamped point plus the Euclidean distance to the box.
    pub fn eval(&self, p: Vec3) -> f64 {
        let clamped = p.clamp(self.bbox_min, self.bbox_max);
        let outside = (p - clamped).norm();
        self.interp(clamped) + outside
    }

    fn interp(&self, p: Vec3) -> f64 {
        let cs = self.cell_size();
        let f = vec3(
            (p.x - self.bbox_min.x) / cs.x,
            (p.y - self.bbox_min.y) / cs.y,
            (p.z - self.bbox_min.z) / cs.z,
        );
        let [rx, ry, rz] = self.resolution.map(|r| r as usize);
        let ix = (f.x.floor() as usize).min(rx - 2);
        let iy = (f.y.floor() as usize).min(ry - 2);
        let iz = (f.z.floor() as usize).min(rz - 2);
        let tx = (f.x - ix as f64).clamp(0.0, 1.0);
        let ty = (f.y - iy as f64).clamp(0.0, 1.0);
        let tz = (f.z - iz as f64).clamp(0.0, 1.0);
        let mut acc = 0.0;
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let w = (if dx == 1 { tx } else { 1.0 - tx })
                        * (if dy == 1 { ty } else { 1.0 - ty })
                        * (if dz == 1 { tz } else { 1.0 - tz });
                    acc += w * self.at(ix + dx, iy + dy, iz + dz);
                }
            }
        }
        acc
    }

    /// Central differences on the interpolated field, h = one cell.
    pub fn gradient(&self, p: Vec3) -> Vec3 {
        let cs = self.cell_size();
        let mut g = Vec3::ZERO;
        for axis in 0..3 {
            let h = cs.component(axis);
            let hp = self.eval(p.with_component(axis, p.component(axis) + h));
            let hm = self.eval(p.with_component(axis, p.component(axis) - h));
            g = g.with_component(axis, (hp - hm) / (2.0 * h));
        }
        g
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 48 + 12 + self.samples.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [
            self.bbox_min.x,
            self.bbox_min.y,
            self.bbox_min.z,
            self.bbox_max.x,
            self.bbox_max.y,
            self.bbox_max.z,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in self.resolution {
            out.extend_from_slice(&r.to_le_bytes());
        }
        for s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SdfError> {
        if bytes.len() < 16 + 48 + 12 {
            return Err(SdfError::BadGridFile("file too short".into()));
        }
        if &bytes[0..12] != MAGIC {
            return Err(SdfError::BadGridFile("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        if version != VERSION {
            return Err(SdfError::BadGridFile(format!("unsupported version {version}")));
        }
        let mut f64s = [0.0f64; 6];
        for (i, v) in f64s.iter_mut().enumerate() {
            let o = 16 + i * 8;
            *v = f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        }
        let mut res = [0u32; 3];
        for (i, r) in res.iter_mut().enumerate() {
            let o = 64 + i * 4;
            *r = u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        }
        let n = res.iter().map(|&r| r as usize).product::<usize>();
        let data_off = 76;
        if bytes.len() != data_off + n * 4 {
            return Err(SdfError::BadGridFile(format!(
                "expected {} sample bytes, got {}",
                n * 4,
                bytes.len() - data_off
            )));
        }
        let samples: Vec<f32> = bytes[data_off..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        GridSdf::new(
            res,
            vec3(f64s[0], f64s[1], f64s[2]),
            vec3(f64s[3], f64s[4], f64s[5]),
            samples,
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), SdfError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SdfError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn translated(&self, t: Vec3) -> GridSdf {
        GridSdf {
            resolution: self.resolution,
            bbox_min: self.bbox_min + t,
            bbox_max: self.bbox_max + t,
            samples: self.samples.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bytes() {
        let g = GridSdf::sample_from(
            |p| p.norm() - 0.5,
            8,
            vec3(-1.0, -1.0, -1.0),
            vec3(1.0, 1.0, 1.0),
        )
        .unwrap();
        let bytes = g.to_bytes();
        let back = GridSdf::from_bytes(&bytes).unwrap();
        assert_eq!(back.resolution, g.resolution);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_nonfinite() {
        let err = GridSdf::new(
            [2, 2, 2],
            vec3(-1.0, -1.0, -1.0),
            vec3(1.0, 1.0, 1.0),
            vec![0.0, 1.0, f32::NAN, 0.0, 0.0, 0.0, 0.0, 0.0],
        );
        assert!(matches!(err, Err(SdfError::NonFiniteSamples)));
    }

    #[test]
    fn sphere_interpolation_accuracy() {
        let g = GridSdf::sample_from(
            |p| p.norm() - 0.5,
            64,
            vec3(-1.0, -1.0, -1.0),
            vec3(1.0, 1.0, 1.0),
        )
        .unwrap();
        let cell = g.min_cell_size();
        let v = g.eval(vec3(1.0, 0.0, 0.0));
        assert!((v - 0.5).abs() <= 2.0 * cell, "grid {} vs analytic 0.5", v);
    }

    #[test]
    fn extrapolates_outside_bbox() {
        let g = GridSdf::sample_from(
            |p| p.norm() - 0.5,
            16,
            vec3(-1.0, -1.0, -1.0),
            vec3(1.0, 1.0, 1.0),
        )
        .unwrap();
        let inside = g.eval(vec3(1.0, 0.0, 0.0));
        let outside = g.eval(vec3(1.75, 0.0, 0.0));
        assert!((outside - (inside + 0.75)).abs() < 1e-12);
    }
}
