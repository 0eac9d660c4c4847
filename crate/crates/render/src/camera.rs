//! Pinhole cameras, ray generation and the plain-text camera file.

use std::fmt::Write as _;
use std::path::Path;

use surfmap_sdf::{vec3, Vec3};

use crate::RenderError;

/// Pinhole camera. `rotation` is world-from-camera with columns (right, up,
/// backward); the camera looks along its −z axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub rotation: [[f64; 3]; 3],
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, focal: f64, width: u32, height: u32) -> Self {
        let z = (eye - target).normalized();
        let x = up.cross(z).normalized();
        let y = z.cross(x);
        Camera {
            position: eye,
            rotation: [
                [x.x, y.x, z.x],
                [x.y, y.y, z.y],
                [x.z, y.z, z.z],
            ],
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn rotate_dir(&self, d: Vec3) -> Vec3 {
        vec3(
            self.rotation[0][0] * d.x + self.rotation[0][1] * d.y + self.rotation[0][2] * d.z,
            self.rotation[1][0] * d.x + self.rotation[1][1] * d.y + self.rotation[1][2] * d.z,
            self.rotation[2][0] * d.x + self.rotation[2][1] * d.y + self.rotation[2][2] * d.z,
        )
    }

    /// World-space direction through the center of pixel (col, row); rows
    /// count from the top of the image.
    pub fn pixel_direction(&self, col: u32, row: u32) -> Vec3 {
        let x = (col as f64 + 0.5 - self.cx) / self.focal;
        let y = -((row as f64 + 0.5 - self.cy) / self.focal);
        self.rotate_dir(vec3(x, y, -1.0)).normalized()
    }

    /// Rescale intrinsics to a different resolution, same field of view.
    pub fn with_resolution(&self, width: u32, height: u32) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            focal: self.focal * sx,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..*self
        }
    }

    pub fn matrix_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = self.position;
        [
            r[0][0], r[0][1], r[0][2], t.x,
            r[1][0], r[1][1], r[1][2], t.y,
            r[2][0], r[2][1], r[2][2], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn from_matrix_row_major(
        m: &[f64; 16],
        focal: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Camera, RenderError> {
        let rotation = [
            [m[0], m[1], m[2]],
            [m[4], m[5], m[6]],
            [m[8], m[9], m[10]],
        ];
        let cam = Camera {
            position: vec3(m[3], m[7], m[11]),
            rotation,
            focal,
            cx,
            cy,
            width,
            height,
        };
        // Orthonormal with det +1, focal positive.
        if focal <= 0.0 {
            return Err(RenderError::BadCamera("focal must be positive".into()));
        }
        let c = |i: usize| vec3(rotation[0][i], rotation[1][i], rotation[2][i]);
        let det = c(0).dot(c(1).cross(c(2)));
        for i in 0..3 {
            if (c(i).norm() - 1.0).abs() > 1e-6 {
                return Err(RenderError::BadCamera("rotation columns not unit".into()));
            }
        }
        if (det - 1.0).abs() > 1e-6 {
            return Err(RenderError::BadCamera(format!("rotation det {det}, want +1")));
        }
        Ok(cam)
    }
}

/// Slab intersection with the render volume [-1.2, 1.2]³.
pub const SCENE_BOUND: f64 = 1.2;

pub fn ray_scene_interval(origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
    let mut t0: f64 = 1e-4;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let o = origin.component(axis);
        let d = dir.component(axis);
        if d.abs() < 1e-12 {
            if o.abs() > SCENE_BOUND {
                return None;
            }
            continue;
        }
        let a = (-SCENE_BOUND - o) / d;
        let b = (SCENE_BOUND - o) / d;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        t0 = t0.max(lo);
        t1 = t1.min(hi);
    }
    if t0 < t1 {
        Some((t0, t1))
    } else {
        None
    }
}

/// Write the camera list: one `view` block per camera.
pub fn write_cameras(cams: &[Camera], path: &Path) -> Result<(), RenderError> {
    let mut out = String::from("# surfmap cameras v1\n");
    for (i, c) in cams.iter().enumerate() {
        let _ = writeln!(out, "view {i}");
        let m = c.matrix_row_major();
        let _ = write!(out, "matrix");
        for v in m {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "intrinsics {} {} {} {} {}",
            c.focal, c.cx, c.cy, c.width, c.height
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>, RenderError> {
    let text = std::fs::read_to_string(path)?;
    let mut cams = Vec::new();
    let mut matrix: Option<[f64; 16]> = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next().unwrap() {
            "view" => {}
            "matrix" => {
                let vals: Result<Vec<f64>, _> = parts.map(|t| t.parse::<f64>()).collect();
                let vals = vals.map_err(|e| RenderError::BadCamera(e.to_string()))?;
                if vals.len() != 16 {
                    return Err(RenderError::BadCamera(format!(
                        "matrix needs 16 values, got {}",
                        vals.len()
                    )));
                }
                matrix = Some(vals.try_into().expect("16 values"));
            }
            "intrinsics" => {
                let vals: Result<Vec<f64>, _> = parts.map(|t| t.parse::<f64>()).collect();
                let vals = vals.map_err(|e| RenderError::BadCamera(e.to_string()))?;
                if vals.len() != 5 {
                    return Err(RenderError::BadCamera("intrinsics needs 5 values".into()));
                }
                let m = matrix
                    .take()
                    .ok_or_else(|| RenderError::BadCamera("intrinsics before matrix".into()))?;
                cams.push(Camera::from_matrix_row_major(
                    &m,
                    vals[0],
                    vals[1],
                    vals[2],
                    vals[3] as u32,
                    vals[4] as u32,
                )?);
            }
            other => {
                return Err(RenderError::BadCamera(format!("unknown record {other:?}")));
            }
        }
    }
    Ok(cams)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_points_camera_at_target() {
        let cam = Camera::look_at(vec3(0.0, 0.0, 2.0), Vec3::ZERO, vec3(0.0, 1.0, 0.0), 64.0, 64, 64);
        let d = cam.pixel_direction(31, 31);
        // Center pixel looks roughly toward -z (at the origin).
        assert!(d.z < -0.99);
        let det = {
            let c = |i: usize| vec3(cam.rotation[0][i], cam.rotation[1][i], cam.rotation[2][i]);
            c(0).dot(c(1).cross(c(2)))
        };
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn camera_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cameras.txt");
        let cams = vec![
            Camera::look_at(vec3(0.0, 0.5, 2.0), Vec3::ZERO, vec3(0.0, 1.0, 0.0), 80.0, 64, 48),
            Camera::look_at(vec3(1.5, -0.5, 1.0), Vec3::ZERO, vec3(0.0, 1.0, 0.0), 80.0, 64, 48),
        ];
        write_cameras(&cams, &path).unwrap();
        let back = read_cameras(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in cams.iter().zip(&back) {
            assert!((a.position - b.position).norm() < 1e-12);
            assert_eq!(a.width, b.width);
        }
    }

    #[test]
    fn scene_interval_misses_sideways_rays() {
        assert!(ray_scene_interval(vec3(0.0, 0.0, 3.0), vec3(0.0, 0.0, 1.0)).is_none());
        let (t0, t1) = ray_scene_interval(vec3(0.0, 0.0, 3.0), vec3(0.0, 0.0, -1.0)).unwrap();
        assert!((t0 - 1.8).abs() < 1e-12);
        assert!((t1 - 4.2).abs() < 1e-12);
    }
}
