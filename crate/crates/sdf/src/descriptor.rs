//! Structured-text descriptors for analytic fields and the standalone domain
//! file consumed by domain-swap editing.
//!
//! Descriptor grammar (one line, colon-separated head):
//!   sphere:cx,cy,cz,r
//!   box:cx,cy,cz,hx,hy,hz
//!   torus:major,minor
//!   boxes:cx,cy,cz,hx,hy,hz;...           (polycube union, default λ=100)
//!   grid:path/to/file.sdfgrid

use std::fmt::Write as _;
use std::path::Path;

use crate::error::SdfError;
use crate::field::SdfField;
use crate::grid::GridSdf;
use crate::polycube::{BoxParams, PolycubeParams};
use crate::vec3::vec3;

fn bad(descriptor: &str, reason: impl Into<String>) -> SdfError {
    SdfError::BadDescriptor {
        descriptor: descriptor.into(),
        reason: reason.into(),
    }
}

fn parse_floats(desc: &str, s: &str, n: usize) -> Result<Vec<f64>, SdfError> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|e| bad(desc, format!("bad number: {e}")))?;
    if vals.len() != n {
        return Err(bad(desc, format!("expected {} numbers, got {}", n, vals.len())));
    }
    Ok(vals)
}

pub fn parse_field_descriptor(desc: &str) -> Result<SdfField, SdfError> {
    let (head, rest) = desc
        .split_once(':')
        .ok_or_else(|| bad(desc, "missing ':'"))?;
    match head.trim() {
        "sphere" => {
            let v = parse_floats(desc, rest, 4)?;
            Ok(SdfField::sphere(vec3(v[0], v[1], v[2]), v[3]))
        }
        "box" => {
            let v = parse_floats(desc, rest, 6)?;
            let b = BoxParams::new(vec3(v[0], v[1], v[2]), vec3(v[3], v[4], v[5]));
            b.validate()?;
            Ok(SdfField::Box(b))
        }
        "torus" => {
            let v = parse_floats(desc, rest, 2)?;
            Ok(SdfField::Torus { major: v[0], minor: v[1] })
        }
        "boxes" => {
            let boxes: Result<Vec<BoxParams>, SdfError> = rest
                .split(';')
                .map(|part| {
                    let v = parse_floats(desc, part, 6)?;
                    let b = BoxParams::new(vec3(v[0], v[1], v[2]), vec3(v[3], v[4], v[5]));
                    b.validate()?;
                    Ok(b)
                })
                .collect();
            let pc = PolycubeParams::new(boxes?);
            pc.validate()?;
            Ok(SdfField::Polycube(pc))
        }
        "grid" => Ok(SdfField::Grid(GridSdf::load(Path::new(rest.trim()))?)),
        other => Err(bad(desc, format!("unknown field kind {other:?}"))),
    }
}

/// Render a descriptor back; only variants with a closed parameter list.
pub fn format_field_descriptor(f: &SdfField) -> Result<String, SdfError> {
    match f {
        SdfField::Sphere { center, radius } => Ok(format!(
            "sphere:{},{},{},{}",
            center.x, center.y, center.z, radius
        )),
        SdfField::Box(b) => Ok(format!(
            "box:{},{},{},{},{},{}",
            b.center.x, b.center.y, b.center.z, b.half_extents.x, b.half_extents.y, b.half_extents.z
        )),
        SdfField::Torus { major, minor } => Ok(format!("torus:{},{}", major, minor)),
        SdfField::Polycube(pc) => {
            let mut s = String::from("boxes:");
            for (i, b) in pc.boxes.iter().enumerate() {
                if i > 0 {
                    s.push(';');
                }
                let _ = write!(
                    s,
                    "{},{},{},{},{},{}",
                    b.center.x, b.center.y, b.center.z, b.half_extents.x, b.half_extents.y, b.half_extents.z
                );
            }
            Ok(s)
        }
        _ => Err(SdfError::Unsupported("descriptor for this variant")),
    }
}

/// Standalone domain file: `kind`, parameters, one record per line.
pub fn write_domain_file(f: &SdfField, path: &Path) -> Result<(), SdfError> {
    let mut out = String::from("# surfmap domain v1\n");
    match f {
        SdfField::Sphere { center, radius } => {
            out.push_str("kind sphere\n");
            let _ = writeln!(out, "center {} {} {}", center.x, center.y, center.z);
            let _ = writeln!(out, "radius {}", radius);
        }
        SdfField::Polycube(pc) => {
            out.push_str("kind polycube\n");
            let _ = writeln!(out, "ks_lambda {}", pc.ks_lambda);
            for b in &pc.boxes {
                let _ = writeln!(
                    out,
                    "box {} {} {} {} {} {}",
                    b.center.x, b.center.y, b.center.z, b.half_extents.x, b.half_extents.y, b.half_extents.z
                );
            }
        }
        _ => return Err(SdfError::Unsupported("domain file for this variant")),
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_domain_file(path: &Path) -> Result<SdfField, SdfError> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut kind: Option<String> = None;
    let mut center = None;
    let mut radius = None;
    let mut ks_lambda = crate::polycube::DEFAULT_KS_LAMBDA;
    let mut boxes = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        let nums = |n: usize| -> Result<Vec<f64>, SdfError> {
            if rest.len() != n {
                return Err(bad(&name, format!("{key}: expected {n} values")));
            }
            rest.iter()
                .map(|t| t.parse::<f64>().map_err(|e| bad(&name, e.to_string())))
                .collect()
        };
        match key {
            "kind" => kind = Some(rest.join(" ")),
            "center" => {
                let v = nums(3)?;
                center = Some(vec3(v[0], v[1], v[2]));
            }
            "radius" => radius = Some(nums(1)?[0]),
            "ks_lambda" => ks_lambda = nums(1)?[0],
            "box" => {
                let v = nums(6)?;
                boxes.push(BoxParams::new(vec3(v[0], v[1], v[2]), vec3(v[3], v[4], v[5])));
            }
            other => return Err(bad(&name, format!("unknown record {other:?}"))),
        }
    }
    match kind.as_deref() {
        Some("sphere") => {
            let center = center.ok_or_else(|| bad(&name, "missing center"))?;
            let radius = radius.ok_or_else(|| bad(&name, "missing radius"))?;
            Ok(SdfField::sphere(center, radius))
        }
        Some("polycube") => {
            let pc = PolycubeParams { boxes, ks_lambda };
            pc.validate()?;
            Ok(SdfField::Polycube(pc))
        }
        Some(other) => Err(bad(&name, format!("unknown kind {other:?}"))),
        None => Err(bad(&name, "missing kind record")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trip() {
        for desc in [
            "sphere:0,0.1,0,0.5",
            "box:0,0,0,0.5,0.4,0.3",
            "torus:0.5,0.2",
            "boxes:-0.3,0,0,0.3,0.2,0.2;0.3,0,0,0.2,0.3,0.2",
        ] {
            let f = parse_field_descriptor(desc).unwrap();
            let back = format_field_descriptor(&f).unwrap();
            let f2 = parse_field_descriptor(&back).unwrap();
            let p = vec3(0.21, -0.4, 0.33);
            assert_eq!(f.eval(p), f2.eval(p), "{desc}");
        }
    }

    #[test]
    fn reject_malformed() {
        assert!(parse_field_descriptor("sphere:1,2,3").is_err());
        assert!(parse_field_descriptor("blob:1").is_err());
        assert!(parse_field_descriptor("no-colon").is_err());
    }

    #[test]
    fn domain_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("domain.txt");
        let pc = parse_field_descriptor("boxes:-0.3,0,0,0.3,0.2,0.2;0.3,0,0,0.2,0.3,0.2").unwrap();
        write_domain_file(&pc, &path).unwrap();
        let back = read_domain_file(&path).unwrap();
        let p = vec3(0.11, 0.02, -0.3);
        assert_eq!(pc.eval(p), back.eval(p));
    }
}
