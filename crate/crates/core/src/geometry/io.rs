//! ASCII line-set format.
//!
//! ```text
//! # comment
//! v x y z a      vertex position and attribute in [0, 1]
//! l i1 i2 ...    polyline over one-based vertex indices
//! ```

use super::{GeometryError, IoErrorEq, LineSet, LineVertex};
use crate::math::Vec3;
use std::fmt::Write as _;
use std::path::Path;

pub fn load_lineset(path: impl AsRef<Path>) -> Result<LineSet, GeometryError> {
    let text = std::fs::read_to_string(path).map_err(IoErrorEq)?;
    parse_lineset(&text)
}

pub fn parse_lineset(text: &str) -> Result<LineSet, GeometryError> {
    let mut vertices = Vec::new();
    let mut polylines = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        let err = |msg: String| GeometryError::Parse { line: line_no, msg };
        match tag {
            "v" => {
                let vals = tokens
                    .map(|t| t.parse::<f64>().map_err(|_| err(format!("invalid number '{t}'"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if vals.len() != 4 {
                    return Err(err(format!("vertex needs 4 values, found {}", vals.len())));
                }
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(err("non-finite vertex value".into()));
                }
                vertices.push(LineVertex {
                    position: Vec3::new(vals[0], vals[1], vals[2]),
                    attribute: vals[3],
                });
            }
            "l" => {
                let idx = tokens
                    .map(|t| match t.parse::<usize>() {
                        Ok(0) => Err(err("vertex indices are one-based".into())),
                        Ok(i) => Ok(i - 1),
                        Err(_) => Err(err(format!("invalid index '{t}'"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() < 2 {
                    return Err(err(format!("polyline needs at least 2 indices, found {}", idx.len())));
                }
                polylines.push(idx);
            }
            other => return Err(err(format!("unknown record '{other}'"))),
        }
    }
    LineSet::new(vertices, polylines)
}

/// Serializes with shortest round-trip float formatting, so `parse(write(s)) == s`.
pub fn write_lineset(set: &LineSet) -> String {
    let mut out = String::with_capacity(set.vertices.len() * 40);
    for v in &set.vertices {
        let p = v.position;
        let _ = writeln!(out, "v {:?} {:?} {:?} {:?}", p.x, p.y, p.z, v.attribute);
    }
    for line in &set.polylines {
        out.push('l');
        for &i in line {
            let _ = write!(out, " {}", i + 1);
        }
        out.push('\n');
    }
    out
}

pub fn save_lineset(set: &LineSet, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    std::fs::write(path, write_lineset(set)).map_err(|e| IoErrorEq(e).into())
}
