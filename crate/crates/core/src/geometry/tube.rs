//! Triangulated tubes around polylines: three ring vertices per line vertex.

use super::{GeometryError, LineSet};
use crate::math::{Aabb, Vec3};
use std::f64::consts::TAU;

/// Ring vertices per polyline vertex. Fixed so every technique sees identical geometry.
pub const RING_VERTICES: usize = 3;

/// Indexed triangle mesh with per-vertex normals and attributes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub attributes: Vec<f64>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.positions.iter().copied())
    }

    pub fn triangle_positions(&self, tri: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[tri];
        [
            self.positions[a as usize],
            self.positions[b as usize],
            self.positions[c as usize],
        ]
    }

    /// Appends another mesh, offsetting its indices. Triangle order is preserved.
    pub fn append(&mut self, other: &TriMesh) {
        let base = self.positions.len() as u32;
        self.positions.extend_from_slice(&other.positions);
        self.normals.extend_from_slice(&other.normals);
        self.attributes.extend_from_slice(&other.attributes);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + base)));
    }

    /// Reorders triangles; `order[i]` is the old index of new triangle `i`.
    pub fn permute_triangles(&self, order: &[usize]) -> TriMesh {
        let mut out = self.clone();
        out.triangles = order.iter().map(|&i| self.triangles[i]).collect();
        out
    }
}

/// Unit tangent at a polyline vertex: the normalized mean of the adjacent unit
/// segment directions, or the single adjacent direction at the endpoints.
pub fn average_tangent(set: &LineSet, polyline: usize, vertex: usize) -> Result<Vec3, GeometryError> {
    let line = set
        .polylines
        .get(polyline)
        .ok_or_else(|| GeometryError::InvalidParameter(format!("polyline {polyline} does not exist")))?;
    if vertex >= line.len() {
        return Err(GeometryError::InvalidParameter(format!(
            "vertex {vertex} not in polyline {polyline}"
        )));
    }
    let pos = |k: usize| set.vertices[line[k]].position;
    let seg_dir = |k: usize| {
        (pos(k + 1) - pos(k))
            .try_normalize()
            .ok_or(GeometryError::ZeroLengthSegment {
                polyline,
                vertex: k + 1,
            })
    };
    let degenerate = GeometryError::DegenerateTangent { polyline, vertex };
    if vertex == 0 {
        seg_dir(0)
    } else if vertex == line.len() - 1 {
        seg_dir(vertex - 1)
    } else {
        let sum = seg_dir(vertex - 1)? + seg_dir(vertex)?;
        // a full reversal leaves no usable direction
        if sum.length() < 1e-9 {
            return Err(degenerate);
        }
        Ok(sum.normalize())
    }
}

/// Coordinate axis least aligned with `t`, made orthogonal to it.
fn initial_normal(t: Vec3) -> Vec3 {
    let a = t.abs();
    let axis = if a.x <= a.y && a.x <= a.z {
        Vec3::X
    } else if a.y <= a.z {
        Vec3::Y
    } else {
        Vec3::Z
    };
    (axis - t * axis.dot(t)).normalize()
}

/// Builds a closed 3-sided tube per polyline.
///
/// Reference frames are propagated along the line by projecting the previous
/// ring normal onto the next ring plane, which keeps the tube free of twist.
/// Each tube gets one cap triangle at either end.
pub fn generate_tube_mesh(set: &LineSet, radius: f64) -> Result<TriMesh, GeometryError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(GeometryError::InvalidParameter(format!(
            "tube radius must be positive, got {radius}"
        )));
    }
    let mut mesh = TriMesh::default();
    let nv: usize = set.polylines.iter().map(Vec::len).sum();
    mesh.positions.reserve(nv * RING_VERTICES);
    mesh.normals.reserve(nv * RING_VERTICES);
    mesh.attributes.reserve(nv * RING_VERTICES);
    mesh.triangles
        .reserve(set.polylines.iter().map(|l| 6 * (l.len() - 1) + 2).sum());

    for (p, line) in set.polylines.iter().enumerate() {
        let base = mesh.positions.len() as u32;
        let mut normal = Vec3::ZERO;
        for k in 0..line.len() {
            let tangent = average_tangent(set, p, k)?;
            normal = if k == 0 {
                initial_normal(tangent)
            } else {
                (normal - tangent * normal.dot(tangent))
                    .try_normalize()
                    .unwrap_or_else(|| initial_normal(tangent))
            };
            let binormal = tangent.cross(normal);
            let v = set.vertices[line[k]];
            for r in 0..RING_VERTICES {
                let angle = TAU * r as f64 / RING_VERTICES as f64;
                let dir = normal * angle.cos() + binormal * angle.sin();
                mesh.positions.push(v.position + dir * radius);
                mesh.normals.push(dir);
                mesh.attributes.push(v.attribute);
            }
        }
        let ring = |k: usize, r: usize| base + (k * RING_VERTICES + r % RING_VERTICES) as u32;
        mesh.triangles.push([ring(0, 0), ring(0, 2), ring(0, 1)]);
        for k in 0..line.len() - 1 {
            for r in 0..RING_VERTICES {
                mesh.triangles.push([ring(k, r), ring(k, r + 1), ring(k + 1, r)]);
                mesh.triangles
                    .push([ring(k, r + 1), ring(k + 1, r + 1), ring(k + 1, r)]);
            }
        }
        let last = line.len() - 1;
        mesh.triangles.push([ring(last, 0), ring(last, 1), ring(last, 2)]);
    }
    Ok(mesh)
}
