//! Line sets, transfer functions and tube triangulation.

mod io;
mod synth;
mod transfer;
mod tube;

pub use io::{load_lineset, parse_lineset, save_lineset, write_lineset};
pub use synth::{synth_lineset, SynthKind};
pub use transfer::{apply_transfer, ControlPoint, Rgba, TransferFunction};
pub use tube::{average_tangent, generate_tube_mesh, TriMesh, RING_VERTICES};

use crate::math::{Aabb, Vec3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("polyline {polyline}: vertex index {index} out of range (have {count} vertices)")]
    IndexOutOfRange {
        polyline: usize,
        index: usize,
        count: usize,
    },
    #[error("vertex {vertex}: attribute {value} outside [0, 1]")]
    AttributeRange { vertex: usize, value: f64 },
    #[error("polyline {polyline} has {count} vertices, need at least 2")]
    TooShort { polyline: usize, count: usize },
    #[error("polyline {polyline}: zero-length segment at vertex {vertex}")]
    ZeroLengthSegment { polyline: usize, vertex: usize },
    #[error("polyline {polyline}: degenerate tangent at vertex {vertex}")]
    DegenerateTangent { polyline: usize, vertex: usize },
    #[error("invalid transfer function: {0}")]
    Transfer(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] IoErrorEq),
}

/// `std::io::Error` wrapper so `GeometryError` can stay `PartialEq` for tests.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct IoErrorEq(#[from] pub std::io::Error);

impl PartialEq for IoErrorEq {
    fn eq(&self, other: &Self) -> bool {
        self.0.kind() == other.0.kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineVertex {
    pub position: Vec3,
    /// Scalar in [0, 1] that the transfer function maps to color and opacity.
    pub attribute: f64,
}

/// A set of polylines over a shared vertex pool.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineSet {
    pub vertices: Vec<LineVertex>,
    /// Each polyline is a run of indices into `vertices`.
    pub polylines: Vec<Vec<usize>>,
}

impl LineSet {
    /// Builds a line set and checks every invariant.
    pub fn new(vertices: Vec<LineVertex>, polylines: Vec<Vec<usize>>) -> Result<Self, GeometryError> {
        let set = Self { vertices, polylines };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for (i, v) in self.vertices.iter().enumerate() {
            if !(0.0..=1.0).contains(&v.attribute) {
                return Err(GeometryError::AttributeRange {
                    vertex: i,
                    value: v.attribute,
                });
            }
            if !v.position.is_finite() {
                return Err(GeometryError::InvalidParameter(format!(
                    "vertex {i} has a non-finite position"
                )));
            }
        }
        for (p, line) in self.polylines.iter().enumerate() {
            if line.len() < 2 {
                return Err(GeometryError::TooShort {
                    polyline: p,
                    count: line.len(),
                });
            }
            if let Some(&bad) = line.iter().find(|&&i| i >= self.vertices.len()) {
                return Err(GeometryError::IndexOutOfRange {
                    polyline: p,
                    index: bad,
                    count: self.vertices.len(),
                });
            }
            for (k, w) in line.windows(2).enumerate() {
                let a = self.vertices[w[0]].position;
                let b = self.vertices[w[1]].position;
                if (b - a).length_squared() == 0.0 {
                    return Err(GeometryError::ZeroLengthSegment {
                        polyline: p,
                        vertex: k + 1,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn polyline_positions(&self, polyline: usize) -> impl Iterator<Item = Vec3> + '_ {
        self.polylines[polyline].iter().map(move |&i| self.vertices[i].position)
    }

    pub fn vertex(&self, polyline: usize, k: usize) -> &LineVertex {
        &self.vertices[self.polylines[polyline][k]]
    }

    pub fn segment_count(&self) -> usize {
        self.polylines.iter().map(|l| l.len() - 1).sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.polylines.iter().flatten().map(|&i| self.vertices[i].position))
    }

    /// All segments as `(polyline, segment index, start, end)`.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize, LineVertex, LineVertex)> + '_ {
        self.polylines.iter().enumerate().flat_map(move |(p, line)| {
            line.windows(2)
                .enumerate()
                .map(move |(s, w)| (p, s, self.vertices[w[0]], self.vertices[w[1]]))
        })
    }
}
