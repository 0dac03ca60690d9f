//! Voxel-based line ray casting.
//!
//! Polylines are clipped at voxel boundaries. Inside each voxel a pass of a line is
//! replaced by one straight piece from its entry point to its exit point, and crossing
//! points are snapped to the centers of a `Q×Q` subdivision of the crossed face. Rays walk
//! the grid with a DDA and intersect the tubes around the pieces of each visited voxel and
//! its neighbors. A hit counts only inside the voxel interval that contains it, so a piece
//! seen from several voxels is blended once.

use crate::camera::Camera;
use crate::exact::Framebuffer;
use crate::geometry::{apply_transfer, LineSet, Rgba, TransferFunction};
use crate::intersect::intersect_ray_tube;
use crate::math::{Aabb, Ray, Vec3};
use crate::raster::{shade_fragment, Shading};
use crate::raytracer::view_range;
use rayon::prelude::*;
use std::io::{Read, Write};
use std::str::FromStr;
use thiserror::Error;

const DUMP_MAGIC: &[u8; 4] = b"VRCG";
const DUMP_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VrcError {
    #[error("grid resolution must be at least 1 per axis, got {0:?}")]
    Resolution([usize; 3]),
    #[error("face quantization must be at least 1, got {0}")]
    Quantization(u32),
    #[error("tube radius must be positive, got {0}")]
    Radius(f64),
    #[error("line set bounds are empty or degenerate")]
    DegenerateBounds,
    #[error("unknown neighborhood '{0}' (expected face6 or box27)")]
    Neighborhood(String),
    #[error("bad grid dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a piece endpoint sits after quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantizedEndpoint {
    /// A true polyline end, stored unquantized.
    Interior(Vec3),
    /// Cell `(u, v)` of face `face` of the owning voxel. Faces are numbered `2·axis + side`
    /// (side 1 is the positive face); `u` runs along axis `(axis+1)%3`, `v` along `(axis+2)%3`.
    Face { face: u8, u: u32, v: u32 },
}

/// One straight piece of a polyline inside one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelPiece {
    pub polyline: u32,
    /// Ordinal of the piece along its polyline.
    pub index: u32,
    pub ends: [QuantizedEndpoint; 2],
    /// Dequantized endpoints.
    pub a: Vec3,
    pub b: Vec3,
    /// Unquantized clip points, kept for the displacement audit.
    pub original: [Vec3; 2],
    pub attr_a: f64,
    pub attr_b: f64,
}

/// Which voxels besides the current one contribute candidate pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighborhood {
    /// The six face-adjacent voxels.
    #[default]
    Face6,
    /// The full 3x3x3 block; exact while the radius is at most one cell.
    Box27,
}

impl FromStr for Neighborhood {
    type Err = VrcError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "face6" => Ok(Neighborhood::Face6),
            "box27" => Ok(Neighborhood::Box27),
            other => Err(VrcError::Neighborhood(other.to_string())),
        }
    }
}

impl Neighborhood {
    fn offsets(self) -> &'static [[i64; 3]] {
        const FACE6: [[i64; 3]; 7] = [
            [0, 0, 0],
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ];
        const BOX27: [[i64; 3]; 27] = {
            let mut out = [[0; 3]; 27];
            let mut i = 0;
            while i < 27 {
                out[i] = [(i % 3) as i64 - 1, ((i / 3) % 3) as i64 - 1, (i / 9) as i64 - 1];
                i += 1;
            }
            out
        };
        match self {
            Neighborhood::Face6 => &FACE6,
            Neighborhood::Box27 => &BOX27,
        }
    }
}

/// Regular grid of per-voxel line pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    res: [usize; 3],
    q: u32,
    radius: f64,
    bounds: Aabb,
    cell: Vec3,
    offsets: Vec<usize>,
    pieces: Vec<VoxelPiece>,
    /// True when the voxel or one of its neighbors holds a piece.
    occupied: Vec<bool>,
    neighborhood: Neighborhood,
}

/// One DDA step: a voxel and the ray interval inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelStep {
    pub cell: [usize; 3],
    pub t_entry: f64,
    pub t_exit: f64,
}

/// Largest endpoint displacement found by [`VoxelGrid::displacement_audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementReport {
    pub endpoints: usize,
    pub max_displacement: f64,
    /// Largest displacement divided by its bound `face_extent·√2/(2Q)`.
    pub max_ratio: f64,
    pub violations: usize,
}

fn axis(v: Vec3, k: usize) -> f64 {
    v[k]
}

fn with_axis(mut v: Vec3, k: usize, value: f64) -> Vec3 {
    match k {
        0 => v.x = value,
        1 => v.y = value,
        _ => v.z = value,
    }
    v
}

impl VoxelGrid {
    /// Voxelizes `lines` over their bounds grown by the tube radius.
    pub fn build(
        lines: &LineSet,
        res: [usize; 3],
        q: u32,
        radius: f64,
        neighborhood: Neighborhood,
    ) -> Result<Self, VrcError> {
        if res.contains(&0) {
            return Err(VrcError::Resolution(res));
        }
        if q == 0 {
            return Err(VrcError::Quantization(q));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(VrcError::Radius(radius));
        }
        let bounds = lines.bounds().expand(radius);
        let extent = bounds.extent();
        if bounds.is_empty() || !(0..3).all(|k| extent[k] > 0.0 && extent[k].is_finite()) {
            return Err(VrcError::DegenerateBounds);
        }
        let cell = Vec3::new(
            extent.x / res[0] as f64,
            extent.y / res[1] as f64,
            extent.z / res[2] as f64,
        );
        let mut grid = VoxelGrid {
            res,
            q,
            radius,
            bounds,
            cell,
            offsets: Vec::new(),
            pieces: Vec::new(),
            occupied: Vec::new(),
            neighborhood,
        };
        let mut placed: Vec<(usize, VoxelPiece)> = (0..lines.polylines.len())
            .into_par_iter()
            .flat_map_iter(|p| grid.clip_polyline(lines, p))
            .collect();
        placed.sort_by_key(|(voxel, piece)| (*voxel, piece.polyline, piece.index));
        let n = grid.voxel_count();
        let mut offsets = vec![0usize; n + 1];
        for (voxel, _) in &placed {
            offsets[voxel + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        grid.offsets = offsets;
        grid.pieces = placed.into_iter().map(|(_, p)| p).collect();
        grid.occupied = (0..n)
            .map(|i| {
                let c = grid.unflatten(i);
                grid.neighbors(c).any(|j| grid.offsets[j + 1] > grid.offsets[j])
            })
            .collect();
        Ok(grid)
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.res
    }

    pub fn quantization(&self) -> u32 {
        self.q
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn cell_size(&self) -> Vec3 {
        self.cell
    }

    pub fn neighborhood(&self) -> Neighborhood {
        self.neighborhood
    }

    pub fn voxel_count(&self) -> usize {
        self.res[0] * self.res[1] * self.res[2]
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn flatten(&self, c: [usize; 3]) -> usize {
        (c[2] * self.res[1] + c[1]) * self.res[0] + c[0]
    }

    fn unflatten(&self, i: usize) -> [usize; 3] {
        [
            i % self.res[0],
            (i / self.res[0]) % self.res[1],
            i / (self.res[0] * self.res[1]),
        ]
    }

    pub fn voxel_pieces(&self, c: [usize; 3]) -> &[VoxelPiece] {
        let i = self.flatten(c);
        &self.pieces[self.offsets[i]..self.offsets[i + 1]]
    }

    /// All pieces with the voxel that owns them.
    pub fn pieces(&self) -> impl Iterator<Item = ([usize; 3], &VoxelPiece)> + '_ {
        (0..self.voxel_count()).flat_map(move |i| {
            let c = self.unflatten(i);
            self.pieces[self.offsets[i]..self.offsets[i + 1]]
                .iter()
                .map(move |p| (c, p))
        })
    }

    fn neighbors(&self, c: [usize; 3]) -> impl Iterator<Item = usize> + '_ {
        self.neighborhood.offsets().iter().filter_map(move |o| {
            let mut n = [0usize; 3];
            for k in 0..3 {
                let v = c[k] as i64 + o[k];
                if v < 0 || v >= self.res[k] as i64 {
                    return None;
                }
                n[k] = v as usize;
            }
            Some(self.flatten(n))
        })
    }

    fn boundary(&self, k: usize, index: usize) -> f64 {
        axis(self.bounds.min, k) + index as f64 * axis(self.cell, k)
    }

    fn cell_of(&self, p: Vec3) -> [usize; 3] {
        let mut c = [0; 3];
        for k in 0..3 {
            let f = ((axis(p, k) - axis(self.bounds.min, k)) / axis(self.cell, k)).floor();
            c[k] = (f.max(0.0) as usize).min(self.res[k] - 1);
        }
        c
    }

    fn quantize(&self, c: [usize; 3], face: u8, p: Vec3) -> QuantizedEndpoint {
        let k = (face / 2) as usize;
        let cellq = |a: usize| {
            let frac = (axis(p, a) - self.boundary(a, c[a])) / axis(self.cell, a);
            ((frac * self.q as f64).floor().max(0.0) as u32).min(self.q - 1)
        };
        QuantizedEndpoint::Face {
            face,
            u: cellq((k + 1) % 3),
            v: cellq((k + 2) % 3),
        }
    }

    /// World position of an endpoint stored in voxel `c`.
    pub fn dequantize(&self, c: [usize; 3], e: QuantizedEndpoint) -> Vec3 {
        match e {
            QuantizedEndpoint::Interior(p) => p,
            QuantizedEndpoint::Face { face, u, v } => {
                let k = (face / 2) as usize;
                let side = (face % 2) as usize;
                let center = |a: usize, i: u32| {
                    axis(self.bounds.min, a) + (c[a] as f64 + (i as f64 + 0.5) / self.q as f64) * axis(self.cell, a)
                };
                let mut p = Vec3::ZERO;
                p = with_axis(p, k, self.boundary(k, c[k] + side));
                p = with_axis(p, (k + 1) % 3, center((k + 1) % 3, u));
                with_axis(p, (k + 2) % 3, center((k + 2) % 3, v))
            }
        }
    }

    /// Splits one polyline into per-voxel pieces.
    fn clip_polyline(&self, lines: &LineSet, polyline: usize) -> Vec<(usize, VoxelPiece)> {
        let verts: Vec<_> = lines.polylines[polyline].iter().map(|&i| lines.vertices[i]).collect();
        let mut out = Vec::new();
        let mut cur = self.cell_of(verts[0].position);
        let mut start = (
            QuantizedEndpoint::Interior(verts[0].position),
            verts[0].position,
            verts[0].attribute,
        );
        let mut emit = |cell: [usize; 3], from: (QuantizedEndpoint, Vec3, f64), to: (QuantizedEndpoint, Vec3, f64)| {
            let index = out.len() as u32;
            out.push((
                self.flatten(cell),
                VoxelPiece {
                    polyline: polyline as u32,
                    index,
                    ends: [from.0, to.0],
                    a: self.dequantize(cell, from.0),
                    b: self.dequantize(cell, to.0),
                    original: [from.1, to.1],
                    attr_a: from.2,
                    attr_b: to.2,
                },
            ));
        };
        for w in verts.windows(2) {
            let (p0, p1) = (w[0].position, w[1].position);
            let d = p1 - p0;
            loop {
                // earliest boundary crossing of the current voxel along this segment
                let mut best: Option<(f64, usize, bool)> = None;
                for k in 0..3 {
                    let dk = axis(d, k);
                    if dk == 0.0 {
                        continue;
                    }
                    let positive = dk > 0.0;
                    if (positive && cur[k] + 1 >= self.res[k]) || (!positive && cur[k] == 0) {
                        continue;
                    }
                    let plane = self.boundary(k, cur[k] + positive as usize);
                    let s = ((plane - axis(p0, k)) / dk).max(0.0);
                    if s < 1.0 && best.is_none_or(|(bs, _, _)| s < bs) {
                        best = Some((s, k, positive));
                    }
                }
                let Some((s, k, positive)) = best else {
                    break;
                };
                let plane = self.boundary(k, cur[k] + positive as usize);
                let p = with_axis(p0 + d * s, k, plane);
                let attr = w[0].attribute + (w[1].attribute - w[0].attribute) * s;
                let exit = self.quantize(cur, (2 * k + positive as usize) as u8, p);
                emit(cur, start, (exit, p, attr));
                if positive {
                    cur[k] += 1;
                } else {
                    cur[k] -= 1;
                }
                let entry = self.quantize(cur, (2 * k + (!positive) as usize) as u8, p);
                start = (entry, p, attr);
            }
        }
        let last = verts[verts.len() - 1];
        emit(
            cur,
            start,
            (
                QuantizedEndpoint::Interior(last.position),
                last.position,
                last.attribute,
            ),
        );
        out
    }

    /// Compares every quantized endpoint with its unquantized clip point.
    pub fn displacement_audit(&self) -> DisplacementReport {
        let mut report = DisplacementReport {
            endpoints: 0,
            max_displacement: 0.0,
            max_ratio: 0.0,
            violations: 0,
        };
        for (c, piece) in self.pieces() {
            for (e, orig) in piece.ends.iter().zip(piece.original) {
                let QuantizedEndpoint::Face { face, .. } = *e else {
                    continue;
                };
                let k = (face / 2) as usize;
                let face_extent = axis(self.cell, (k + 1) % 3).max(axis(self.cell, (k + 2) % 3));
                let bound = face_extent * std::f64::consts::SQRT_2 / (2.0 * self.q as f64);
                let disp = (self.dequantize(c, *e) - orig).length();
                report.endpoints += 1;
                report.max_displacement = report.max_displacement.max(disp);
                report.max_ratio = report.max_ratio.max(disp / bound);
                // rounding slack only
                if disp > bound * (1.0 + 1e-9) {
                    report.violations += 1;
                }
            }
        }
        report
    }

    /// Voxels pierced by the ray within `[t_min, t_max]`, front to back.
    pub fn dda(&self, ray: &Ray, t_min: f64, t_max: f64) -> Dda<'_> {
        let mut dda = Dda {
            grid: self,
            ray: *ray,
            cell: [0; 3],
            t: 0.0,
            t_end: 0.0,
            t_next: [f64::INFINITY; 3],
            done: true,
        };
        if let Some((t0, t1)) = self.bounds.intersect(ray, t_min, t_max) {
            dda.cell = self.cell_of(ray.at(t0));
            dda.t = t0;
            dda.t_end = t1;
            dda.done = false;
            for k in 0..3 {
                dda.t_next[k] = dda.next_crossing(k);
            }
        }
        dda
    }

    /// Versioned little-endian dump of the grid.
    pub fn write_dump(&self, w: &mut impl Write) -> Result<(), VrcError> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        for r in self.res {
            w.write_all(&(r as u64).to_le_bytes())?;
        }
        w.write_all(&self.q.to_le_bytes())?;
        w.write_all(&[matches!(self.neighborhood, Neighborhood::Box27) as u8])?;
        let f = |v: f64, w: &mut dyn Write| w.write_all(&v.to_le_bytes());
        f(self.radius, w)?;
        for v in [self.bounds.min, self.bounds.max] {
            for k in 0..3 {
                f(axis(v, k), w)?;
            }
        }
        w.write_all(&(self.pieces.len() as u64).to_le_bytes())?;
        for (c, p) in self.pieces() {
            w.write_all(&(self.flatten(c) as u64).to_le_bytes())?;
            w.write_all(&p.polyline.to_le_bytes())?;
            w.write_all(&p.index.to_le_bytes())?;
            for e in p.ends {
                match e {
                    QuantizedEndpoint::Interior(v) => {
                        w.write_all(&[255])?;
                        for k in 0..3 {
                            f(axis(v, k), w)?;
                        }
                    }
                    QuantizedEndpoint::Face { face, u, v } => {
                        w.write_all(&[face])?;
                        w.write_all(&u.to_le_bytes())?;
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
            }
            for v in p.original {
                for k in 0..3 {
                    f(axis(v, k), w)?;
                }
            }
            f(p.attr_a, w)?;
            f(p.attr_b, w)?;
        }
        Ok(())
    }

    pub fn read_dump(r: &mut impl Read) -> Result<Self, VrcError> {
        fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N], VrcError> {
            let mut b = [0u8; N];
            r.read_exact(&mut b)?;
            Ok(b)
        }
        let f64_ = |r: &mut dyn Read| -> Result<f64, VrcError> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let vec = |r: &mut dyn Read| -> Result<Vec3, VrcError> { Ok(Vec3::new(f64_(r)?, f64_(r)?, f64_(r)?)) };
        if &take::<4>(r)? != DUMP_MAGIC {
            return Err(VrcError::Dump("missing magic".into()));
        }
        let version = u32::from_le_bytes(take(r)?);
        if version != DUMP_VERSION {
            return Err(VrcError::Dump(format!("unsupported version {version}")));
        }
        let mut res = [0usize; 3];
        for v in &mut res {
            *v = u64::from_le_bytes(take(r)?) as usize;
        }
        let q = u32::from_le_bytes(take(r)?);
        let neighborhood = if take::<1>(r)?[0] == 1 {
            Neighborhood::Box27
        } else {
            Neighborhood::Face6
        };
        let radius = f64_(r)?;
        let bounds = Aabb::new(vec(r)?, vec(r)?);
        if res.contains(&0) || q == 0 || res.iter().product::<usize>() > 1 << 30 {
            return Err(VrcError::Dump("bad header".into()));
        }
        let extent = bounds.extent();
        let mut grid = VoxelGrid {
            res,
            q,
            radius,
            bounds,
            cell: Vec3::new(
                extent.x / res[0] as f64,
                extent.y / res[1] as f64,
                extent.z / res[2] as f64,
            ),
            offsets: vec![0; res[0] * res[1] * res[2] + 1],
            pieces: Vec::new(),
            occupied: Vec::new(),
            neighborhood,
        };
        let count = u64::from_le_bytes(take(r)?) as usize;
        let mut last_voxel = 0;
        for _ in 0..count {
            let voxel = u64::from_le_bytes(take(r)?) as usize;
            if voxel >= grid.voxel_count() || voxel < last_voxel {
                return Err(VrcError::Dump(format!("voxel index {voxel} out of order or range")));
            }
            last_voxel = voxel;
            let polyline = u32::from_le_bytes(take(r)?);
            let index = u32::from_le_bytes(take(r)?);
            let c = grid.unflatten(voxel);
            let mut ends = [QuantizedEndpoint::Interior(Vec3::ZERO); 2];
            for e in &mut ends {
                let tag = take::<1>(r)?[0];
                *e = if tag == 255 {
                    QuantizedEndpoint::Interior(vec(r)?)
                } else if tag < 6 {
                    let u = u32::from_le_bytes(take(r)?);
                    let v = u32::from_le_bytes(take(r)?);
                    if u >= q || v >= q {
                        return Err(VrcError::Dump("face cell out of range".into()));
                    }
                    QuantizedEndpoint::Face { face: tag, u, v }
                } else {
                    return Err(VrcError::Dump(format!("bad endpoint tag {tag}")));
                };
            }
            let original = [vec(r)?, vec(r)?];
            let (attr_a, attr_b) = (f64_(r)?, f64_(r)?);
            grid.offsets[voxel + 1] += 1;
            grid.pieces.push(VoxelPiece {
                polyline,
                index,
                ends,
                a: grid.dequantize(c, ends[0]),
                b: grid.dequantize(c, ends[1]),
                original,
                attr_a,
                attr_b,
            });
        }
        for i in 0..grid.voxel_count() {
            grid.offsets[i + 1] += grid.offsets[i];
        }
        grid.occupied = (0..grid.voxel_count())
            .map(|i| {
                let c = grid.unflatten(i);
                grid.neighbors(c).any(|j| grid.offsets[j + 1] > grid.offsets[j])
            })
            .collect();
        Ok(grid)
    }
}

/// Amanatides-Woo traversal; each step's entry parameter equals the previous exit.
#[derive(Debug, Clone)]
pub struct Dda<'a> {
    grid: &'a VoxelGrid,
    ray: Ray,
    cell: [usize; 3],
    t: f64,
    t_end: f64,
    t_next: [f64; 3],
    done: bool,
}

impl Dda<'_> {
    fn next_crossing(&self, k: usize) -> f64 {
        let d = axis(self.ray.dir, k);
        if d == 0.0 {
            return f64::INFINITY;
        }
        let side = (d > 0.0) as usize;
        (self.grid.boundary(k, self.cell[k] + side) - axis(self.ray.origin, k)) / d
    }
}

impl Iterator for Dda<'_> {
    type Item = VoxelStep;

    fn next(&mut self) -> Option<VoxelStep> {
        while !self.done {
            let mut k = 0;
            for a in 1..3 {
                if self.t_next[a] < self.t_next[k] {
                    k = a;
                }
            }
            let t_exit = self.t_next[k].min(self.t_end).max(self.t);
            let step = VoxelStep {
                cell: self.cell,
                t_entry: self.t,
                t_exit,
            };
            if t_exit >= self.t_end {
                self.done = true;
            } else {
                let positive = axis(self.ray.dir, k) > 0.0;
                if (positive && self.cell[k] + 1 >= self.grid.res[k]) || (!positive && self.cell[k] == 0) {
                    self.done = true;
                } else {
                    if positive {
                        self.cell[k] += 1;
                    } else {
                        self.cell[k] -= 1;
                    }
                    self.t_next[k] = self.next_crossing(k);
                }
            }
            self.t = t_exit;
            // rounding can produce empty intervals right at a corner; they own nothing
            if step.t_exit > step.t_entry {
                return Some(step);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VrcParams {
    pub min_transmittance: f64,
    pub shading: Shading,
    /// Skip voxels whose neighborhood holds no piece.
    pub skip_empty: bool,
}

impl Default for VrcParams {
    fn default() -> Self {
        Self {
            min_transmittance: 1e-3,
            shading: Shading::default(),
            skip_empty: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VrcStats {
    pub voxels_visited: u64,
    pub tube_tests: u64,
    pub blended_hits: u64,
}

#[derive(Debug, Clone, Copy)]
struct VoxelHit {
    t: f64,
    piece: usize,
    attribute: f64,
    normal: Vec3,
}

/// Casts one ray through the grid and blends its hits front to back.
pub fn vrc_trace(
    grid: &VoxelGrid,
    ray: &Ray,
    t_range: (f64, f64),
    tf: &TransferFunction,
    background: [f64; 3],
    params: &VrcParams,
    stats: &mut VrcStats,
) -> Rgba {
    let mut c = [0.0; 3];
    let mut trans = 1.0;
    let view = -ray.dir;
    let mut hits: Vec<VoxelHit> = Vec::new();
    'walk: for step in grid.dda(ray, t_range.0, t_range.1) {
        let voxel = grid.flatten(step.cell);
        stats.voxels_visited += 1;
        if params.skip_empty && !grid.occupied[voxel] {
            continue;
        }
        hits.clear();
        for n in grid.neighbors(step.cell) {
            for piece in grid.offsets[n]..grid.offsets[n + 1] {
                let p = &grid.pieces[piece];
                stats.tube_tests += 1;
                for h in intersect_ray_tube(ray, p.a, p.b, grid.radius).into_iter().flatten() {
                    // the voxel whose interval contains the hit owns it
                    if h.t >= step.t_entry && h.t < step.t_exit {
                        hits.push(VoxelHit {
                            t: h.t,
                            piece,
                            attribute: p.attr_a + (p.attr_b - p.attr_a) * h.s,
                            normal: h.normal,
                        });
                    }
                }
            }
        }
        hits.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.piece.cmp(&b.piece)));
        for h in &hits {
            let rgba = shade_fragment(apply_transfer(tf, h.attribute), h.normal, view, &params.shading);
            let w = trans * rgba[3];
            for k in 0..3 {
                c[k] += w * rgba[k];
            }
            trans *= 1.0 - rgba[3];
            stats.blended_hits += 1;
            if trans < params.min_transmittance {
                break 'walk;
            }
        }
    }
    [
        (c[0] + trans * background[0]).clamp(0.0, 1.0),
        (c[1] + trans * background[1]).clamp(0.0, 1.0),
        (c[2] + trans * background[2]).clamp(0.0, 1.0),
        1.0 - trans,
    ]
}

/// One primary ray per pixel center.
pub fn vrc_render(
    grid: &VoxelGrid,
    camera: &Camera,
    tf: &TransferFunction,
    background: [f64; 3],
    params: &VrcParams,
) -> (Framebuffer, VrcStats) {
    let view = camera.view_transform();
    let results: Vec<(Rgba, VrcStats)> = (0..camera.pixel_count())
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % camera.width, i / camera.width);
            let ray = view.screen_ray(x as f64 + 0.5, y as f64 + 0.5);
            let range = view_range(camera, view.forward, &ray);
            let mut stats = VrcStats::default();
            let rgba = vrc_trace(grid, &ray, range, tf, background, params, &mut stats);
            (rgba, stats)
        })
        .collect();
    let mut stats = VrcStats::default();
    let mut pixels = Vec::with_capacity(results.len());
    for (rgba, s) in results {
        stats.voxels_visited += s.voxels_visited;
        stats.tube_tests += s.tube_tests;
        stats.blended_hits += s.blended_hits;
        pixels.push(rgba);
    }
    (
        Framebuffer {
            width: camera.width,
            height: camera.height,
            background,
            pixels,
        },
        stats,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{synth_lineset, LineVertex, SynthKind};
    use crate::raytracer::{raytrace_image, RtParams, TubeScene};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rod(from: Vec3, to: Vec3) -> LineSet {
        LineSet::new(
            vec![
                LineVertex {
                    position: from,
                    attribute: 0.0,
                },
                LineVertex {
                    position: to,
                    attribute: 1.0,
                },
            ],
            vec![vec![0, 1]],
        )
        .unwrap()
    }

    fn camera(w: usize, h: usize) -> Camera {
        Camera::new(Vec3::new(0.4, -3.2, 0.9), Vec3::ZERO, Vec3::Z, 0.8, 0.1, 20.0, w, h).unwrap()
    }

    #[test]
    fn axis_line_gives_one_piece_per_voxel() {
        let set = rod(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        let grid = VoxelGrid::build(&set, [4, 1, 1], 3, 0.1, Neighborhood::Face6).unwrap();
        assert_eq!(grid.piece_count(), 4);
        for x in 0..4 {
            let p = grid.voxel_pieces([x, 0, 0]);
            assert_eq!(p.len(), 1);
            assert_eq!(p[0].index as usize, x);
        }
        // odd Q puts the middle face cell on the line, so nothing moves
        assert_eq!(grid.displacement_audit().max_displacement, 0.0);
    }

    #[test]
    fn single_cell_snaps_to_face_center() {
        let set = rod(Vec3::new(-1.0, 0.03, -0.02), Vec3::new(1.0, 0.01, 0.04));
        let grid = VoxelGrid::build(&set, [4, 1, 1], 1, 0.1, Neighborhood::Face6).unwrap();
        let center = grid.bounds().center();
        for (_, p) in grid.pieces() {
            for (e, v) in p.ends.iter().zip([p.a, p.b]) {
                if let QuantizedEndpoint::Face { face, u, v: cv } = *e {
                    assert_eq!((face / 2, u, cv), (0, 0, 0));
                    assert!((v.y - center.y).abs() < 1e-15 && (v.z - center.z).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn chains_stay_connected_and_bounded() {
        let set = synth_lineset(SynthKind::HelixBundle, 11, 30, 40).unwrap();
        for (res, q) in [(8, 1), (16, 4), (32, 7)] {
            let grid = VoxelGrid::build(&set, [res; 3], q, 0.02, Neighborhood::Face6).unwrap();
            let report = grid.displacement_audit();
            assert_eq!(report.violations, 0, "{report:?}");
            assert!(report.max_ratio <= 1.0 + 1e-9);
            let mut by_line: Vec<Vec<(u32, [usize; 3], &VoxelPiece)>> = vec![Vec::new(); 30];
            for (c, p) in grid.pieces() {
                by_line[p.polyline as usize].push((p.index, c, p));
            }
            for (l, chain) in by_line.iter_mut().enumerate() {
                chain.sort_by_key(|e| e.0);
                assert_eq!(chain[0].2.a, set.vertices[set.polylines[l][0]].position);
                for w in chain.windows(2) {
                    assert_eq!(w[0].2.b, w[1].2.a, "gap in polyline {l}");
                    let step: usize = (0..3).map(|k| w[0].1[k].abs_diff(w[1].1[k])).sum();
                    assert_eq!(step, 1, "voxels must be face neighbors");
                }
                for (_, c, p) in chain.iter() {
                    let lo = Vec3::new(grid.boundary(0, c[0]), grid.boundary(1, c[1]), grid.boundary(2, c[2]));
                    let hi = Vec3::new(
                        grid.boundary(0, c[0] + 1),
                        grid.boundary(1, c[1] + 1),
                        grid.boundary(2, c[2] + 1),
                    );
                    for v in [p.a, p.b] {
                        for k in 0..3 {
                            assert!(axis(v, k) >= axis(lo, k) - 1e-12 && axis(v, k) <= axis(hi, k) + 1e-12);
                        }
                    }
                    assert!((0.0..=1.0).contains(&p.attr_a) && (0.0..=1.0).contains(&p.attr_b));
                }
            }
        }
    }

    #[test]
    fn per_axis_displacement_bound() {
        let set = synth_lineset(SynthKind::VortexStreamlines, 2, 20, 30).unwrap();
        let q = 5;
        let grid = VoxelGrid::build(&set, [12; 3], q, 0.02, Neighborhood::Face6).unwrap();
        let cell = grid.cell_size();
        for (c, p) in grid.pieces() {
            for (e, orig) in p.ends.iter().zip(p.original) {
                let d = (grid.dequantize(c, *e) - orig).abs();
                for k in 0..3 {
                    assert!(axis(d, k) <= axis(cell, k) / (2.0 * q as f64) * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn dda_axis_ray_and_miss() {
        let set = rod(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        let grid = VoxelGrid::build(&set, [4, 1, 1], 1, 0.1, Neighborhood::Face6).unwrap();
        let ray = Ray::new(Vec3::new(-5.0, 0.01, 0.02), Vec3::X);
        let steps: Vec<_> = grid.dda(&ray, 0.0, f64::INFINITY).collect();
        let cells: Vec<_> = steps.iter().map(|s| s.cell).collect();
        assert_eq!(cells, vec![[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
        let miss = Ray::new(Vec3::new(-5.0, 1.0, 0.0), Vec3::X);
        assert_eq!(grid.dda(&miss, 0.0, f64::INFINITY).count(), 0);
    }

    #[test]
    fn dda_steps_are_contiguous_face_moves() {
        let set = synth_lineset(SynthKind::HelixBundle, 3, 10, 20).unwrap();
        let grid = VoxelGrid::build(&set, [7, 9, 5], 2, 0.05, Neighborhood::Face6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let o = Vec3::new(
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
            );
            let target = Vec3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            let ray = Ray::new(o, target - o);
            let steps: Vec<_> = grid.dda(&ray, 0.0, f64::INFINITY).collect();
            assert!(!steps.is_empty());
            for w in steps.windows(2) {
                assert_eq!(w[0].t_exit, w[1].t_entry);
                let moved: usize = (0..3).map(|k| w[0].cell[k].abs_diff(w[1].cell[k])).sum();
                assert_eq!(moved, 1);
            }
            // every step's midpoint lies in its voxel
            for s in &steps {
                let mid = ray.at(0.5 * (s.t_entry + s.t_exit));
                let c = grid.cell_of(mid);
                assert!((0..3).all(|k| c[k].abs_diff(s.cell[k]) <= 1));
            }
        }
    }

    #[test]
    fn empty_scene_grid_is_background() {
        // a tube far outside the view leaves the picture untouched
        let set = rod(Vec3::new(50.0, 50.0, 50.0), Vec3::new(51.0, 50.0, 50.0));
        let grid = VoxelGrid::build(&set, [4; 3], 2, 0.1, Neighborhood::Face6).unwrap();
        let tf = TransferFunction::constant([0.5, 0.5, 0.5, 0.5]).unwrap();
        let (fb, stats) = vrc_render(&grid, &camera(16, 12), &tf, [0.2, 0.4, 0.6], &VrcParams::default());
        assert!(fb.pixels.iter().all(|p| *p == [0.2, 0.4, 0.6, 0.0]));
        assert_eq!(stats.blended_hits, 0);
    }

    #[test]
    fn straight_tube_matches_analytic_oracle() {
        let set = rod(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        let tf = TransferFunction::from_pairs(&[(0.0, [0.1, 0.2, 0.9, 1.0]), (1.0, [0.9, 0.2, 0.1, 1.0])]).unwrap();
        let grid = VoxelGrid::build(&set, [5, 1, 1], 3, 0.15, Neighborhood::Face6).unwrap();
        let tube = TubeScene::new(&set, 0.15, 4).unwrap();
        let cam = camera(48, 32);
        let (a, stats) = vrc_render(&grid, &cam, &tf, [1.0; 3], &VrcParams::default());
        let (b, _) = raytrace_image(&tube, &cam, &tf, [1.0; 3], &RtParams::default()).unwrap();
        let covered = a.pixels.iter().filter(|p| p[3] > 0.0).count();
        assert!(covered > 50);
        // opaque: one blended hit per covered pixel
        assert_eq!(stats.blended_hits as usize, covered);
        for (p, q) in a.pixels.iter().zip(&b.pixels) {
            for k in 0..4 {
                assert!((p[k] - q[k]).abs() < 1e-9, "{p:?} {q:?}");
            }
        }
    }

    #[test]
    fn skipping_empty_voxels_changes_nothing() {
        let set = synth_lineset(SynthKind::HelixBundle, 4, 25, 30).unwrap();
        let tf = TransferFunction::constant([0.7, 0.3, 0.2, 0.35]).unwrap();
        let cam = camera(40, 30);
        for nb in [Neighborhood::Face6, Neighborhood::Box27] {
            let grid = VoxelGrid::build(&set, [16; 3], 4, 0.03, nb).unwrap();
            let on = VrcParams::default();
            let off = VrcParams {
                skip_empty: false,
                ..on
            };
            let (a, sa) = vrc_render(&grid, &cam, &tf, [1.0; 3], &on);
            let (b, sb) = vrc_render(&grid, &cam, &tf, [1.0; 3], &off);
            assert_eq!(a, b);
            assert_eq!(sa.blended_hits, sb.blended_hits);
        }
    }

    #[test]
    fn blended_hits_are_in_visibility_order() {
        let set = synth_lineset(SynthKind::HelixBundle, 6, 25, 30).unwrap();
        let grid = VoxelGrid::build(&set, [12; 3], 4, 0.04, Neighborhood::Box27).unwrap();
        let cam = camera(24, 18);
        let view = cam.view_transform();
        for y in 0..18 {
            for x in 0..24 {
                let ray = view.screen_ray(x as f64 + 0.5, y as f64 + 0.5);
                let mut last = f64::NEG_INFINITY;
                for step in grid.dda(&ray, 0.0, f64::INFINITY) {
                    let mut ts: Vec<f64> = grid
                        .neighbors(step.cell)
                        .flat_map(|n| &grid.pieces[grid.offsets[n]..grid.offsets[n + 1]])
                        .flat_map(|p| intersect_ray_tube(&ray, p.a, p.b, grid.radius()))
                        .flatten()
                        .map(|h| h.t)
                        .filter(|t| *t >= step.t_entry && *t < step.t_exit)
                        .collect();
                    ts.sort_by(f64::total_cmp);
                    if let Some(&first) = ts.first() {
                        assert!(first >= last);
                        last = *ts.last().unwrap();
                    }
                }
            }
        }
    }

    #[test]
    fn box27_sees_every_analytic_hit_of_the_pieces() {
        // with radius below one cell, the 27-neighborhood finds every hit on the stored pieces
        let set = synth_lineset(SynthKind::HelixBundle, 8, 15, 30).unwrap();
        let grid = VoxelGrid::build(&set, [10; 3], 4, 0.05, Neighborhood::Box27).unwrap();
        let all: Vec<VoxelPiece> = grid.pieces().map(|(_, p)| *p).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let o = Vec3::new(rng.gen_range(-3.0..3.0), -4.0, rng.gen_range(-3.0..3.0));
            let target = Vec3::new(rng.gen_range(-0.6..0.6), 0.0, rng.gen_range(-0.9..0.9));
            let ray = Ray::new(o, target - o);
            let brute = all
                .iter()
                .flat_map(|p| intersect_ray_tube(&ray, p.a, p.b, grid.radius()))
                .flatten()
                .count();
            let mut stats = VrcStats::default();
            let tf = TransferFunction::constant([0.5, 0.5, 0.5, 0.0]).unwrap();
            let params = VrcParams {
                min_transmittance: 0.0,
                ..VrcParams::default()
            };
            vrc_trace(&grid, &ray, (0.0, f64::INFINITY), &tf, [0.0; 3], &params, &mut stats);
            assert_eq!(stats.blended_hits as usize, brute);
        }
    }

    #[test]
    fn dump_round_trips() {
        let set = synth_lineset(SynthKind::VortexStreamlines, 5, 8, 20).unwrap();
        let grid = VoxelGrid::build(&set, [6, 7, 8], 3, 0.03, Neighborhood::Box27).unwrap();
        let mut bytes = Vec::new();
        grid.write_dump(&mut bytes).unwrap();
        let back = VoxelGrid::read_dump(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, grid);
        bytes[4] = 9;
        assert!(VoxelGrid::read_dump(&mut bytes.as_slice()).is_err());
        assert!(VoxelGrid::read_dump(&mut &b"nope"[..]).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        let set = rod(Vec3::ZERO, Vec3::X);
        assert!(VoxelGrid::build(&set, [0, 1, 1], 1, 0.1, Neighborhood::Face6).is_err());
        assert!(VoxelGrid::build(&set, [1, 1, 1], 0, 0.1, Neighborhood::Face6).is_err());
        assert!(VoxelGrid::build(&set, [1, 1, 1], 1, 0.0, Neighborhood::Face6).is_err());
        assert!("face6".parse::<Neighborhood>().is_ok());
        assert!("ring".parse::<Neighborhood>().is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let set = synth_lineset(SynthKind::HelixBundle, 12, 40, 30).unwrap();
        let a = VoxelGrid::build(&set, [20; 3], 8, 0.02, Neighborhood::Face6).unwrap();
        let b = VoxelGrid::build(&set, [20; 3], 8, 0.02, Neighborhood::Face6).unwrap();
        assert_eq!(a, b);
    }
}
