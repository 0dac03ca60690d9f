//! Deterministic synthetic line sets standing in for measured flow data.

use super::{GeometryError, LineSet, LineVertex};
use crate::math::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthKind {
    /// Helices wound around the z axis at random offsets.
    HelixBundle,
    /// Streamlines of a swirling updraft, traced with RK4.
    VortexStreamlines,
    /// Straight rods along x on a regular y/z grid.
    GridRods,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::HelixBundle => "helix-bundle",
            SynthKind::VortexStreamlines => "vortex-streamlines",
            SynthKind::GridRods => "grid-rods",
        }
    }
}

impl FromStr for SynthKind {
    type Err = GeometryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "helix-bundle" => Ok(SynthKind::HelixBundle),
            "vortex-streamlines" => Ok(SynthKind::VortexStreamlines),
            "grid-rods" => Ok(SynthKind::GridRods),
            other => Err(GeometryError::InvalidParameter(format!(
                "unknown synthetic scene kind '{other}'"
            ))),
        }
    }
}

pub fn synth_lineset(kind: SynthKind, seed: u64, n_lines: usize, n_verts: usize) -> Result<LineSet, GeometryError> {
    if n_lines < 1 || n_verts < 2 {
        return Err(GeometryError::InvalidParameter(format!(
            "need n_lines >= 1 and n_verts >= 2, got {n_lines} and {n_verts}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines: Vec<Vec<LineVertex>> = match kind {
        SynthKind::GridRods => grid_rods(&mut rng, n_lines, n_verts),
        SynthKind::HelixBundle => (0..n_lines).map(|_| helix(&mut rng, n_verts)).collect(),
        SynthKind::VortexStreamlines => vortex(&mut rng, n_lines, n_verts),
    };
    let mut vertices = Vec::with_capacity(n_lines * n_verts);
    let mut polylines = Vec::with_capacity(n_lines);
    for line in lines {
        let start = vertices.len();
        vertices.extend(line);
        polylines.push((start..vertices.len()).collect());
    }
    LineSet::new(vertices, polylines)
}

fn grid_rods(rng: &mut ChaCha8Rng, n_lines: usize, n_verts: usize) -> Vec<Vec<LineVertex>> {
    let side = (n_lines as f64).sqrt().ceil() as usize;
    let spacing = 1.6 / side as f64;
    (0..n_lines)
        .map(|i| {
            let (row, col) = (i / side, i % side);
            let y = (col as f64 - (side as f64 - 1.0) / 2.0) * spacing;
            let z = (row as f64 - (side as f64 - 1.0) / 2.0) * spacing;
            let attribute = rng.gen::<f64>();
            (0..n_verts)
                .map(|k| LineVertex {
                    position: Vec3::new(-1.0 + 2.0 * k as f64 / (n_verts - 1) as f64, y, z),
                    attribute,
                })
                .collect()
        })
        .collect()
}

fn helix(rng: &mut ChaCha8Rng, n_verts: usize) -> Vec<LineVertex> {
    let offset_r = 0.55 * rng.gen::<f64>().sqrt();
    let offset_phi = rng.gen::<f64>() * TAU;
    let (cx, cy) = (offset_r * offset_phi.cos(), offset_r * offset_phi.sin());
    let radius = rng.gen_range(0.08..0.3);
    let turns = rng.gen_range(1.0..3.0);
    let phase = rng.gen::<f64>() * TAU;
    let handed = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let base = rng.gen::<f64>();
    (0..n_verts)
        .map(|k| {
            let s = k as f64 / (n_verts - 1) as f64;
            let angle = handed * TAU * turns * s + phase;
            LineVertex {
                position: Vec3::new(cx + radius * angle.cos(), cy + radius * angle.sin(), -1.0 + 2.0 * s),
                attribute: (base + 0.15 * (TAU * s + phase).sin()).clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// Swirl around the z axis with a Burgers-like core, mild radial inflow and an updraft.
fn vortex_velocity(p: Vec3) -> Vec3 {
    let r2 = p.x * p.x + p.y * p.y;
    let swirl = if r2 > 1e-12 {
        (1.0 - (-r2 / 0.09).exp()) / r2
    } else {
        1.0 / 0.09
    };
    Vec3::new(-p.y * swirl - 0.25 * p.x, p.x * swirl - 0.25 * p.y, 0.45 + 0.2 * r2)
}

fn vortex(rng: &mut ChaCha8Rng, n_lines: usize, n_verts: usize) -> Vec<Vec<LineVertex>> {
    let step = 2.4 / (n_verts - 1) as f64;
    let dir = |p: Vec3| vortex_velocity(p).normalize();
    let traces: Vec<Vec<(Vec3, f64)>> = (0..n_lines)
        .map(|_| {
            let r = 0.1 + 0.85 * rng.gen::<f64>().sqrt();
            let phi = rng.gen::<f64>() * TAU;
            let mut p = Vec3::new(r * phi.cos(), r * phi.sin(), rng.gen_range(-1.0..-0.3));
            let mut out = Vec::with_capacity(n_verts);
            for _ in 0..n_verts {
                out.push((p, vortex_velocity(p).length()));
                let k1 = dir(p);
                let k2 = dir(p + k1 * (0.5 * step));
                let k3 = dir(p + k2 * (0.5 * step));
                let k4 = dir(p + k3 * step);
                p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0);
            }
            out
        })
        .collect();
    let (lo, hi) = traces
        .iter()
        .flatten()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(_, s)| (lo.min(s), hi.max(s)));
    let span = (hi - lo).max(1e-12);
    traces
        .into_iter()
        .map(|t| {
            t.into_iter()
                .map(|(position, speed)| LineVertex {
                    position,
                    attribute: ((speed - lo) / span).clamp(0.0, 1.0),
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::write_lineset;

    #[test]
    fn grid_rods_four_lines() {
        let set = synth_lineset(SynthKind::GridRods, 0, 4, 2).unwrap();
        assert_eq!(set.polylines.len(), 4);
        for line in &set.polylines {
            assert_eq!(line.len(), 2);
            let d = set.vertices[line[1]].position - set.vertices[line[0]].position;
            assert_eq!((d.y, d.z), (0.0, 0.0));
            assert!(d.x > 0.0);
        }
    }

    #[test]
    fn helix_counts() {
        let set = synth_lineset(SynthKind::HelixBundle, 1, 100, 64).unwrap();
        assert_eq!(set.polylines.len(), 100);
        assert_eq!(set.vertices.len(), 6400);
    }

    #[test]
    fn deterministic_bytes() {
        for kind in [
            SynthKind::GridRods,
            SynthKind::HelixBundle,
            SynthKind::VortexStreamlines,
        ] {
            let a = write_lineset(&synth_lineset(kind, 7, 20, 16).unwrap());
            let b = write_lineset(&synth_lineset(kind, 7, 20, 16).unwrap());
            assert_eq!(a, b);
            let c = write_lineset(&synth_lineset(kind, 8, 20, 16).unwrap());
            assert_ne!(a, c, "{kind:?}: seed must matter");
        }
    }

    #[test]
    fn attributes_in_unit_range() {
        for kind in [
            SynthKind::GridRods,
            SynthKind::HelixBundle,
            SynthKind::VortexStreamlines,
        ] {
            let set = synth_lineset(kind, 3, 50, 32).unwrap();
            assert!(set.vertices.iter().all(|v| (0.0..=1.0).contains(&v.attribute)));
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(synth_lineset(SynthKind::GridRods, 0, 0, 2).is_err());
        assert!(synth_lineset(SynthKind::GridRods, 0, 1, 1).is_err());
        assert!("spiral".parse::<SynthKind>().is_err());
        assert_eq!("grid-rods".parse::<SynthKind>().unwrap(), SynthKind::GridRods);
    }
}
