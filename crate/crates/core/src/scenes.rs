//! Fixed test scenes, transparency regimes and camera framing.

use crate::camera::{Camera, CameraError};
use crate::geometry::{
    generate_tube_mesh, synth_lineset, GeometryError, LineSet, LineVertex, SynthKind, TransferFunction, TriMesh,
};
use crate::math::{Aabb, Vec3};
use std::str::FromStr;

pub const WHITE: [f64; 3] = [1.0, 1.0, 1.0];

const BLUE: [f64; 3] = [0.15, 0.3, 0.85];
const GRAY: [f64; 3] = [0.6, 0.6, 0.6];
const RED: [f64; 3] = [0.85, 0.15, 0.1];

/// How opacity is assigned to the attribute range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Opaque,
    /// Transparent context with opaque features (attribute >= 0.8).
    Semi,
    /// Every line at opacity 0.1.
    ConstantLow,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Opaque, Regime::Semi, Regime::ConstantLow];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Opaque => "opaque",
            Regime::Semi => "semi",
            Regime::ConstantLow => "constant-low",
        }
    }

    /// Blue-gray-red color ramp with the regime's opacity curve.
    pub fn transfer_function(self) -> TransferFunction {
        let rgba = |c: [f64; 3], a: f64| [c[0], c[1], c[2], a];
        let mid = |a: [f64; 3], b: [f64; 3], t: f64| [0, 1, 2].map(|k| a[k] + (b[k] - a[k]) * t);
        let pairs = match self {
            Regime::Opaque => vec![(0.0, rgba(BLUE, 1.0)), (0.5, rgba(GRAY, 1.0)), (1.0, rgba(RED, 1.0))],
            Regime::ConstantLow => vec![(0.0, rgba(BLUE, 0.1)), (0.5, rgba(GRAY, 0.1)), (1.0, rgba(RED, 0.1))],
            Regime::Semi => vec![
                (0.0, rgba(BLUE, 0.08)),
                (0.5, rgba(GRAY, 0.2)),
                (0.79, rgba(mid(GRAY, RED, 0.58), 0.3)),
                (0.8, rgba(mid(GRAY, RED, 0.6), 1.0)),
                (1.0, rgba(RED, 1.0)),
            ],
        };
        TransferFunction::from_pairs(&pairs).expect("regime control points are valid")
    }
}

impl FromStr for Regime {
    type Err = GeometryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "opaque" => Ok(Regime::Opaque),
            "semi" => Ok(Regime::Semi),
            "constant-low" => Ok(Regime::ConstantLow),
            other => Err(GeometryError::InvalidParameter(format!("unknown regime '{other}'"))),
        }
    }
}

/// A line set and the radius of its tubes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub lines: LineSet,
    pub radius: f64,
}

impl Scene {
    pub fn synthetic(
        kind: SynthKind,
        seed: u64,
        n_lines: usize,
        n_verts: usize,
        radius: f64,
    ) -> Result<Self, GeometryError> {
        Ok(Self {
            name: kind.name().to_string(),
            lines: synth_lineset(kind, seed, n_lines, n_verts)?,
            radius,
        })
    }

    /// The fixed scenes used by the cross-checks: 16 rods, 200 helices, 500 streamlines.
    pub fn standard(kind: SynthKind) -> Self {
        let (lines, verts) = match kind {
            SynthKind::GridRods => (16, 16),
            SynthKind::HelixBundle => (200, 64),
            SynthKind::VortexStreamlines => (500, 64),
        };
        Self::synthetic(kind, 1, lines, verts, 0.012).expect("standard scene parameters are valid")
    }

    /// Layers of parallel rods facing the camera of [`Scene::adversarial_camera`].
    /// Twelve faint transparent layers arrive back to front, then one opaque layer
    /// behind the fourth arrives last.
    pub fn adversarial() -> Self {
        const LAYERS: usize = 12;
        const RODS: usize = 31;
        let radius = 0.04;
        let mut vertices = Vec::new();
        let mut polylines = Vec::new();
        let mut layer = |y: f64, attribute: f64| {
            for r in 0..RODS {
                let z = -0.9 + 1.8 * r as f64 / (RODS - 1) as f64;
                let start = vertices.len();
                for x in [-1.0, 1.0] {
                    vertices.push(LineVertex {
                        position: Vec3::new(x, y, z),
                        attribute,
                    });
                }
                polylines.push(vec![start, start + 1]);
            }
        };
        let depth = |i: usize| -0.66 + 0.12 * i as f64;
        for i in (0..LAYERS).rev() {
            layer(depth(i), 0.15 * i as f64 / (LAYERS - 1) as f64);
        }
        layer(0.5 * (depth(3) + depth(4)), 0.9);
        Self {
            name: "adversarial".to_string(),
            lines: LineSet::new(vertices, polylines).expect("layer rods are valid"),
            radius,
        }
    }

    pub fn adversarial_camera(width: usize, height: usize) -> Result<Camera, CameraError> {
        Camera::new(
            Vec3::new(0.0, -4.0, 0.0),
            Vec3::ZERO,
            Vec3::Z,
            0.55,
            0.5,
            12.0,
            width,
            height,
        )
    }

    pub fn mesh(&self) -> Result<TriMesh, GeometryError> {
        generate_tube_mesh(&self.lines, self.radius)
    }

    pub fn bounds(&self) -> Aabb {
        self.lines.bounds().expand(self.radius)
    }
}

/// Viewing direction used when a scene has no flight path.
pub const DEFAULT_VIEW_DIR: Vec3 = Vec3::new(0.45, -1.0, 0.35);
pub const DEFAULT_FOV_Y: f64 = 0.7;

/// Camera looking at the bounds center from `direction`, far enough that the bounding
/// sphere fits the vertical field of view.
pub fn framing_camera(bounds: &Aabb, direction: Vec3, width: usize, height: usize) -> Result<Camera, CameraError> {
    let r = 0.5 * bounds.diagonal().max(1e-6);
    let dist = r / (0.5 * DEFAULT_FOV_Y).sin();
    let dir = direction.try_normalize().ok_or(CameraError::Frame)?;
    let center = bounds.center();
    let up = if dir.cross(Vec3::Z).length() > 1e-6 {
        Vec3::Z
    } else {
        Vec3::Y
    };
    Camera::new(
        center + dir * dist,
        center,
        up,
        DEFAULT_FOV_Y,
        0.5 * (dist - r),
        dist + 2.0 * r,
        width,
        height,
    )
}

pub fn default_camera(bounds: &Aabb, width: usize, height: usize) -> Result<Camera, CameraError> {
    framing_camera(bounds, DEFAULT_VIEW_DIR, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::apply_transfer;
    use crate::raster::{depth_complexity, rasterize};

    #[test]
    fn regimes_have_their_opacity_profiles() {
        let attrs: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let op = Regime::Opaque.transfer_function();
        assert!(attrs.iter().all(|&a| apply_transfer(&op, a)[3] == 1.0));
        let low = Regime::ConstantLow.transfer_function();
        assert!(attrs.iter().all(|&a| apply_transfer(&low, a)[3] <= 0.15));
        let semi = Regime::Semi.transfer_function();
        for &a in &attrs {
            let alpha = apply_transfer(&semi, a)[3];
            if a >= 0.8 {
                assert_eq!(alpha, 1.0);
            } else if a < 0.79 {
                assert!((0.08..=0.3).contains(&alpha));
            }
        }
        for r in Regime::ALL {
            assert_eq!(r.name().parse::<Regime>().unwrap(), r);
        }
    }

    #[test]
    fn framing_sees_whole_scene() {
        let scene = Scene::standard(SynthKind::HelixBundle);
        let cam = default_camera(&scene.bounds(), 64, 36).unwrap();
        let view = cam.view_transform();
        let b = scene.bounds();
        for i in 0..8 {
            let corner = Vec3::new(
                if i & 1 == 0 { b.min.x } else { b.max.x },
                if i & 2 == 0 { b.min.y } else { b.max.y },
                if i & 4 == 0 { b.min.z } else { b.max.z },
            );
            let v = view.to_view(corner);
            assert!(v.z > cam.near && v.z < cam.far);
        }
    }

    #[test]
    fn adversarial_submission_order() {
        let scene = Scene::adversarial();
        let n = scene.lines.polylines.len();
        assert_eq!(n, 13 * 31);
        let y = |p: usize| scene.lines.vertices[scene.lines.polylines[p][0]].position.y;
        // transparent layers back to front
        for p in 0..12 * 31 - 1 {
            assert!(y(p) >= y(p + 1));
        }
        let opaque = scene.lines.vertices[scene.lines.polylines[n - 1][0]];
        assert_eq!(opaque.attribute, 0.9);
        let cam = Scene::adversarial_camera(64, 36).unwrap();
        let fb = rasterize(&scene.mesh().unwrap(), &cam, &Regime::Semi.transfer_function());
        assert!(depth_complexity(&fb).max() >= 24);
    }
}
