//! Camera flight paths: piecewise-linear interpolation between keyframes.

use super::HarnessError;
use crate::camera::Camera;
use crate::math::{Aabb, Vec3};
use crate::scenes::{DEFAULT_FOV_Y, DEFAULT_VIEW_DIR};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keyframe {
    pub eye: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
}

/// Parses `eye;look_at;up` vector triples. Every vector is `x,y,z`; vectors are separated
/// by `;` (a `|` between keyframes is accepted too).
pub fn parse_keyframes(text: &str) -> Result<Vec<Keyframe>, String> {
    let vectors = text
        .split([';', '|'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let c: Vec<f64> = s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("invalid number '{}'", t.trim()))
                })
                .collect::<Result<_, _>>()?;
            match c[..] {
                [x, y, z] if c.iter().all(|v| v.is_finite()) => Ok(Vec3::new(x, y, z)),
                _ => Err(format!("'{s}' is not a finite x,y,z vector")),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    if vectors.len() % 3 != 0 {
        return Err(format!("{} vectors do not form eye;look_at;up triples", vectors.len()));
    }
    Ok(vectors
        .chunks(3)
        .map(|c| Keyframe {
            eye: c[0],
            look_at: c[1],
            up: c[2],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightPath {
    keyframes: Vec<Keyframe>,
    frames_per_segment: usize,
}

impl FlightPath {
    pub fn new(keyframes: Vec<Keyframe>, frames_per_segment: usize) -> Result<Self, HarnessError> {
        if keyframes.len() < 2 {
            return Err(HarnessError::Key {
                key: "path.keyframes".into(),
                msg: format!("need at least 2 keyframes, got {}", keyframes.len()),
            });
        }
        if frames_per_segment == 0 {
            return Err(HarnessError::Key {
                key: "path.frames_per_segment".into(),
                msg: "must be at least 1".into(),
            });
        }
        Ok(Self {
            keyframes,
            frames_per_segment,
        })
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    /// Keyframes are frames `0, n, 2n, ...`; the last keyframe is the last frame.
    pub fn frame_count(&self) -> usize {
        (self.keyframes.len() - 1) * self.frames_per_segment + 1
    }

    /// Camera for `frame`, with clip planes fitted to `bounds`.
    pub fn camera(&self, frame: usize, bounds: &Aabb, width: usize, height: usize) -> Result<Camera, HarnessError> {
        let k = interpolate_path(self, frame)?;
        let r = 0.5 * bounds.diagonal();
        let d = (k.eye - bounds.center()).length();
        let near = (0.5 * (d - r)).max(1e-3 * r);
        Ok(Camera::new(
            k.eye,
            k.look_at,
            k.up,
            DEFAULT_FOV_Y,
            near,
            d + 2.0 * r,
            width,
            height,
        )?)
    }
}

/// Linear blend of the bracketing keyframes with `up` made orthogonal to the view direction.
pub fn interpolate_path(path: &FlightPath, frame: usize) -> Result<Keyframe, HarnessError> {
    if frame >= path.frame_count() {
        return Err(HarnessError::FrameRange {
            frame,
            count: path.frame_count(),
        });
    }
    let seg = (frame / path.frames_per_segment).min(path.keyframes.len() - 2);
    let local = frame - seg * path.frames_per_segment;
    let (a, b) = (path.keyframes[seg], path.keyframes[seg + 1]);
    let k = if local == 0 {
        a
    } else if local == path.frames_per_segment {
        b
    } else {
        let t = local as f64 / path.frames_per_segment as f64;
        Keyframe {
            eye: a.eye.lerp(b.eye, t),
            look_at: a.look_at.lerp(b.look_at, t),
            up: a.up.lerp(b.up, t),
        }
    };
    let forward = (k.look_at - k.eye)
        .try_normalize()
        .ok_or(HarnessError::DegenerateFrame(frame))?;
    let up = (k.up - forward * k.up.dot(forward))
        .try_normalize()
        .ok_or(HarnessError::DegenerateFrame(frame))?;
    Ok(Keyframe { up, ..k })
}

/// Orbit with two zoom-ins around the bounds, or a short dolly for the layered scene.
pub fn default_keyframes(bounds: &Aabb, adversarial: bool) -> Vec<Keyframe> {
    if adversarial {
        return vec![
            Keyframe {
                eye: Vec3::new(0.0, -4.0, 0.0),
                look_at: Vec3::ZERO,
                up: Vec3::Z,
            },
            Keyframe {
                eye: Vec3::new(0.4, -3.8, 0.3),
                look_at: Vec3::ZERO,
                up: Vec3::Z,
            },
        ];
    }
    let c = bounds.center();
    let dist = 0.5 * bounds.diagonal() / (0.5 * DEFAULT_FOV_Y).sin();
    let key = |dir: Vec3, scale: f64| Keyframe {
        eye: c + dir.normalize() * (dist * scale),
        look_at: c,
        up: Vec3::Z,
    };
    let side = Vec3::new(-0.8, -0.6, 0.3);
    vec![
        key(DEFAULT_VIEW_DIR, 1.0),
        key(DEFAULT_VIEW_DIR, 0.6),
        key(side, 1.0),
        key(side, 0.6),
        key(Vec3::new(-0.45, 1.0, 0.35), 1.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> FlightPath {
        let k = parse_keyframes("0,-4,0;0,0,0;0,0,1;2,-4,2;0,0,0;0,0.3,1|4,0,0;0,0,0;0,0,1").unwrap();
        FlightPath::new(k, 4).unwrap()
    }

    #[test]
    fn keyframes_are_hit_exactly() {
        let p = path();
        assert_eq!(p.frame_count(), 9);
        let k0 = interpolate_path(&p, 0).unwrap();
        assert_eq!(k0.eye, Vec3::new(0.0, -4.0, 0.0));
        assert_eq!(k0.up, Vec3::Z);
        assert_eq!(interpolate_path(&p, 4).unwrap().eye, Vec3::new(2.0, -4.0, 2.0));
        assert_eq!(interpolate_path(&p, 8).unwrap().eye, Vec3::new(4.0, 0.0, 0.0));
    }

    #[test]
    fn midpoint_is_mean_of_eyes() {
        let p = path();
        let m = interpolate_path(&p, 2).unwrap();
        assert_eq!(m.eye, Vec3::new(1.0, -4.0, 1.0));
        let f = (m.look_at - m.eye).normalize();
        assert!(m.up.dot(f).abs() < 1e-12);
        assert!((m.up.length() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_and_degenerate() {
        let p = path();
        assert!(matches!(interpolate_path(&p, 9), Err(HarnessError::FrameRange { .. })));
        let bad = FlightPath::new(parse_keyframes("0,0,0;0,0,0;0,0,1;1,0,0;0,0,0;0,0,1").unwrap(), 1).unwrap();
        assert!(interpolate_path(&bad, 0).is_err());
        assert!(FlightPath::new(vec![], 1).is_err());
        assert!(parse_keyframes("0,0,0;1,1").is_err());
        assert!(parse_keyframes("0,0,0;1,1,1").is_err());
    }

    #[test]
    fn cameras_are_deterministic_and_valid() {
        let b = Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let p = FlightPath::new(default_keyframes(&b, false), 3).unwrap();
        let run = || {
            (0..p.frame_count())
                .map(|f| p.camera(f, &b, 32, 18).unwrap())
                .collect::<Vec<_>>()
        };
        let cams = run();
        assert_eq!(cams, run());
        for c in &cams {
            let v = c.view_transform().to_view(b.center());
            assert!(v.z > c.near && v.z < c.far);
        }
    }
}
