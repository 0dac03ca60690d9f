//! INI-style run configuration.
//!
//! ```text
//! regime = semi
//! techniques = dp, ll-heap, mboit
//!
//! [scene]
//! kind = helix-bundle
//! seed = 1
//!
//! [viewport]
//! width = 320
//! height = 180
//! ```
//!
//! Keys may also be written fully qualified (`mlab.k = 8`) outside any section.

use super::path::{parse_keyframes, FlightPath, Keyframe};
use super::{HarnessError, Technique};
use crate::geometry::SynthKind;
use crate::mboit::MboitParams;
use crate::mlab::{MergePolicy, MlabParams, MlabdbParams};
use crate::raytracer::RtParams;
use crate::scenes::Regime;
use crate::vrc::Neighborhood;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

const KEYS: &[&str] = &[
    "regime",
    "techniques",
    "reference",
    "scene.path",
    "scene.kind",
    "scene.seed",
    "scene.lines",
    "scene.verts",
    "scene.radius",
    "viewport.width",
    "viewport.height",
    "path.keyframes",
    "path.frames_per_segment",
    "output.dir",
    "output.pfm",
    "output.depth_maps",
    "output.error_maps",
    "mlab.k",
    "mlab.policy",
    "mlabdb.tau_alpha",
    "mlabdb.tau_o",
    "mlabdb.front_layers",
    "mlabdb.back_layers",
    "mboit.beta",
    "mboit.bias",
    "vrc.res",
    "vrc.quant",
    "vrc.neighborhood",
    "rt.epsilon",
    "rt.leaf_size",
];

/// Where the lines come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneSource {
    File(PathBuf),
    Synthetic {
        kind: SynthKind,
        seed: u64,
        lines: usize,
        verts: usize,
    },
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VrcConfig {
    pub res: usize,
    pub quant: u32,
    pub neighborhood: Neighborhood,
}

impl Default for VrcConfig {
    fn default() -> Self {
        Self {
            res: 64,
            quant: 16,
            neighborhood: Neighborhood::Face6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: SceneSource,
    /// Tube radius; `None` picks the scene default.
    pub radius: Option<f64>,
    pub techniques: Vec<Technique>,
    pub reference: Technique,
    pub regime: Regime,
    pub width: usize,
    pub height: usize,
    /// Explicit keyframes; `None` derives a path from the scene bounds.
    pub keyframes: Option<Vec<Keyframe>>,
    pub frames_per_segment: usize,
    pub output_dir: PathBuf,
    pub write_pfm: bool,
    pub depth_maps: bool,
    pub error_maps: bool,
    pub mlab: MlabParams,
    pub mlabdb: MlabdbParams,
    pub mboit: MboitParams,
    pub vrc: VrcConfig,
    pub rt: RtParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneSource::Synthetic {
                kind: SynthKind::HelixBundle,
                seed: 1,
                lines: 200,
                verts: 64,
            },
            radius: None,
            techniques: Technique::ALL.to_vec(),
            reference: Technique::Dp,
            regime: Regime::Semi,
            width: 320,
            height: 180,
            keyframes: None,
            frames_per_segment: 2,
            output_dir: PathBuf::from("out"),
            write_pfm: false,
            depth_maps: false,
            error_maps: false,
            mlab: MlabParams::default(),
            mlabdb: MlabdbParams::default(),
            mboit: MboitParams::default(),
            vrc: VrcConfig::default(),
            rt: RtParams::default(),
        }
    }
}

/// Raw `section.key → value` pairs, remembering the line each key came from.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, (usize, String)>, HarnessError> {
    let mut section = String::new();
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        // ';' separates keyframe vectors, so it only starts a comment at the line start
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| HarnessError::Config {
                    line: line_no,
                    msg: format!("unterminated section header '{line}'"),
                })?
                .trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(HarnessError::Config {
                    line: line_no,
                    msg: format!("bad section name '{name}'"),
                });
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Config {
            line: line_no,
            msg: format!("expected key = value, got '{line}'"),
        })?;
        let k = k.trim();
        let key = if section.is_empty() || k.contains('.') {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        if !KEYS.contains(&key.as_str()) {
            return Err(HarnessError::Config {
                line: line_no,
                msg: format!("unknown key '{key}'"),
            });
        }
        if out.insert(key.clone(), (line_no, v.trim().to_string())).is_some() {
            return Err(HarnessError::Config {
                line: line_no,
                msg: format!("duplicate key '{key}'"),
            });
        }
    }
    Ok(out)
}

struct Values(BTreeMap<String, (usize, String)>);

impl Values {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|(_, v)| v.as_str())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| HarnessError::Key {
                    key: key.to_string(),
                    msg: format!("cannot parse '{v}': {e}"),
                })
            })
            .transpose()
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), HarnessError>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }
}

fn key_err(key: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Key {
        key: key.to_string(),
        msg: msg.into(),
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let v = Values(parse_pairs(text)?);
        let mut cfg = RunConfig::default();

        if let Some(list) = v.raw("techniques") {
            cfg.techniques = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<Technique>())
                .collect::<Result<_, _>>()?;
            if cfg.techniques.is_empty() {
                return Err(key_err("techniques", "no techniques listed"));
            }
        }
        if let Some(r) = v.raw("reference") {
            cfg.reference = r.parse()?;
        }
        v.set("regime", &mut cfg.regime)?;

        match (v.raw("scene.path"), v.raw("scene.kind")) {
            (Some(_), Some(_)) => return Err(key_err("scene.path", "give either scene.path or scene.kind, not both")),
            (Some(p), None) => cfg.scene = SceneSource::File(base_dir.join(p)),
            (None, Some("adversarial")) => cfg.scene = SceneSource::Adversarial,
            (None, kind) => {
                let kind = match kind {
                    Some(k) => k
                        .parse::<SynthKind>()
                        .map_err(|e| key_err("scene.kind", e.to_string()))?,
                    None => SynthKind::HelixBundle,
                };
                let (def_lines, def_verts) = match kind {
                    SynthKind::GridRods => (16, 16),
                    SynthKind::HelixBundle => (200, 64),
                    SynthKind::VortexStreamlines => (500, 64),
                };
                cfg.scene = SceneSource::Synthetic {
                    kind,
                    seed: v.get("scene.seed")?.unwrap_or(1),
                    lines: v.get("scene.lines")?.unwrap_or(def_lines),
                    verts: v.get("scene.verts")?.unwrap_or(def_verts),
                };
            }
        }
        if !matches!(cfg.scene, SceneSource::Synthetic { .. }) {
            for key in ["scene.seed", "scene.lines", "scene.verts"] {
                if v.raw(key).is_some() {
                    return Err(key_err(key, "only applies to synthetic scenes"));
                }
            }
        }
        cfg.radius = v.get("scene.radius")?;
        if let Some(r) = cfg.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(key_err("scene.radius", "must be positive"));
            }
        }

        v.set("viewport.width", &mut cfg.width)?;
        v.set("viewport.height", &mut cfg.height)?;
        if cfg.width < 16 || cfg.height < 16 {
            return Err(key_err(
                "viewport.width",
                format!("viewport must be at least 16x16, got {}x{}", cfg.width, cfg.height),
            ));
        }

        if let Some(k) = v.raw("path.keyframes") {
            cfg.keyframes = Some(parse_keyframes(k).map_err(|m| key_err("path.keyframes", m))?);
        }
        v.set("path.frames_per_segment", &mut cfg.frames_per_segment)?;
        if cfg.frames_per_segment == 0 {
            return Err(key_err("path.frames_per_segment", "must be at least 1"));
        }

        if let Some(d) = v.raw("output.dir") {
            cfg.output_dir = base_dir.join(d);
        } else {
            cfg.output_dir = base_dir.join("out");
        }
        v.set("output.pfm", &mut cfg.write_pfm)?;
        v.set("output.depth_maps", &mut cfg.depth_maps)?;
        v.set("output.error_maps", &mut cfg.error_maps)?;

        v.set("mlab.k", &mut cfg.mlab.k)?;
        if cfg.mlab.k == 0 {
            return Err(key_err("mlab.k", "must be at least 1"));
        }
        if let Some(p) = v.raw("mlab.policy") {
            let policy: MergePolicy = p.parse().map_err(|e: String| key_err("mlab.policy", e))?;
            cfg.mlab.policy = policy;
            cfg.mlabdb.policy = policy;
        }
        v.set("mlabdb.tau_alpha", &mut cfg.mlabdb.tau_alpha)?;
        v.set("mlabdb.tau_o", &mut cfg.mlabdb.tau_o)?;
        v.set("mlabdb.front_layers", &mut cfg.mlabdb.front_layers)?;
        v.set("mlabdb.back_layers", &mut cfg.mlabdb.back_layers)?;
        cfg.mlabdb.validate().map_err(|e| key_err("mlabdb", e.to_string()))?;

        v.set("mboit.beta", &mut cfg.mboit.beta)?;
        v.set("mboit.bias", &mut cfg.mboit.bias)?;
        if !(0.0..=1.0).contains(&cfg.mboit.beta) {
            return Err(key_err("mboit.beta", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&cfg.mboit.bias) {
            return Err(key_err("mboit.bias", "must lie in [0, 1)"));
        }

        v.set("vrc.res", &mut cfg.vrc.res)?;
        v.set("vrc.quant", &mut cfg.vrc.quant)?;
        if cfg.vrc.res == 0 {
            return Err(key_err("vrc.res", "must be at least 1"));
        }
        if cfg.vrc.quant == 0 {
            return Err(key_err("vrc.quant", "must be at least 1"));
        }
        v.set("vrc.neighborhood", &mut cfg.vrc.neighborhood)?;

        if let Some(eps) = v.get::<f64>("rt.epsilon")? {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(key_err("rt.epsilon", "must be positive"));
            }
            cfg.rt.epsilon = Some(eps);
        }
        v.set("rt.leaf_size", &mut cfg.rt.leaf_size)?;
        if cfg.rt.leaf_size == 0 {
            return Err(key_err("rt.leaf_size", "must be at least 1"));
        }
        Ok(cfg)
    }

    /// Flight path over explicit keyframes or derived from `bounds`.
    pub fn flight_path(&self, bounds: &crate::math::Aabb) -> Result<FlightPath, HarnessError> {
        let keyframes = match &self.keyframes {
            Some(k) => k.clone(),
            None => super::path::default_keyframes(bounds, matches!(self.scene, SceneSource::Adversarial)),
        };
        FlightPath::new(keyframes, self.frames_per_segment)
    }
}
