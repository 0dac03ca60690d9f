//! Config-driven runs: render every technique along a flight path, compare against a
//! reference technique and write images plus one CSV.

mod config;
mod path;

pub use config::{RunConfig, SceneSource, VrcConfig};
pub use path::{default_keyframes, interpolate_path, parse_keyframes, FlightPath, Keyframe};

use crate::camera::{Camera, CameraError};
use crate::exact::{depth_peel_prepared, render_fragment_lists, Framebuffer, Sorter};
use crate::geometry::{load_lineset, GeometryError, LineSet, TriMesh};
use crate::image::{gray16_to_pgm, write_file, Image, ImageError};
use crate::math::{Aabb, Vec3};
use crate::mboit::mboit_render;
use crate::metrics::{abs_error_image, psnr, ssim, MetricsError};
use crate::mlab::{mlab_render, mlabdb_render, MlabError};
use crate::raster::{depth_complexity, FragmentBuffer, PreparedScene, Shading};
use crate::raytracer::{raytrace_image, HitScene, RtError, RtParams, TriangleScene, TubeScene};
use crate::scenes::{Scene, WHITE};
use crate::vrc::{vrc_render, VoxelGrid, VrcError, VrcParams};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

pub const CSV_HEADER: &str = "frame,technique,wall_ms,fragments,psnr_db,ssim,aux_counter_1,aux_counter_2";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("config key '{key}': {msg}")]
    Key { key: String, msg: String },
    #[error("unknown technique '{0}'")]
    UnknownTechnique(String),
    #[error("frame {frame} out of range (path has {count} frames)")]
    FrameRange { frame: usize, count: usize },
    #[error("frame {0}: eye and look-at coincide or up is parallel to the view direction")]
    DegenerateFrame(usize),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Mlab(#[from] MlabError),
    #[error(transparent)]
    Rt(#[from] RtError),
    #[error(transparent)]
    Vrc(#[from] VrcError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technique {
    Dp,
    LlInsertion,
    LlShell,
    LlHeap,
    Mlab,
    Mlabdb,
    Mboit,
    Rt,
    RtAnalytic,
    Vrc,
}

impl Technique {
    pub const ALL: [Technique; 10] = [
        Technique::Dp,
        Technique::LlInsertion,
        Technique::LlShell,
        Technique::LlHeap,
        Technique::Mlab,
        Technique::Mlabdb,
        Technique::Mboit,
        Technique::Rt,
        Technique::RtAnalytic,
        Technique::Vrc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Dp => "dp",
            Technique::LlInsertion => "ll-insertion",
            Technique::LlShell => "ll-shell",
            Technique::LlHeap => "ll-heap",
            Technique::Mlab => "mlab",
            Technique::Mlabdb => "mlabdb",
            Technique::Mboit => "mboit",
            Technique::Rt => "rt",
            Technique::RtAnalytic => "rt-analytic",
            Technique::Vrc => "vrc",
        }
    }

    /// Whether the technique consumes the rasterized fragment stream.
    pub fn is_raster(self) -> bool {
        !matches!(self, Technique::Rt | Technique::RtAnalytic | Technique::Vrc)
    }
}

impl FromStr for Technique {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Technique::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| HarnessError::UnknownTechnique(s.to_string()))
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub frame: usize,
    pub technique: Technique,
    pub wall_ms: f64,
    pub fragments: u64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub aux: [u64; 2],
    pub image: PathBuf,
}

impl Row {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{:.3},{},{:.4},{:.6},{},{}",
            self.frame,
            self.technique.name(),
            self.wall_ms,
            self.fragments,
            self.psnr_db,
            self.ssim,
            self.aux[0],
            self.aux[1]
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<Row>,
    pub csv: PathBuf,
    pub frames: usize,
}

/// Lines, tube radius and mesh of a configured scene.
pub struct LoadedScene {
    pub lines: LineSet,
    pub radius: f64,
    pub mesh: TriMesh,
    /// Tube bounds, or the unit cube for an empty scene.
    pub bounds: Aabb,
}

impl LoadedScene {
    pub fn load(cfg: &RunConfig) -> Result<Self, HarnessError> {
        let (lines, default_radius) = match &cfg.scene {
            SceneSource::File(p) => {
                let lines = load_lineset(p)?;
                let r = 0.005 * lines.bounds().diagonal();
                (lines, if r > 0.0 && r.is_finite() { r } else { 0.01 })
            }
            SceneSource::Synthetic {
                kind,
                seed,
                lines,
                verts,
            } => {
                let s = Scene::synthetic(*kind, *seed, *lines, *verts, 0.012)?;
                (s.lines, s.radius)
            }
            SceneSource::Adversarial => {
                let s = Scene::adversarial();
                (s.lines, s.radius)
            }
        };
        let radius = cfg.radius.unwrap_or(default_radius);
        let mesh = crate::geometry::generate_tube_mesh(&lines, radius)?;
        let b = lines.bounds();
        let bounds = if lines.polylines.is_empty() || b.is_empty() {
            Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0))
        } else {
            b.expand(radius)
        };
        Ok(Self {
            lines,
            radius,
            mesh,
            bounds,
        })
    }
}

struct Rendered {
    fb: Framebuffer,
    wall_ms: f64,
    fragments: u64,
    aux: [u64; 2],
}

/// Geometry prepared once per run for the image-order techniques.
struct Accel<'a> {
    triangles: Option<TriangleScene<'a>>,
    tubes: Option<TubeScene>,
    grid: Option<VoxelGrid>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[allow(clippy::too_many_arguments)]
fn render_technique(
    tech: Technique,
    cfg: &RunConfig,
    accel: &Accel,
    camera: &Camera,
    prepared: &PreparedScene,
    fb: &FragmentBuffer,
    raster_ms: f64,
    max_dc: u64,
) -> Result<Rendered, HarnessError> {
    let tf = cfg.regime.transfer_function();
    let bg = WHITE;
    let frags = fb.len() as u64;
    let t = Instant::now();
    let background = || Framebuffer::cleared(camera.width, camera.height, bg);
    let out = |fb: Framebuffer, fragments: u64, aux: [u64; 2], extra_ms: f64| Rendered {
        fb,
        wall_ms: ms(t) + extra_ms,
        fragments,
        aux,
    };
    let rt_params = RtParams {
        // a healthy restart offset never needs more than a few queries per layer
        max_iterations: 10 * max_dc.max(1) as usize,
        ..cfg.rt
    };
    let trace = |scene: Option<&dyn HitScene>| -> Result<Rendered, HarnessError> {
        match scene {
            Some(s) => {
                let (img, st) = raytrace_image(s, camera, &tf, bg, &rt_params)?;
                Ok(out(img, st.blended_hits, [st.iterations, st.max_iterations], 0.0))
            }
            None => Ok(out(background(), 0, [0, 0], 0.0)),
        }
    };
    Ok(match tech {
        Technique::Dp => {
            // peeling re-rasterizes every pass, so it does not reuse the shared buffer
            let (img, st) = depth_peel_prepared(prepared, bg, None);
            out(img, frags, [st.passes as u64, max_dc], 0.0)
        }
        Technique::LlInsertion | Technique::LlShell | Technique::LlHeap => {
            let sorter = match tech {
                Technique::LlInsertion => Sorter::Insertion,
                Technique::LlShell => Sorter::Shell,
                _ => Sorter::Heap,
            };
            let (img, st) = render_fragment_lists(fb, bg, sorter);
            out(img, frags, [st.comparisons, max_dc], raster_ms)
        }
        Technique::Mlab => {
            let (img, st) = mlab_render(fb, bg, cfg.mlab)?;
            out(img, frags, [st.merges, 0], raster_ms)
        }
        Technique::Mlabdb => {
            let (img, st) = mlabdb_render(fb, bg, cfg.mlabdb)?;
            out(img, frags, [st.merges, st.discarded], raster_ms)
        }
        Technique::Mboit => {
            let (img, st) = mboit_render(fb, bg, cfg.mboit, camera.near, camera.far);
            out(img, frags, [st.fallbacks, st.clamped_depths], raster_ms)
        }
        Technique::Rt => trace(accel.triangles.as_ref().map(|s| s as &dyn HitScene))?,
        Technique::RtAnalytic => trace(accel.tubes.as_ref().map(|s| s as &dyn HitScene))?,
        Technique::Vrc => match &accel.grid {
            Some(g) => {
                let (img, st) = vrc_render(g, camera, &tf, bg, &VrcParams::default());
                out(img, st.blended_hits, [st.voxels_visited, st.tube_tests], 0.0)
            }
            None => out(background(), 0, [0, 0], 0.0),
        },
    })
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Renders every frame of the configured path and writes images and `results.csv`.
pub fn run(cfg: &RunConfig) -> Result<RunReport, HarnessError> {
    let scene = LoadedScene::load(cfg)?;
    let path = cfg.flight_path(&scene.bounds)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;

    let wants = |t: Technique| cfg.techniques.contains(&t) || cfg.reference == t;
    let empty = scene.mesh.triangles.is_empty();
    let accel = Accel {
        triangles: if wants(Technique::Rt) && !empty {
            Some(TriangleScene::new(&scene.mesh, cfg.rt.leaf_size)?)
        } else {
            None
        },
        tubes: if wants(Technique::RtAnalytic) && !empty {
            Some(TubeScene::new(&scene.lines, scene.radius, cfg.rt.leaf_size)?)
        } else {
            None
        },
        grid: if wants(Technique::Vrc) && !empty {
            Some(VoxelGrid::build(
                &scene.lines,
                [cfg.vrc.res; 3],
                cfg.vrc.quant,
                scene.radius,
                cfg.vrc.neighborhood,
            )?)
        } else {
            None
        },
    };

    let tf = cfg.regime.transfer_function();
    let mut rows = Vec::new();
    for frame in 0..path.frame_count() {
        let camera = path.camera(frame, &scene.bounds, cfg.width, cfg.height)?;
        let t = Instant::now();
        let prepared = PreparedScene::new(&scene.mesh, &camera, &tf, Shading::default());
        let fb = prepared.rasterize();
        let raster_ms = ms(t);
        let dc = depth_complexity(&fb);
        let max_dc = dc.max() as u64;
        if cfg.depth_maps {
            let p = cfg.output_dir.join(format!("frame_{frame:04}_depth.pgm"));
            write_file(&p, &gray16_to_pgm(dc.width, dc.height, &dc.counts))?;
        }

        let render = |tech| render_technique(tech, cfg, &accel, &camera, &prepared, &fb, raster_ms, max_dc);
        let first = render(cfg.reference)?;
        let reference: Image = first.fb.image();
        let mut reference_run = Some(first);
        for &tech in &cfg.techniques {
            let cached = if tech == cfg.reference {
                reference_run.take()
            } else {
                None
            };
            let r = match cached {
                Some(r) => r,
                None => render(tech)?,
            };
            let img = r.fb.image();
            let image = cfg.output_dir.join(format!("frame_{frame:04}_{}.ppm", tech.name()));
            img.save_ppm(&image)?;
            if cfg.write_pfm {
                img.save_pfm(&image.with_extension("pfm"))?;
            }
            if cfg.error_maps {
                let e = abs_error_image(&img, &reference)?;
                e.save_ppm(
                    &cfg.output_dir
                        .join(format!("frame_{frame:04}_{}_error.ppm", tech.name())),
                )?;
            }
            rows.push(Row {
                frame,
                technique: tech,
                wall_ms: r.wall_ms,
                fragments: r.fragments,
                psnr_db: psnr(&img, &reference)?,
                ssim: ssim(&img, &reference)?.0,
                aux: r.aux,
                image,
            });
        }
    }

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        let _ = writeln!(csv, "{}", r.csv_line());
    }
    let csv_path = cfg.output_dir.join("results.csv");
    std::fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;
    Ok(RunReport {
        rows,
        csv: csv_path,
        frames: path.frame_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn technique_names_round_trip() {
        for t in Technique::ALL {
            assert_eq!(t.name().parse::<Technique>().unwrap(), t);
        }
        assert!("zbuffer".parse::<Technique>().is_err());
        assert!(Technique::Dp.is_raster() && !Technique::Vrc.is_raster());
    }

    #[test]
    fn csv_line_layout() {
        let row = Row {
            frame: 3,
            technique: Technique::LlHeap,
            wall_ms: 1.23456,
            fragments: 10,
            psnr_db: 60.0,
            ssim: 1.0,
            aux: [7, 8],
            image: PathBuf::new(),
        };
        assert_eq!(row.csv_line(), "3,ll-heap,1.235,10,60.0000,1.000000,7,8");
        assert_eq!(CSV_HEADER.split(',').count(), row.csv_line().split(',').count());
    }
}
