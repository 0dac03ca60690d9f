//! Exact compositors: sorted per-pixel fragment lists and depth peeling.

mod sort;

pub use sort::{sort_heap, sort_insertion, sort_shell, MinHeap, Sorter, SHELL_GAPS};

use crate::camera::Camera;
use crate::geometry::{Rgba, TransferFunction, TriMesh};
use crate::image::Image;
use crate::raster::{Fragment, FragmentBuffer, PreparedScene, Shading};
use rayon::prelude::*;
use std::cmp::Ordering;

/// Total order on fragments: depth first, submission index breaks ties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SortKey {
    pub depth: f64,
    pub submission: u32,
}

impl SortKey {
    pub fn of(f: &Fragment) -> Self {
        Self {
            depth: f.depth,
            submission: f.submission,
        }
    }
}

impl Eq for SortKey {}

impl PartialOrd for SortKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SortKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.depth
            .total_cmp(&other.depth)
            .then(self.submission.cmp(&other.submission))
    }
}

/// Resolved per-pixel RGBA; alpha is the accumulated coverage `1 − T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Framebuffer {
    pub width: usize,
    pub height: usize,
    pub background: [f64; 3],
    pub pixels: Vec<Rgba>,
}

impl Framebuffer {
    pub fn cleared(width: usize, height: usize, background: [f64; 3]) -> Self {
        Self {
            width,
            height,
            background,
            pixels: vec![[background[0], background[1], background[2], 0.0]; width * height],
        }
    }

    pub fn image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|p| [p[0], p[1], p[2]].map(|c| c.clamp(0.0, 1.0)))
                .collect(),
        }
    }
}

/// Front-to-back over blending of depth-sorted fragments, finished with the background.
pub fn composite_front_to_back<'a>(fragments: impl IntoIterator<Item = &'a Fragment>, background: [f64; 3]) -> Rgba {
    let mut c = [0.0; 3];
    let mut t = 1.0;
    let mut prev: Option<SortKey> = None;
    for f in fragments {
        let key = SortKey::of(f);
        debug_assert!(prev.is_none_or(|p| p < key), "fragments must be sorted");
        prev = Some(key);
        let w = t * f.alpha;
        for k in 0..3 {
            c[k] += w * f.color[k];
        }
        t *= 1.0 - f.alpha;
    }
    [
        (c[0] + t * background[0]).clamp(0.0, 1.0),
        (c[1] + t * background[1]).clamp(0.0, 1.0),
        (c[2] + t * background[2]).clamp(0.0, 1.0),
        1.0 - t,
    ]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SortStats {
    pub comparisons: u64,
    pub fragments: u64,
}

/// Sorts every pixel's list with `sorter` and blends it front to back.
pub fn render_fragment_lists(fb: &FragmentBuffer, background: [f64; 3], sorter: Sorter) -> (Framebuffer, SortStats) {
    let results: Vec<(Rgba, u64)> = (0..fb.pixel_count())
        .into_par_iter()
        .map_init(Vec::new, |keys: &mut Vec<(SortKey, u32)>, i| {
            let list = fb.pixel(i);
            keys.clear();
            keys.extend(list.iter().enumerate().map(|(j, f)| (SortKey::of(f), j as u32)));
            let comparisons = sorter.sort(keys);
            let rgba = composite_front_to_back(keys.iter().map(|&(_, j)| &list[j as usize]), background);
            (rgba, comparisons)
        })
        .collect();
    let stats = SortStats {
        comparisons: results.iter().map(|r| r.1).sum(),
        fragments: fb.len() as u64,
    };
    let out = Framebuffer {
        width: fb.width(),
        height: fb.height(),
        background,
        pixels: results.into_iter().map(|r| r.0).collect(),
    };
    (out, stats)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeelStats {
    /// Passes run, including the final empty one when peeling ran to exhaustion.
    pub passes: usize,
    pub fragments_per_pass: Vec<u64>,
    /// True if the pass cap stopped peeling before the scene was exhausted.
    pub truncated: bool,
}

#[derive(Clone, Copy)]
struct PeelPixel {
    color: [f64; 3],
    transmittance: f64,
    last: Option<SortKey>,
    nearest: Option<Fragment>,
}

/// Depth peeling with default shading; see [`depth_peel_prepared`].
pub fn depth_peel(
    mesh: &TriMesh,
    camera: &Camera,
    tf: &TransferFunction,
    background: [f64; 3],
) -> (Framebuffer, PeelStats) {
    let scene = PreparedScene::new(mesh, camera, tf, Shading::default());
    depth_peel_prepared(&scene, background, None)
}

/// Multi-pass depth peeling. Pass `i` keeps, per pixel, the nearest fragment whose
/// `(depth, submission)` key is strictly greater than the one peeled in pass `i − 1`,
/// and blends it under the layers peeled so far. Peeling stops at the first pass that
/// produces no fragment, or after `max_passes` passes.
pub fn depth_peel_prepared(
    scene: &PreparedScene<'_>,
    background: [f64; 3],
    max_passes: Option<usize>,
) -> (Framebuffer, PeelStats) {
    let cam = scene.camera();
    let mut state = vec![
        PeelPixel {
            color: [0.0; 3],
            transmittance: 1.0,
            last: None,
            nearest: None,
        };
        cam.pixel_count()
    ];
    let mut stats = PeelStats::default();
    loop {
        if max_passes.is_some_and(|cap| stats.passes >= cap) {
            stats.truncated = true;
            break;
        }
        scene.for_each_fragment(&mut state, |px, f| {
            let key = SortKey::of(&f);
            if px.last.is_none_or(|l| key > l) && px.nearest.is_none_or(|n| key < SortKey::of(&n)) {
                px.nearest = Some(f);
            }
        });
        stats.passes += 1;
        let peeled: u64 = state
            .par_iter_mut()
            .map(|px| match px.nearest.take() {
                Some(f) => {
                    let w = px.transmittance * f.alpha;
                    for k in 0..3 {
                        px.color[k] += w * f.color[k];
                    }
                    px.transmittance *= 1.0 - f.alpha;
                    px.last = Some(SortKey::of(&f));
                    1
                }
                None => 0,
            })
            .sum();
        stats.fragments_per_pass.push(peeled);
        if peeled == 0 {
            break;
        }
    }
    let pixels = state
        .iter()
        .map(|px| {
            let t = px.transmittance;
            [
                (px.color[0] + t * background[0]).clamp(0.0, 1.0),
                (px.color[1] + t * background[1]).clamp(0.0, 1.0),
                (px.color[2] + t * background[2]).clamp(0.0, 1.0),
                1.0 - t,
            ]
        })
        .collect();
    let fb = Framebuffer {
        width: cam.width,
        height: cam.height,
        background,
        pixels,
    };
    (fb, stats)
}
