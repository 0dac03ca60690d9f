//! Multi-layer alpha blending, plain and with two depth buckets.

use crate::exact::Framebuffer;
use crate::geometry::Rgba;
use crate::raster::{Fragment, FragmentBuffer};
use rayon::prelude::*;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MlabError {
    #[error("blending array needs at least one layer")]
    ZeroCapacity,
    #[error("threshold {0} must lie in [0, 1]")]
    Threshold(f64),
    #[error("tau_alpha ({0}) must not exceed tau_o ({1})")]
    ThresholdOrder(f64, f64),
}

/// Premultiplied color, transmittance and depth of one or more merged fragments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendLayer {
    pub color: [f64; 3],
    pub transmittance: f64,
    pub depth: f64,
}

impl BlendLayer {
    pub fn from_fragment(f: &Fragment) -> Self {
        Self {
            color: f.color.map(|c| c * f.alpha),
            transmittance: 1.0 - f.alpha,
            depth: f.depth,
        }
    }

    /// `self` in front of `back`; the merged layer keeps the front depth.
    pub fn merge(&self, back: &BlendLayer) -> BlendLayer {
        let t = self.transmittance;
        BlendLayer {
            color: [
                self.color[0] + t * back.color[0],
                self.color[1] + t * back.color[1],
                self.color[2] + t * back.color[2],
            ],
            transmittance: t * back.transmittance,
            depth: self.depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergePolicy {
    /// Merge the two deepest layers.
    #[default]
    Deepest,
    /// Merge the adjacent pair with the smallest depth gap (front-most pair on ties).
    MinDepthGap,
}

impl FromStr for MergePolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "deepest" => Ok(MergePolicy::Deepest),
            "min-gap" => Ok(MergePolicy::MinDepthGap),
            _ => Err(format!("unknown merge policy '{s}'")),
        }
    }
}

/// Fixed-capacity, depth-sorted array of blend layers.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendArray {
    capacity: usize,
    policy: MergePolicy,
    layers: Vec<BlendLayer>,
    merges: u64,
}

impl BlendArray {
    pub fn new(capacity: usize, policy: MergePolicy) -> Result<Self, MlabError> {
        if capacity == 0 {
            return Err(MlabError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            policy,
            layers: Vec::with_capacity(capacity + 1),
            merges: 0,
        })
    }

    pub fn layers(&self) -> &[BlendLayer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn merges(&self) -> u64 {
        self.merges
    }

    pub fn clear(&mut self) {
        self.layers.clear();
    }

    /// Inserts after any layers of equal depth, then merges one pair on overflow.
    pub fn insert(&mut self, f: &Fragment) {
        let layer = BlendLayer::from_fragment(f);
        let pos = self.layers.partition_point(|l| l.depth <= layer.depth);
        self.layers.insert(pos, layer);
        if self.layers.len() > self.capacity {
            let i = match self.policy {
                MergePolicy::Deepest => self.layers.len() - 2,
                MergePolicy::MinDepthGap => (0..self.layers.len() - 1)
                    .min_by(|&a, &b| {
                        let ga = self.layers[a + 1].depth - self.layers[a].depth;
                        let gb = self.layers[b + 1].depth - self.layers[b].depth;
                        ga.total_cmp(&gb)
                    })
                    .expect("at least two layers"),
            };
            let back = self.layers.remove(i + 1);
            self.layers[i] = self.layers[i].merge(&back);
            self.merges += 1;
        }
    }
}

/// Front-to-back accumulation of layer lists, then the background.
pub fn resolve_layers<'a>(layers: impl IntoIterator<Item = &'a BlendLayer>, background: [f64; 3]) -> Rgba {
    let mut c = [0.0; 3];
    let mut t = 1.0;
    for l in layers {
        for k in 0..3 {
            c[k] += t * l.color[k];
        }
        t *= l.transmittance;
    }
    [
        (c[0] + t * background[0]).clamp(0.0, 1.0),
        (c[1] + t * background[1]).clamp(0.0, 1.0),
        (c[2] + t * background[2]).clamp(0.0, 1.0),
        1.0 - t,
    ]
}

pub fn mlab_resolve(array: &BlendArray, background: [f64; 3]) -> Rgba {
    resolve_layers(array.layers(), background)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlabParams {
    pub k: usize,
    pub policy: MergePolicy,
}

impl Default for MlabParams {
    fn default() -> Self {
        Self {
            k: 8,
            policy: MergePolicy::Deepest,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MlabStats {
    pub merges: u64,
    /// Fragments dropped behind the opaque bound (bucketed variant only).
    pub discarded: u64,
}

/// Single-pass MLAB over every pixel's stream in submission order.
pub fn mlab_render(
    fb: &FragmentBuffer,
    background: [f64; 3],
    params: MlabParams,
) -> Result<(Framebuffer, MlabStats), MlabError> {
    let proto = BlendArray::new(params.k, params.policy)?;
    let results: Vec<(Rgba, u64)> = (0..fb.pixel_count())
        .into_par_iter()
        .map_init(
            || proto.clone(),
            |arr, i| {
                arr.clear();
                let before = arr.merges();
                for f in fb.pixel(i) {
                    arr.insert(f);
                }
                (mlab_resolve(arr, background), arr.merges() - before)
            },
        )
        .collect();
    Ok(collect_framebuffer(fb, background, results, |merges| MlabStats {
        merges,
        discarded: 0,
    }))
}

/// Depth bounds of the two buckets; absent bounds are `f64::INFINITY`, beyond any far plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketBounds {
    pub z_min: f64,
    pub z_o: f64,
}

impl BucketBounds {
    pub const ABSENT: f64 = f64::INFINITY;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlabdbParams {
    pub tau_alpha: f64,
    pub tau_o: f64,
    pub front_layers: usize,
    pub back_layers: usize,
    pub policy: MergePolicy,
}

impl Default for MlabdbParams {
    fn default() -> Self {
        Self {
            tau_alpha: 0.2,
            tau_o: 0.98,
            front_layers: 2,
            back_layers: 4,
            policy: MergePolicy::Deepest,
        }
    }
}

impl MlabdbParams {
    pub fn validate(&self) -> Result<(), MlabError> {
        for t in [self.tau_alpha, self.tau_o] {
            if !(0.0..=1.0).contains(&t) {
                return Err(MlabError::Threshold(t));
            }
        }
        if self.tau_alpha > self.tau_o {
            return Err(MlabError::ThresholdOrder(self.tau_alpha, self.tau_o));
        }
        if self.front_layers == 0 || self.back_layers == 0 {
            return Err(MlabError::ZeroCapacity);
        }
        Ok(())
    }
}

/// First pass: nearest depth reaching each opacity threshold.
pub fn mlabdb_pass1(fragments: &[Fragment], tau_alpha: f64, tau_o: f64) -> BucketBounds {
    let mut b = BucketBounds {
        z_min: BucketBounds::ABSENT,
        z_o: BucketBounds::ABSENT,
    };
    for f in fragments {
        if f.alpha >= tau_alpha {
            b.z_min = b.z_min.min(f.depth);
        }
        if f.alpha >= tau_o {
            b.z_o = b.z_o.min(f.depth);
        }
    }
    b
}

/// Second pass: bucket by depth, blend each bucket, resolve front bucket over back bucket.
/// Returns the color and the number of discarded fragments.
pub fn mlabdb_pass2(
    fragments: &[Fragment],
    bounds: BucketBounds,
    front: &mut BlendArray,
    back: &mut BlendArray,
    background: [f64; 3],
) -> (Rgba, u64) {
    front.clear();
    back.clear();
    let mut discarded = 0;
    for f in fragments {
        if f.depth < bounds.z_min {
            front.insert(f);
        } else if f.depth <= bounds.z_o {
            back.insert(f);
        } else {
            discarded += 1;
        }
    }
    let rgba = resolve_layers(front.layers().iter().chain(back.layers()), background);
    (rgba, discarded)
}

/// Two-pass MLAB with depth buckets.
pub fn mlabdb_render(
    fb: &FragmentBuffer,
    background: [f64; 3],
    params: MlabdbParams,
) -> Result<(Framebuffer, MlabStats), MlabError> {
    params.validate()?;
    let front = BlendArray::new(params.front_layers, params.policy)?;
    let back = BlendArray::new(params.back_layers, params.policy)?;
    let results: Vec<(Rgba, (u64, u64))> = (0..fb.pixel_count())
        .into_par_iter()
        .map_init(
            || (front.clone(), back.clone()),
            |(front, back), i| {
                let list = fb.pixel(i);
                let bounds = mlabdb_pass1(list, params.tau_alpha, params.tau_o);
                let merges_before = front.merges() + back.merges();
                let (rgba, discarded) = mlabdb_pass2(list, bounds, front, back, background);
                (rgba, (front.merges() + back.merges() - merges_before, discarded))
            },
        )
        .collect();
    let (merges, discarded) = results.iter().fold((0, 0), |acc, r| (acc.0 + r.1 .0, acc.1 + r.1 .1));
    let pixels = results.into_iter().map(|r| (r.0, 0)).collect();
    Ok(collect_framebuffer(fb, background, pixels, |_| MlabStats {
        merges,
        discarded,
    }))
}

fn collect_framebuffer(
    fb: &FragmentBuffer,
    background: [f64; 3],
    results: Vec<(Rgba, u64)>,
    stats: impl FnOnce(u64) -> MlabStats,
) -> (Framebuffer, MlabStats) {
    let total = results.iter().map(|r| r.1).sum();
    let out = Framebuffer {
        width: fb.width(),
        height: fb.height(),
        background,
        pixels: results.into_iter().map(|r| r.0).collect(),
    };
    (out, stats(total))
}
