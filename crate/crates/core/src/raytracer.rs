//! Image-order renderer: iterative closest-hit queries against a BVH, blended front to back.

use crate::camera::Camera;
use crate::exact::Framebuffer;
use crate::geometry::{apply_transfer, LineSet, Rgba, TransferFunction, TriMesh};
use crate::intersect::{intersect_ray_tube, intersect_triangle, WatertightRay};
use crate::math::{Aabb, Ray, Vec3};
use crate::raster::{shade_fragment, Shading};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RtError {
    #[error("cannot build a hierarchy over zero primitives")]
    Empty,
    #[error("leaf size must be at least 1")]
    LeafSize,
    #[error("restart offset must be positive, got {0}")]
    Epsilon(f64),
    #[error("pixel ({x}, {y}) exceeded {cap} hit iterations; the restart offset is likely too small")]
    IterationCap { x: usize, y: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    bounds: Aabb,
    /// First primitive for leaves, left child for inner nodes (right child follows it).
    first: u32,
    /// Primitive count; zero marks an inner node.
    count: u32,
}

/// Bounding volume hierarchy over primitive boxes, split at the median of the longest axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Primitive indices in leaf order.
    prims: Vec<u32>,
    leaf_size: usize,
}

impl Bvh {
    pub fn build(boxes: &[Aabb], leaf_size: usize) -> Result<Self, RtError> {
        if boxes.is_empty() {
            return Err(RtError::Empty);
        }
        if leaf_size == 0 {
            return Err(RtError::LeafSize);
        }
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * boxes.len() / leaf_size + 1),
            prims: (0..boxes.len() as u32).collect(),
            leaf_size,
        };
        let centroids: Vec<Vec3> = boxes.iter().map(Aabb::center).collect();
        bvh.nodes.push(Node {
            bounds: Aabb::EMPTY,
            first: 0,
            count: 0,
        });
        // (node, start, end) work items
        let mut work = vec![(0usize, 0usize, boxes.len())];
        while let Some((node, start, end)) = work.pop() {
            let slice = &mut bvh.prims[start..end];
            let bounds = slice.iter().fold(Aabb::EMPTY, |b, &p| b.union(boxes[p as usize]));
            bvh.nodes[node].bounds = bounds;
            if slice.len() <= leaf_size {
                bvh.nodes[node].first = start as u32;
                bvh.nodes[node].count = slice.len() as u32;
                continue;
            }
            let cb = Aabb::from_points(slice.iter().map(|&p| centroids[p as usize]));
            let axis = cb.extent().max_abs_axis();
            slice.sort_by(|&a, &b| {
                centroids[a as usize][axis]
                    .total_cmp(&centroids[b as usize][axis])
                    .then(a.cmp(&b))
            });
            let mid = start + slice.len() / 2;
            let left = bvh.nodes.len();
            for _ in 0..2 {
                bvh.nodes.push(Node {
                    bounds: Aabb::EMPTY,
                    first: 0,
                    count: 0,
                });
            }
            bvh.nodes[node].first = left as u32;
            work.push((left + 1, mid, end));
            work.push((left, start, mid));
        }
        Ok(bvh)
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Structural audit: every primitive sits in exactly one leaf no larger than the
    /// leaf size, primitive boxes lie in their leaf box, child boxes in their parent's.
    pub fn validate(&self, boxes: &[Aabb]) -> bool {
        let mut seen = vec![0u32; boxes.len()];
        let inside = |inner: &Aabb, outer: &Aabb| outer.contains(inner);
        for n in &self.nodes {
            if n.count > 0 {
                if n.count as usize > self.leaf_size {
                    return false;
                }
                for &p in &self.prims[n.first as usize..(n.first + n.count) as usize] {
                    seen[p as usize] += 1;
                    if !inside(&boxes[p as usize], &n.bounds) {
                        return false;
                    }
                }
            } else {
                let l = &self.nodes[n.first as usize];
                let r = &self.nodes[n.first as usize + 1];
                if !inside(&l.bounds, &n.bounds) || !inside(&r.bounds, &n.bounds) {
                    return false;
                }
            }
        }
        seen.iter().all(|&c| c == 1)
    }

    /// Nearest primitive hit with `t` in `(t_min, t_max)`; equal `t` goes to the lower index.
    /// `hit(prim, t_min, t_max)` returns the primitive's nearest `t` in that range.
    pub fn closest(
        &self,
        ray: &Ray,
        t_min: f64,
        t_max: f64,
        mut hit: impl FnMut(u32, f64, f64) -> Option<f64>,
    ) -> Option<(f64, u32)> {
        let mut best: Option<(f64, u32)> = None;
        let mut stack = Vec::with_capacity(64);
        self.nodes[0].bounds.intersect(ray, t_min, t_max)?;
        stack.push(0u32);
        while let Some(ni) = stack.pop() {
            let n = &self.nodes[ni as usize];
            let limit = best.map_or(t_max, |b| b.0);
            match n.bounds.intersect(ray, t_min, limit) {
                Some(_) => {}
                None => continue,
            }
            if n.count > 0 {
                for &p in &self.prims[n.first as usize..(n.first + n.count) as usize] {
                    // allow equal t so the index tie-break can apply
                    let upper = best.map_or(t_max, |b| next_up(b.0));
                    if let Some(t) = hit(p, t_min, upper) {
                        let better = match best {
                            None => true,
                            Some((bt, bp)) => t < bt || (t == bt && p < bp),
                        };
                        if better {
                            best = Some((t, p));
                        }
                    }
                }
            } else {
                let (l, r) = (n.first, n.first + 1);
                let tl = self.nodes[l as usize].bounds.intersect(ray, t_min, limit).map(|x| x.0);
                let tr = self.nodes[r as usize].bounds.intersect(ray, t_min, limit).map(|x| x.0);
                match (tl, tr) {
                    (Some(a), Some(b)) if a <= b => {
                        stack.push(r);
                        stack.push(l);
                    }
                    (Some(_), Some(_)) => {
                        stack.push(l);
                        stack.push(r);
                    }
                    (Some(_), None) => stack.push(l),
                    (None, Some(_)) => stack.push(r),
                    (None, None) => {}
                }
            }
        }
        best
    }
}

fn next_up(x: f64) -> f64 {
    if x.is_finite() {
        f64::from_bits(if x >= 0.0 { x.to_bits() + 1 } else { x.to_bits() - 1 })
    } else {
        x
    }
}

/// Surface hit with everything needed for shading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub primitive: u32,
    pub normal: Vec3,
    pub attribute: f64,
}

/// A ray-queryable scene.
pub trait HitScene: Sync {
    fn closest_hit(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit>;
    fn bounds(&self) -> Aabb;
}

/// Tube triangle mesh with its hierarchy.
pub struct TriangleScene<'a> {
    mesh: &'a TriMesh,
    bvh: Bvh,
}

impl<'a> TriangleScene<'a> {
    pub fn new(mesh: &'a TriMesh, leaf_size: usize) -> Result<Self, RtError> {
        let boxes: Vec<Aabb> = (0..mesh.triangle_count())
            .map(|i| Aabb::from_points(mesh.triangle_positions(i)))
            .collect();
        Ok(Self {
            mesh,
            bvh: Bvh::build(&boxes, leaf_size)?,
        })
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    /// Every triangle hit in `(t_min, t_max)`, unsorted. Used as a brute-force oracle.
    pub fn all_hits(&self, ray: &Ray, t_min: f64, t_max: f64) -> Vec<Hit> {
        let w = WatertightRay::new(ray);
        (0..self.mesh.triangle_count() as u32)
            .filter_map(|i| self.hit_triangle(&w, i, t_min, t_max))
            .collect()
    }

    fn hit_triangle(&self, w: &WatertightRay, tri: u32, t_min: f64, t_max: f64) -> Option<Hit> {
        let h = intersect_triangle(w, self.mesh.triangle_positions(tri as usize), t_min, t_max)?;
        let [a, b, c] = self.mesh.triangles[tri as usize].map(|i| i as usize);
        let m = self.mesh;
        let normal = (m.normals[a] * h.u + m.normals[b] * h.v + m.normals[c] * h.w)
            .try_normalize()
            .unwrap_or(Vec3::Z);
        Some(Hit {
            t: h.t,
            primitive: tri,
            normal,
            attribute: m.attributes[a] * h.u + m.attributes[b] * h.v + m.attributes[c] * h.w,
        })
    }
}

impl HitScene for TriangleScene<'_> {
    fn closest_hit(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        let w = WatertightRay::new(ray);
        let (_, tri) = self.bvh.closest(ray, t_min, t_max, |p, lo, hi| {
            intersect_triangle(&w, self.mesh.triangle_positions(p as usize), lo, hi).map(|h| h.t)
        })?;
        self.hit_triangle(&w, tri, t_min, t_max)
    }

    fn bounds(&self) -> Aabb {
        self.bvh.bounds()
    }
}

/// One straight tube piece with attributes at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeSegment {
    pub a: Vec3,
    pub b: Vec3,
    pub attr_a: f64,
    pub attr_b: f64,
}

impl TubeSegment {
    /// Nearest hit in `(t_min, t_max)`.
    pub fn hit(&self, ray: &Ray, radius: f64, t_min: f64, t_max: f64) -> Option<(f64, f64, Vec3)> {
        intersect_ray_tube(ray, self.a, self.b, radius)
            .into_iter()
            .flatten()
            .find(|h| h.t > t_min && h.t < t_max)
            .map(|h| (h.t, self.attr_a + (self.attr_b - self.attr_a) * h.s, h.normal))
    }

    pub fn bounds(&self, radius: f64) -> Aabb {
        Aabb::from_points([self.a, self.b]).expand(radius)
    }
}

/// Analytic tubes around the original polyline segments.
pub struct TubeScene {
    segments: Vec<TubeSegment>,
    radius: f64,
    bvh: Bvh,
}

impl TubeScene {
    pub fn new(lines: &LineSet, radius: f64, leaf_size: usize) -> Result<Self, RtError> {
        let segments: Vec<TubeSegment> = lines
            .segments()
            .map(|(_, _, va, vb)| TubeSegment {
                a: va.position,
                b: vb.position,
                attr_a: va.attribute,
                attr_b: vb.attribute,
            })
            .collect();
        let boxes: Vec<Aabb> = segments.iter().map(|s| s.bounds(radius)).collect();
        Ok(Self {
            bvh: Bvh::build(&boxes, leaf_size)?,
            segments,
            radius,
        })
    }
}

impl HitScene for TubeScene {
    fn closest_hit(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        let (t, seg) = self.bvh.closest(ray, t_min, t_max, |p, lo, hi| {
            self.segments[p as usize].hit(ray, self.radius, lo, hi).map(|h| h.0)
        })?;
        let (_, attribute, normal) = self.segments[seg as usize].hit(ray, self.radius, t_min, next_up(t))?;
        Some(Hit {
            t,
            primitive: seg,
            normal,
            attribute,
        })
    }

    fn bounds(&self) -> Aabb {
        self.bvh.bounds()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtParams {
    /// Restart offset; `None` uses `1e-4` times the scene diagonal.
    pub epsilon: Option<f64>,
    pub leaf_size: usize,
    /// Hit iterations allowed per pixel before the render fails.
    pub max_iterations: usize,
    /// Stop once transmittance drops below this.
    pub min_transmittance: f64,
    pub shading: Shading,
}

impl Default for RtParams {
    fn default() -> Self {
        Self {
            epsilon: None,
            leaf_size: 4,
            max_iterations: 100_000,
            min_transmittance: 1e-3,
            shading: Shading::default(),
        }
    }
}

impl RtParams {
    pub fn epsilon_for(&self, bounds: &Aabb) -> f64 {
        self.epsilon.unwrap_or(1e-4 * bounds.diagonal().max(1e-12))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RtStats {
    pub iterations: u64,
    pub max_iterations: u64,
    pub blended_hits: u64,
}

/// Parameter range along a primary ray whose view depth lies in `[near, far]`.
pub(crate) fn view_range(camera: &Camera, forward: Vec3, ray: &Ray) -> (f64, f64) {
    let cos = ray.dir.dot(forward);
    (camera.near / cos, camera.far / cos)
}

/// Repeated closest-hit queries from `t_prev + ε`, blended front to back until a miss
/// or until the transmittance falls below the threshold. Returns color, hit iterations
/// and blended hit count.
#[allow(clippy::too_many_arguments)]
pub fn trace_blend(
    scene: &dyn HitScene,
    ray: &Ray,
    t_range: (f64, f64),
    tf: &TransferFunction,
    background: [f64; 3],
    epsilon: f64,
    params: &RtParams,
) -> Result<(Rgba, usize, usize), usize> {
    let mut c = [0.0; 3];
    let mut t = 1.0;
    let mut t_min = t_range.0;
    let mut iterations = 0;
    let mut blended = 0;
    let view = -ray.dir;
    loop {
        if iterations >= params.max_iterations {
            return Err(iterations);
        }
        iterations += 1;
        let Some(h) = scene.closest_hit(ray, t_min, t_range.1) else {
            break;
        };
        let rgba = shade_fragment(apply_transfer(tf, h.attribute), h.normal, view, &params.shading);
        let w = t * rgba[3];
        for k in 0..3 {
            c[k] += w * rgba[k];
        }
        t *= 1.0 - rgba[3];
        blended += 1;
        if t < params.min_transmittance {
            break;
        }
        t_min = h.t + epsilon;
    }
    let rgba = [
        (c[0] + t * background[0]).clamp(0.0, 1.0),
        (c[1] + t * background[1]).clamp(0.0, 1.0),
        (c[2] + t * background[2]).clamp(0.0, 1.0),
        1.0 - t,
    ];
    Ok((rgba, iterations, blended))
}

/// One primary ray per pixel center.
pub fn raytrace_image(
    scene: &dyn HitScene,
    camera: &Camera,
    tf: &TransferFunction,
    background: [f64; 3],
    params: &RtParams,
) -> Result<(Framebuffer, RtStats), RtError> {
    let epsilon = params.epsilon_for(&scene.bounds());
    if !(epsilon > 0.0) {
        return Err(RtError::Epsilon(epsilon));
    }
    let view = camera.view_transform();
    let results: Vec<Result<(Rgba, usize, usize), RtError>> = (0..camera.pixel_count())
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % camera.width, i / camera.width);
            let ray = view.screen_ray(x as f64 + 0.5, y as f64 + 0.5);
            let range = view_range(camera, view.forward, &ray);
            trace_blend(scene, &ray, range, tf, background, epsilon, params).map_err(|_| RtError::IterationCap {
                x,
                y,
                cap: params.max_iterations,
            })
        })
        .collect();
    let mut stats = RtStats::default();
    let mut pixels = Vec::with_capacity(results.len());
    for r in results {
        let (rgba, it, blended) = r?;
        stats.iterations += it as u64;
        stats.max_iterations = stats.max_iterations.max(it as u64);
        stats.blended_hits += blended as u64;
        pixels.push(rgba);
    }
    Ok((
        Framebuffer {
            width: camera.width,
            height: camera.height,
            background,
            pixels,
        },
        stats,
    ))
}
