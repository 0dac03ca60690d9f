//! Software rasterizer producing per-pixel fragment streams.
//!
//! Every covered pixel center yields one fragment per triangle, front- and
//! back-facing alike. Coverage ties on edges follow the top-left rule, so
//! triangles sharing an edge never both cover (or both miss) a pixel.
//! Within a pixel, fragments appear in triangle submission order.
//!
//! Work is split into horizontal bands. Each band walks its binned triangles in
//! submission order, so bands can run in parallel without reordering fragments.

use crate::camera::{Camera, ViewTransform};
use crate::geometry::{apply_transfer, Rgba, TransferFunction, TriMesh};
use crate::math::Vec3;
use rayon::prelude::*;
use thiserror::Error;

const BAND_ROWS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum FragmentBufferError {
    #[error("expected {expected} pixel lists, got {got}")]
    PixelCount { expected: usize, got: usize },
    #[error("pixel {pixel}: submission indices must be strictly increasing")]
    SubmissionOrder { pixel: usize },
    #[error("pixel {pixel}: fragment values out of range")]
    FragmentRange { pixel: usize },
}

/// One rasterized sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    /// View-space depth along the camera's forward axis.
    pub depth: f64,
    /// Straight (not premultiplied) shaded color.
    pub color: [f64; 3],
    pub alpha: f64,
    /// Index of the triangle that produced the fragment.
    pub submission: u32,
}

impl Fragment {
    /// Rounds color and opacity to 8 bits per channel, as a packed RGBA8 fragment store would.
    pub fn quantized_rgba8(&self) -> Fragment {
        let q = |v: f64| ((v.clamp(0.0, 1.0) * 255.0 + 0.5).floor()) / 255.0;
        Fragment {
            color: self.color.map(q),
            alpha: q(self.alpha),
            ..*self
        }
    }

    fn is_valid(&self) -> bool {
        self.depth.is_finite()
            && (0.0..=1.0).contains(&self.alpha)
            && self.color.iter().all(|c| (0.0..=1.0).contains(c))
    }
}

/// Per-pixel fragment lists in submission order, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBuffer {
    width: usize,
    height: usize,
    offsets: Vec<usize>,
    fragments: Vec<Fragment>,
}

impl FragmentBuffer {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            offsets: vec![0; width * height + 1],
            fragments: Vec::new(),
        }
    }

    /// Builds a buffer from explicit per-pixel lists (row-major).
    pub fn from_pixel_lists(
        width: usize,
        height: usize,
        pixels: Vec<Vec<Fragment>>,
    ) -> Result<Self, FragmentBufferError> {
        if pixels.len() != width * height {
            return Err(FragmentBufferError::PixelCount {
                expected: width * height,
                got: pixels.len(),
            });
        }
        let mut offsets = Vec::with_capacity(pixels.len() + 1);
        let mut fragments = Vec::new();
        offsets.push(0);
        for (pixel, list) in pixels.into_iter().enumerate() {
            if list.windows(2).any(|w| w[1].submission <= w[0].submission) {
                return Err(FragmentBufferError::SubmissionOrder { pixel });
            }
            if !list.iter().all(Fragment::is_valid) {
                return Err(FragmentBufferError::FragmentRange { pixel });
            }
            fragments.extend(list);
            offsets.push(fragments.len());
        }
        Ok(Self {
            width,
            height,
            offsets,
            fragments,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Global fragment count.
    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn pixel(&self, index: usize) -> &[Fragment] {
        &self.fragments[self.offsets[index]..self.offsets[index + 1]]
    }

    pub fn pixel_at(&self, x: usize, y: usize) -> &[Fragment] {
        self.pixel(y * self.width + x)
    }

    pub fn pixels(&self) -> impl ExactSizeIterator<Item = &[Fragment]> + '_ {
        (0..self.pixel_count()).map(move |i| self.pixel(i))
    }

    pub fn max_depth_complexity(&self) -> usize {
        self.offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Copy with every fragment packed to RGBA8 precision.
    pub fn quantized_rgba8(&self) -> FragmentBuffer {
        FragmentBuffer {
            fragments: self.fragments.iter().map(Fragment::quantized_rgba8).collect(),
            ..self.clone()
        }
    }

    /// Applies `f` to every per-pixel list; lists must keep strictly increasing submissions.
    pub fn map_pixels(
        &self,
        mut f: impl FnMut(usize, &[Fragment]) -> Vec<Fragment>,
    ) -> Result<FragmentBuffer, FragmentBufferError> {
        let lists = (0..self.pixel_count()).map(|i| f(i, self.pixel(i))).collect();
        Self::from_pixel_lists(self.width, self.height, lists)
    }
}

/// Per-pixel fragment counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthComplexity {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
    pub total: u64,
}

impl DepthComplexity {
    pub fn max(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

pub fn depth_complexity(fb: &FragmentBuffer) -> DepthComplexity {
    let counts: Vec<u32> = fb.pixels().map(|p| p.len() as u32).collect();
    DepthComplexity {
        width: fb.width,
        height: fb.height,
        total: counts.iter().map(|&c| c as u64).sum(),
        counts,
    }
}

/// Pixels away from the border whose 3x3 neighborhood shares one fragment count.
/// Coverage differences between rasterization and ray sampling stay outside this mask.
pub fn interior_mask(dc: &DepthComplexity) -> Vec<bool> {
    let (w, h) = (dc.width, dc.height);
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
                return false;
            }
            let c = dc.counts[i];
            (y - 1..=y + 1).all(|yy| (x - 1..=x + 1).all(|xx| dc.counts[yy * w + xx] == c))
        })
        .collect()
}

/// Blinn-Phong coefficients for the headlight model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shading {
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    pub shininess: f64,
}

impl Default for Shading {
    fn default() -> Self {
        Self {
            ambient: 0.1,
            diffuse: 0.85,
            specular: 0.05,
            shininess: 16.0,
        }
    }
}

/// Headlight Blinn-Phong: the light sits at the eye, so the half vector equals the
/// view direction. Diffuse uses `|n·l|` so back faces of transparent tubes are lit.
/// Opacity passes through untouched.
pub fn shade_fragment(base: Rgba, normal: Vec3, view_dir: Vec3, shading: &Shading) -> Rgba {
    let n_dot_l = normal.dot(view_dir);
    let half = view_dir;
    let diffuse = shading.ambient + shading.diffuse * n_dot_l.abs();
    let specular = shading.specular * normal.dot(half).max(0.0).powf(shading.shininess);
    [
        (base[0] * diffuse + specular).clamp(0.0, 1.0),
        (base[1] * diffuse + specular).clamp(0.0, 1.0),
        (base[2] * diffuse + specular).clamp(0.0, 1.0),
        base[3],
    ]
}

/// Rasterizes with the default shading coefficients.
pub fn rasterize(mesh: &TriMesh, camera: &Camera, tf: &TransferFunction) -> FragmentBuffer {
    PreparedScene::new(mesh, camera, tf, Shading::default()).rasterize()
}

#[derive(Debug, Clone, Copy)]
struct ClipVertex {
    view: Vec3,
    normal: Vec3,
    attribute: f64,
}

impl ClipVertex {
    fn lerp(&self, o: &ClipVertex, t: f64) -> ClipVertex {
        ClipVertex {
            view: self.view.lerp(o.view, t),
            normal: self.normal.lerp(o.normal, t),
            attribute: self.attribute + (o.attribute - self.attribute) * t,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_z: f64,
    normal_over_z: Vec3,
    attribute_over_z: f64,
}

#[derive(Debug, Clone)]
struct ScreenTriangle {
    v: [ScreenVertex; 3],
    submission: u32,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    inv_area: f64,
}

/// Edge function of `a→b` at `p`, evaluated with canonically ordered endpoints so that
/// `edge(a, b, p) == -edge(b, a, p)` holds bit-exactly.
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let raw = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    if (a.0, a.1) <= (b.0, b.1) {
        raw(a, b)
    } else {
        -raw(b, a)
    }
}

/// Top-left ownership for positively oriented triangles in y-down screen space.
fn owns_edge(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Mesh transformed to screen space and binned into bands, reusable across passes.
pub struct PreparedScene<'a> {
    camera: Camera,
    view: ViewTransform,
    tf: &'a TransferFunction,
    shading: Shading,
    triangles: Vec<ScreenTriangle>,
    bands: Vec<Vec<u32>>,
}

impl<'a> PreparedScene<'a> {
    pub fn new(mesh: &TriMesh, camera: &Camera, tf: &'a TransferFunction, shading: Shading) -> Self {
        let view = camera.view_transform();
        let mut triangles = Vec::new();
        for (ti, tri) in mesh.triangles.iter().enumerate() {
            let verts = tri.map(|i| ClipVertex {
                view: view.to_view(mesh.positions[i as usize]),
                normal: mesh.normals[i as usize],
                attribute: mesh.attributes[i as usize],
            });
            if verts.iter().all(|v| v.view.z > camera.far) {
                continue;
            }
            let poly = clip_near(&verts, camera.near);
            for k in 1..poly.len().saturating_sub(1) {
                if let Some(st) = setup_triangle([poly[0], poly[k], poly[k + 1]], ti as u32, &view, camera) {
                    triangles.push(st);
                }
            }
        }
        let n_bands = camera.height.div_ceil(BAND_ROWS);
        let mut bands = vec![Vec::new(); n_bands];
        for (i, t) in triangles.iter().enumerate() {
            for band in &mut bands[t.y0 / BAND_ROWS..=t.y1 / BAND_ROWS] {
                band.push(i as u32);
            }
        }
        Self {
            camera: *camera,
            view,
            tf,
            shading,
            triangles,
            bands,
        }
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    /// Emits every fragment in one band as `(pixel index, fragment)`, in submission order.
    fn scan_band(&self, band: usize, mut emit: impl FnMut(usize, Fragment)) {
        let row0 = band * BAND_ROWS;
        let row1 = (row0 + BAND_ROWS).min(self.camera.height);
        let w = self.camera.width;
        for &ti in &self.bands[band] {
            let t = &self.triangles[ti as usize];
            let p = t.v.map(|v| (v.x, v.y));
            let owned = [owns_edge(p[1], p[2]), owns_edge(p[2], p[0]), owns_edge(p[0], p[1])];
            for py in t.y0.max(row0)..=t.y1.min(row1 - 1) {
                let cy = py as f64 + 0.5;
                for px in t.x0..=t.x1 {
                    let c = (px as f64 + 0.5, cy);
                    let e = [edge(p[1], p[2], c), edge(p[2], p[0], c), edge(p[0], p[1], c)];
                    let inside = (0..3).all(|k| e[k] > 0.0 || (e[k] == 0.0 && owned[k]));
                    if !inside {
                        continue;
                    }
                    if let Some(frag) = self.shade(t, e, c) {
                        emit(py * w + px, frag);
                    }
                }
            }
        }
    }

    fn shade(&self, t: &ScreenTriangle, e: [f64; 3], c: (f64, f64)) -> Option<Fragment> {
        let l = e.map(|v| v * t.inv_area);
        let inv_z = l[0] * t.v[0].inv_z + l[1] * t.v[1].inv_z + l[2] * t.v[2].inv_z;
        let z = 1.0 / inv_z;
        if !(z >= self.camera.near && z <= self.camera.far) {
            return None;
        }
        let attribute =
            z * (l[0] * t.v[0].attribute_over_z + l[1] * t.v[1].attribute_over_z + l[2] * t.v[2].attribute_over_z);
        let normal = (t.v[0].normal_over_z * l[0] + t.v[1].normal_over_z * l[1] + t.v[2].normal_over_z * l[2])
            .try_normalize()
            .unwrap_or(-self.view.forward);
        let view_dir = -self.view.screen_ray(c.0, c.1).dir;
        let base = apply_transfer(self.tf, attribute);
        let rgba = shade_fragment(base, normal, view_dir, &self.shading);
        Some(Fragment {
            depth: z,
            color: [rgba[0], rgba[1], rgba[2]],
            alpha: rgba[3],
            submission: t.submission,
        })
    }

    /// Full single-pass rasterization into a fragment buffer.
    pub fn rasterize(&self) -> FragmentBuffer {
        let (w, h) = (self.camera.width, self.camera.height);
        let per_band: Vec<(Vec<usize>, Vec<Fragment>)> = (0..self.bands.len())
            .into_par_iter()
            .map(|band| {
                let row0 = band * BAND_ROWS;
                let n_px = (BAND_ROWS.min(h - row0)) * w;
                let mut raw: Vec<(u32, Fragment)> = Vec::new();
                self.scan_band(band, |px, f| raw.push(((px - row0 * w) as u32, f)));
                // counting sort by pixel; stable, so submission order survives
                let mut counts = vec![0usize; n_px + 1];
                for &(px, _) in &raw {
                    counts[px as usize + 1] += 1;
                }
                for i in 0..n_px {
                    counts[i + 1] += counts[i];
                }
                let mut cursor = counts.clone();
                let mut sorted = vec![
                    Fragment {
                        depth: 0.0,
                        color: [0.0; 3],
                        alpha: 0.0,
                        submission: 0
                    };
                    raw.len()
                ];
                for (px, f) in raw {
                    sorted[cursor[px as usize]] = f;
                    cursor[px as usize] += 1;
                }
                (counts, sorted)
            })
            .collect();
        let mut offsets = Vec::with_capacity(w * h + 1);
        let mut fragments = Vec::with_capacity(per_band.iter().map(|b| b.1.len()).sum());
        offsets.push(0);
        for (counts, frags) in per_band {
            let base = fragments.len();
            offsets.extend(counts[1..].iter().map(|c| c + base));
            fragments.extend(frags);
        }
        FragmentBuffer {
            width: w,
            height: h,
            offsets,
            fragments,
        }
    }

    /// Streams every fragment into per-pixel state. `visit` receives the state of the
    /// fragment's pixel; pixels are visited in parallel across bands but each pixel
    /// sees its fragments in submission order.
    pub fn for_each_fragment<S: Send>(&self, states: &mut [S], visit: impl Fn(&mut S, Fragment) + Sync) {
        let w = self.camera.width;
        assert_eq!(states.len(), self.camera.pixel_count());
        states
            .par_chunks_mut(BAND_ROWS * w)
            .enumerate()
            .for_each(|(band, chunk)| {
                let base = band * BAND_ROWS * w;
                self.scan_band(band, |px, f| visit(&mut chunk[px - base], f));
            });
    }
}

/// Clips a triangle against `z >= near` in view space (Sutherland-Hodgman).
/// Crossing points are computed from canonically ordered endpoints so that
/// neighboring triangles agree on the shared edge.
fn clip_near(v: &[ClipVertex; 3], near: f64) -> Vec<ClipVertex> {
    if v.iter().all(|p| p.view.z >= near) {
        return v.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = &v[i];
        let b = &v[(i + 1) % 3];
        let a_in = a.view.z >= near;
        let b_in = b.view.z >= near;
        if a_in {
            out.push(*a);
        }
        if a_in != b_in {
            let (p, q) = if a.view.to_array() <= b.view.to_array() {
                (a, b)
            } else {
                (b, a)
            };
            let t = (near - p.view.z) / (q.view.z - p.view.z);
            let mut c = p.lerp(q, t);
            c.view.z = near;
            out.push(c);
        }
    }
    out
}

fn setup_triangle(
    v: [ClipVertex; 3],
    submission: u32,
    view: &ViewTransform,
    camera: &Camera,
) -> Option<ScreenTriangle> {
    let mut sv = v.map(|c| {
        let (x, y) = view.project(c.view);
        let inv_z = 1.0 / c.view.z;
        ScreenVertex {
            x,
            y,
            inv_z,
            normal_over_z: c.normal * inv_z,
            attribute_over_z: c.attribute * inv_z,
        }
    });
    let mut area = edge((sv[0].x, sv[0].y), (sv[1].x, sv[1].y), (sv[2].x, sv[2].y));
    if area < 0.0 {
        sv.swap(1, 2);
        area = -area;
    }
    if !(area > 0.0) || !area.is_finite() {
        return None;
    }
    let min_x = sv.iter().map(|v| v.x).fold(f64::INFINITY, f64::min);
    let max_x = sv.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = sv.iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
    let max_y = sv.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);
    // pixel centers (i + 0.5) inside [min, max]
    let lo = |m: f64| (m - 0.5).ceil().max(0.0);
    let hi = |m: f64, n: usize| (m - 0.5).floor().min(n as f64 - 1.0);
    let (x0, x1) = (lo(min_x), hi(max_x, camera.width));
    let (y0, y1) = (lo(min_y), hi(max_y, camera.height));
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some(ScreenTriangle {
        v: sv,
        submission,
        x0: x0 as usize,
        x1: x1 as usize,
        y0: y0 as usize,
        y1: y1 as usize,
        inv_area: 1.0 / area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn quad(z: f64, half: f64, attribute: f64) -> TriMesh {
        let p = [
            Vec3::new(-half, -half, z),
            Vec3::new(half, -half, z),
            Vec3::new(half, half, z),
            Vec3::new(-half, half, z),
        ];
        TriMesh {
            positions: p.to_vec(),
            normals: vec![-Vec3::Z; 4],
            attributes: vec![attribute; 4],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        }
    }

    fn camera(w: usize, h: usize) -> Camera {
        Camera::new(Vec3::ZERO, Vec3::Z, Vec3::Y, 60f64.to_radians(), 0.1, 10.0, w, h).unwrap()
    }

    fn tf() -> TransferFunction {
        TransferFunction::from_pairs(&[(0.0, [1.0, 0.0, 0.0, 0.5]), (1.0, [0.0, 0.0, 1.0, 0.5])]).unwrap()
    }

    #[test]
    fn full_viewport_coverage() {
        let cam = camera(32, 24);
        let fb = rasterize(&quad(1.0, 50.0, 0.0), &cam, &tf());
        assert_eq!(fb.len(), 32 * 24);
        assert!(fb.pixels().all(|p| p.len() == 1));
        assert!(fb.pixels().all(|p| (p[0].depth - 1.0).abs() < 1e-12));
    }

    #[test]
    fn stacked_quads_keep_submission_order() {
        let cam = camera(16, 12);
        let mut mesh = quad(2.0, 50.0, 0.0);
        mesh.append(&quad(1.0, 50.0, 1.0));
        let fb = rasterize(&mesh, &cam, &tf());
        for p in fb.pixels() {
            assert_eq!(p.len(), 2);
            assert!(p[0].submission < p[1].submission);
            assert!(p[0].submission < 2 && p[1].submission >= 2);
            assert!((p[0].depth - 2.0).abs() < 1e-12);
        }
        let dc = depth_complexity(&fb);
        assert!(dc.counts.iter().all(|&c| c == 2));
        assert_eq!(dc.total as usize, fb.len());
    }

    #[test]
    fn behind_far_plane_is_empty() {
        let cam = camera(16, 12);
        let fb = rasterize(&quad(20.0, 500.0, 0.0), &cam, &tf());
        assert!(fb.is_empty());
        assert_eq!(depth_complexity(&fb).max(), 0);
    }

    #[test]
    fn interior_mask_excludes_edges_and_borders() {
        let mut counts = vec![1u32; 25];
        counts[12] = 2;
        let dc = DepthComplexity {
            width: 5,
            height: 5,
            counts,
            total: 26,
        };
        let m = interior_mask(&dc);
        assert!(m.iter().all(|&b| !b));
        let dc = DepthComplexity {
            width: 5,
            height: 5,
            counts: vec![3; 25],
            total: 75,
        };
        assert_eq!(interior_mask(&dc).iter().filter(|&&b| b).count(), 9);
    }

    #[test]
    fn empty_buffer_depth_complexity() {
        let fb = FragmentBuffer::empty(4, 3);
        let dc = depth_complexity(&fb);
        assert_eq!(dc.counts, vec![0; 12]);
        assert_eq!(dc.total, 0);
    }

    #[test]
    fn near_plane_clipping_covers_screen() {
        // plane tilted through the eye's depth range; clipped part must still rasterize consistently
        let cam = camera(24, 16);
        let mesh = TriMesh {
            positions: vec![
                Vec3::new(-5.0, -1.0, -1.0),
                Vec3::new(5.0, -1.0, -1.0),
                Vec3::new(5.0, -1.0, 8.0),
                Vec3::new(-5.0, -1.0, 8.0),
            ],
            normals: vec![Vec3::Y; 4],
            attributes: vec![0.5; 4],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        };
        let fb = rasterize(&mesh, &cam, &tf());
        assert!(!fb.is_empty());
        assert!(fb.pixels().all(|p| p.len() <= 1));
        for f in fb.pixels().flatten() {
            assert!(f.depth >= cam.near && f.depth <= cam.far);
        }
    }

    fn grid_mesh(n: usize, flip: bool) -> TriMesh {
        // n x n grid of quads spanning a plane at z = 3, diagonals chosen by `flip`
        let mut m = TriMesh::default();
        for j in 0..=n {
            for i in 0..=n {
                let x = -2.0 + 4.0 * i as f64 / n as f64;
                let y = -1.5 + 3.0 * j as f64 / n as f64;
                m.positions.push(Vec3::new(x, y, 3.0 + 0.3 * x));
                m.normals.push(-Vec3::Z);
                m.attributes.push(0.5);
            }
        }
        let id = |i: usize, j: usize| (j * (n + 1) + i) as u32;
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if flip ^ ((i + j) % 2 == 0) {
                    m.triangles.push([a, b, c]);
                    m.triangles.push([a, c, d]);
                } else {
                    m.triangles.push([a, b, d]);
                    m.triangles.push([b, c, d]);
                }
            }
        }
        m
    }

    #[test]
    fn shared_edges_neither_double_cover_nor_gap() {
        let cam = camera(97, 61);
        let a = rasterize(&grid_mesh(7, false), &cam, &tf());
        let b = rasterize(&grid_mesh(7, true), &cam, &tf());
        assert_eq!(a.len(), b.len());
        assert!(a.pixels().all(|p| p.len() <= 1));
        assert!(b.pixels().all(|p| p.len() <= 1));
        let covered_a: Vec<bool> = a.pixels().map(|p| p.len() == 1).collect();
        let covered_b: Vec<bool> = b.pixels().map(|p| p.len() == 1).collect();
        assert_eq!(covered_a, covered_b);
    }

    #[test]
    fn pixel_aligned_quad_split_two_ways() {
        // vertices land exactly on pixel centers so the top-left rule decides every edge
        let cam = Camera::new(Vec3::ZERO, Vec3::Z, Vec3::Y, 90f64.to_radians(), 0.1, 10.0, 16, 16).unwrap();
        let s = |p: f64| (p - 8.0) / 8.0; // screen coordinate → world at z = 1
        let corners = [(2.5, 3.5), (11.5, 3.5), (11.5, 12.5), (2.5, 12.5)];
        let positions: Vec<Vec3> = corners.iter().map(|&(x, y)| Vec3::new(s(x), -s(y), 1.0)).collect();
        let base = TriMesh {
            positions,
            normals: vec![-Vec3::Z; 4],
            attributes: vec![0.0; 4],
            triangles: vec![],
        };
        let one = TriMesh {
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            ..base.clone()
        };
        let two = TriMesh {
            triangles: vec![[0, 1, 3], [1, 2, 3]],
            ..base
        };
        let fa = rasterize(&one, &cam, &tf());
        let fb = rasterize(&two, &cam, &tf());
        assert_eq!(fa.len(), fb.len());
        assert_eq!(fa.len(), 9 * 9);
        assert!(fa.pixels().chain(fb.pixels()).all(|p| p.len() <= 1));
    }

    #[test]
    fn deterministic() {
        let cam = camera(40, 30);
        let mesh = grid_mesh(5, false);
        assert_eq!(rasterize(&mesh, &cam, &tf()), rasterize(&mesh, &cam, &tf()));
    }

    #[test]
    fn shading_grazing_is_black() {
        let s = Shading {
            ambient: 0.0,
            ..Shading::default()
        };
        let out = shade_fragment([0.5, 0.6, 0.7, 0.3], Vec3::X, Vec3::Z, &s);
        assert_eq!(out, [0.0, 0.0, 0.0, 0.3]);
    }

    #[test]
    fn shading_facing_view_full_brightness() {
        let s = Shading {
            ambient: 0.2,
            diffuse: 0.8,
            specular: 0.0,
            shininess: 16.0,
        };
        let base = [0.5, 0.6, 0.7, 0.3];
        let out = shade_fragment(base, Vec3::Z, Vec3::Z, &s);
        for c in 0..3 {
            assert!((out[c] - base[c]).abs() < 1e-15);
        }
        assert_eq!(out[3], 0.3);
    }

    #[test]
    fn shading_never_touches_alpha() {
        for a in [0.0, 0.25, 1.0] {
            let n = Vec3::new(0.3, 0.4, 0.866).normalize();
            let out = shade_fragment([0.9, 0.9, 0.9, a], n, Vec3::Z, &Shading::default());
            assert_eq!(out[3], a);
        }
    }

    #[test]
    fn from_pixel_lists_validates() {
        let f = |s| Fragment {
            depth: 1.0,
            color: [0.5; 3],
            alpha: 0.5,
            submission: s,
        };
        assert!(FragmentBuffer::from_pixel_lists(1, 1, vec![vec![f(1), f(1)]]).is_err());
        assert!(FragmentBuffer::from_pixel_lists(2, 1, vec![vec![f(1)]]).is_err());
        let fb = FragmentBuffer::from_pixel_lists(2, 1, vec![vec![f(0), f(3)], vec![]]).unwrap();
        assert_eq!(fb.len(), 2);
        assert_eq!(fb.max_depth_complexity(), 2);
    }

    #[test]
    fn rgba8_packing() {
        let f = Fragment {
            depth: 1.0,
            color: [0.5, 0.0, 1.0],
            alpha: 0.3,
            submission: 0,
        };
        let q = f.quantized_rgba8();
        assert_eq!(q.color, [128.0 / 255.0, 0.0, 1.0]);
        assert_eq!(q.alpha, 77.0 / 255.0);
    }
}
