//! Ray-primitive intersection tests shared by the ray casters.

use crate::math::{Ray, Vec3};

/// Precomputed per-ray data for the watertight ray-triangle test.
#[derive(Debug, Clone, Copy)]
pub struct WatertightRay {
    origin: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl WatertightRay {
    pub fn new(ray: &Ray) -> Self {
        let d = ray.dir;
        let kz = d.max_abs_axis();
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        // keep the winding consistent
        if d[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        Self {
            origin: ray.origin,
            kx,
            ky,
            kz,
            sx: d[kx] / d[kz],
            sy: d[ky] / d[kz],
            sz: 1.0 / d[kz],
        }
    }
}

/// Barycentric hit on a triangle: `p = u·a + v·b + w·c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleHit {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

/// Watertight ray-triangle intersection: rays through a shared edge or vertex hit at
/// least one of the adjacent triangles. Both faces are hit; `t` must lie in `(t_min, t_max)`.
pub fn intersect_triangle(r: &WatertightRay, tri: [Vec3; 3], t_min: f64, t_max: f64) -> Option<TriangleHit> {
    let rel = tri.map(|p| p - r.origin);
    let shear = |p: Vec3| (p[r.kx] - r.sx * p[r.kz], p[r.ky] - r.sy * p[r.kz], r.sz * p[r.kz]);
    let (ax, ay, az) = shear(rel[0]);
    let (bx, by, bz) = shear(rel[1]);
    let (cx, cy, cz) = shear(rel[2]);
    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let t = (u * az + v * bz + w * cz) / det;
    if !(t > t_min && t < t_max) {
        return None;
    }
    Some(TriangleHit {
        t,
        u: u / det,
        v: v / det,
        w: w / det,
    })
}

/// One intersection of a ray with a tube segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeHit {
    pub t: f64,
    /// Position of the hit's projection along the axis, in [0, 1).
    pub s: f64,
    /// Outward unit normal.
    pub normal: Vec3,
}

/// Intersects a ray with the cylinder of `radius` around segment `a→b`, clipped by the
/// planes through `a` and `b` perpendicular to the axis. The clip is half-open
/// (`0 ≤ s < 1`) so consecutive collinear segments never report the same point twice.
/// Returns up to two hits sorted by `t`, filled from the front; rays parallel to the axis miss.
pub fn intersect_ray_tube(ray: &Ray, a: Vec3, b: Vec3, radius: f64) -> [Option<TubeHit>; 2] {
    let mut out = [None, None];
    let axis = b - a;
    let len = axis.length();
    if !(len > 0.0) {
        return out;
    }
    let u = axis / len;
    let delta = ray.origin - a;
    let d_perp = ray.dir - u * ray.dir.dot(u);
    let o_perp = delta - u * delta.dot(u);
    let qa = d_perp.dot(d_perp);
    if qa <= 1e-18 {
        return out;
    }
    let qb = 2.0 * o_perp.dot(d_perp);
    let qc = o_perp.dot(o_perp) - radius * radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return out;
    }
    let sign = if qb >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (qb + sign * disc.sqrt());
    // q is zero only for a tangent ray grazing at t = 0
    let (mut t0, mut t1) = if q != 0.0 { (q / qa, qc / q) } else { (0.0, 0.0) };
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    let mut n = 0;
    for t in [t0, t1] {
        let p = ray.at(t);
        let s = (p - a).dot(u) / len;
        if (0.0..1.0).contains(&s) {
            let normal = (p - (a + u * (s * len)))
                .try_normalize()
                .unwrap_or_else(|| o_perp.try_normalize().unwrap_or(Vec3::X));
            out[n] = Some(TubeHit { t, s, normal });
            n += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tri() -> [Vec3; 3] {
        [
            Vec3::new(-1.0, -1.0, 2.0),
            Vec3::new(1.0, -1.0, 2.0),
            Vec3::new(0.0, 1.0, 2.0),
        ]
    }

    #[test]
    fn triangle_hit_and_barycentrics() {
        let ray = Ray::new(Vec3::ZERO, Vec3::Z);
        let h = intersect_triangle(&WatertightRay::new(&ray), tri(), 0.0, f64::INFINITY).unwrap();
        assert!((h.t - 2.0).abs() < 1e-15);
        assert!((h.u + h.v + h.w - 1.0).abs() < 1e-15);
        let p = tri()[0] * h.u + tri()[1] * h.v + tri()[2] * h.w;
        assert!((p - ray.at(h.t)).length() < 1e-12);
        // back face hits too
        let back = Ray::new(Vec3::new(0.0, 0.0, 4.0), -Vec3::Z);
        assert!(intersect_triangle(&WatertightRay::new(&back), tri(), 0.0, f64::INFINITY).is_some());
    }

    #[test]
    fn triangle_range_and_miss() {
        let w = WatertightRay::new(&Ray::new(Vec3::ZERO, Vec3::Z));
        assert!(intersect_triangle(&w, tri(), 2.5, 10.0).is_none());
        assert!(intersect_triangle(&w, tri(), 0.0, 1.5).is_none());
        let off = WatertightRay::new(&Ray::new(Vec3::new(5.0, 0.0, 0.0), Vec3::Z));
        assert!(intersect_triangle(&off, tri(), 0.0, 10.0).is_none());
    }

    #[test]
    fn shared_edge_never_leaks() {
        // quad split along its diagonal; rays through the diagonal must hit at least one half
        let q = [
            Vec3::new(-1.0, -1.0, 3.0),
            Vec3::new(1.0, -1.0, 3.0),
            Vec3::new(1.0, 1.0, 3.0),
            Vec3::new(-1.0, 1.0, 3.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let s = rng.gen_range(-0.99..0.99);
            let target = Vec3::new(s, s, 3.0);
            let origin = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 0.0);
            let w = WatertightRay::new(&Ray::new(origin, target - origin));
            let a = intersect_triangle(&w, [q[0], q[1], q[2]], 0.0, 10.0);
            let b = intersect_triangle(&w, [q[0], q[2], q[3]], 0.0, 10.0);
            assert!(a.is_some() || b.is_some());
        }
    }

    #[test]
    fn tube_perpendicular_through_axis() {
        let ray = Ray::new(Vec3::new(0.5, -5.0, 0.0), Vec3::Y);
        let hits = intersect_ray_tube(&ray, Vec3::ZERO, Vec3::X, 0.1);
        assert!(hits.iter().all(Option::is_some));
        let (h0, h1) = (hits[0].unwrap(), hits[1].unwrap());
        assert!((ray.at(h0.t).y + 0.1).abs() < 1e-12);
        assert!((ray.at(h1.t).y - 0.1).abs() < 1e-12);
        assert!((h0.normal - -Vec3::Y).length() < 1e-12);
        assert!((h0.s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tube_miss_and_clipping() {
        let far = Ray::new(Vec3::new(0.5, -5.0, 0.2), Vec3::Y);
        assert_eq!(intersect_ray_tube(&far, Vec3::ZERO, Vec3::X, 0.1), [None, None]);
        let past_end = Ray::new(Vec3::new(1.5, -5.0, 0.0), Vec3::Y);
        assert_eq!(intersect_ray_tube(&past_end, Vec3::ZERO, Vec3::X, 0.1), [None, None]);
        // start plane is included, end plane excluded
        let at_start = Ray::new(Vec3::new(0.0, -5.0, 0.0), Vec3::Y);
        let h = intersect_ray_tube(&at_start, Vec3::ZERO, Vec3::X, 0.1);
        assert!(h[1].is_some());
        assert_eq!(h[0].unwrap().s, 0.0);
        let at_end = Ray::new(Vec3::new(1.0, -5.0, 0.0), Vec3::Y);
        assert_eq!(intersect_ray_tube(&at_end, Vec3::ZERO, Vec3::X, 0.1), [None, None]);
        let parallel = Ray::new(Vec3::new(-1.0, 0.0, 0.0), Vec3::X);
        assert_eq!(intersect_ray_tube(&parallel, Vec3::ZERO, Vec3::X, 0.1), [None, None]);
    }

    #[test]
    fn tube_oblique_hits_lie_on_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = (Vec3::new(-0.3, 0.2, 0.1), Vec3::new(0.7, -0.1, 0.5));
        let axis = (b - a).normalize();
        for _ in 0..500 {
            let o = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), 4.0);
            let target =
                a.lerp(b, rng.gen_range(0.0..1.0)) + Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), 0.0);
            let ray = Ray::new(o, target - o);
            let hits = intersect_ray_tube(&ray, a, b, 0.15);
            for h in hits.iter().flatten() {
                let p = ray.at(h.t);
                let rel = p - a;
                let radial = rel - axis * rel.dot(axis);
                assert!((radial.length() - 0.15).abs() < 1e-9);
                assert!((h.normal.length() - 1.0).abs() < 1e-12);
            }
            if let [Some(h0), Some(h1)] = hits {
                assert!(h0.t <= h1.t);
            }
        }
    }
}
