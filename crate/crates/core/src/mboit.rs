//! Moment-based order-independent transparency with four power moments.
//!
//! Pass one sums each pixel's absorbance and its first four power moments over a
//! logarithmically warped depth. Pass two bounds the absorbance in front of every
//! fragment from those moments and blends all fragments additively.

use crate::exact::Framebuffer;
use crate::geometry::Rgba;
use crate::raster::{Fragment, FragmentBuffer};
use rayon::prelude::*;

/// Opacities are clamped here so absorbance stays finite.
pub const ALPHA_MAX: f64 = 1.0 - 1e-5;

/// Moments of the uniform distribution on [−1, 1]: E[d], E[d²], E[d³], E[d⁴].
pub const UNIFORM_MOMENTS: [f64; 4] = [0.0, 1.0 / 3.0, 0.0, 1.0 / 5.0];

const SINGULAR_EPS: f64 = 1e-13;
const COINCIDENT_EPS: f64 = 1e-9;
/// Error of recovered depths in units of `ε / d11` (one and two points) or
/// `ε / d11 + ε / d22` (three points); measured errors stay below 6.
const ROOT_NOISE: f64 = 16.0;
/// Recovered points are kept apart only when their error is below this fraction of
/// their separation, which keeps the weight error near 1e-7.
const RESOLVE: f64 = 1e-7;
/// Smallest normalized weight whose position the bounds account for.
const WEIGHT_FLOOR: f64 = 1e-6;
/// Rounding noise of the Cholesky pivots in units of ε; normalized moments are at most 1.
const PIVOT_NOISE: f64 = 8.0;

/// `−ln(1 − α)` with α clamped to `[0, ALPHA_MAX]`.
pub fn absorb(alpha: f64) -> f64 {
    -(1.0 - alpha.clamp(0.0, ALPHA_MAX)).ln()
}

/// Logarithmic depth warp onto [−1, 1]. The flag reports whether `z` had to be clamped.
pub fn warp_depth(z: f64, near: f64, far: f64) -> (f64, bool) {
    let zc = z.clamp(near, far);
    let d = 2.0 * (zc.ln() - near.ln()) / (far.ln() - near.ln()) - 1.0;
    (d.clamp(-1.0, 1.0), zc != z)
}

/// Total absorbance `b[0]` and absorbance-weighted power moments `b[1..=4]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentPixel {
    pub b: [f64; 5],
}

impl MomentPixel {
    /// Adds a point mass of absorbance `a` at warped depth `d`.
    pub fn add(&mut self, a: f64, d: f64) {
        let mut p = a;
        for i in 0..5 {
            self.b[i] += p;
            p *= d;
        }
    }

    pub fn total_absorbance(&self) -> f64 {
        self.b[0]
    }

    /// Normalized moments `b[i] / b[0]`, `i = 1..=4`.
    pub fn normalized(&self) -> [f64; 4] {
        let b0 = self.b[0];
        [self.b[1] / b0, self.b[2] / b0, self.b[3] / b0, self.b[4] / b0]
    }
}

/// Adds one fragment's absorbance at its warped depth; returns whether the depth was clamped.
pub fn accumulate_moments(pixel: &mut MomentPixel, f: &Fragment, near: f64, far: f64) -> bool {
    let (d, clamped) = warp_depth(f.depth, near, far);
    pixel.add(absorb(f.alpha), d);
    clamped
}

/// Sharp bounds on the absorbance in front of a query depth, and the interpolated estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBounds {
    pub lower: f64,
    pub upper: f64,
    pub absorbance: f64,
    pub transmittance: f64,
    /// Reconstruction failed and a depth-proportional share of `b0` was used instead.
    pub fallback: bool,
}

impl MomentBounds {
    fn from_bounds(lower: f64, upper: f64, beta: f64) -> Self {
        let absorbance = lower + beta * (upper - lower);
        Self {
            lower,
            upper,
            absorbance,
            transmittance: (-absorbance).exp(),
            fallback: false,
        }
    }
}

/// Bounds for a discrete distribution given as `(point, weight)` pairs with weights summing
/// to 1. Points carry a position error `noise`, and points closer together than that
/// error allows to separate are bounded as one cluster. A cluster within `reach` of the
/// query counts toward the upper bound only.
fn discrete_bounds(b0: f64, support: &mut [(f64, f64)], d: f64, noise: f64, reach: f64, beta: f64) -> MomentBounds {
    support.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut lower, mut upper) = (0.0, 0.0);
    let mut i = 0;
    while i < support.len() {
        let (lo, mut hi, mut w) = (support[i].0, support[i].0, support[i].1);
        i += 1;
        while i < support.len() && noise > RESOLVE * (support[i].0 - hi) {
            hi = support[i].0;
            w += support[i].1;
            i += 1;
        }
        if hi < d - reach {
            lower += w;
            upper += w;
        } else if lo <= d + reach {
            upper += w;
        }
    }
    let lower = (b0 * lower).clamp(0.0, b0);
    MomentBounds::from_bounds(lower, (b0 * upper).clamp(lower, b0), beta)
}

/// Reconstructs the absorbance in front of warped depth `d` from the pixel's moments.
///
/// The normalized moments are first blended toward the uniform distribution by
/// `bias`. With an unbiased, singular moment matrix (one or two distinct depths)
/// the distribution is recovered exactly; otherwise the three-point canonical
/// representation through `d` supplies the lower and upper bounds. Recovered depths
/// carry a rounding error that grows as the matrix approaches singularity, and the
/// bounds are widened to cover it.
pub fn reconstruct_absorbance(pixel: &MomentPixel, d: f64, beta: f64, bias: f64) -> MomentBounds {
    let b0 = pixel.b[0];
    if b0 <= 0.0 {
        return MomentBounds::from_bounds(0.0, 0.0, beta);
    }
    let raw = pixel.normalized();
    let mut m = [0.0; 4];
    for i in 0..4 {
        m[i] = (1.0 - bias) * raw[i] + bias * UNIFORM_MOMENTS[i];
    }
    let [m1, m2, m3, m4] = m;
    let eps = f64::EPSILON;

    // Cholesky factorization of the Hankel matrix [[1, m1, m2], [m1, m2, m3], [m2, m3, m4]]
    let d11 = m2 - m1 * m1;
    if d11 <= SINGULAR_EPS {
        // a point of weight w may sit up to sqrt(d11 / w) from the mean, and d11 is
        // only known to within its rounding noise
        let reach = ((d11.max(0.0) + PIVOT_NOISE * eps) / WEIGHT_FLOOR).sqrt();
        return discrete_bounds(b0, &mut [(m1, 1.0)], d, 0.0, reach, beta);
    }
    let l21_d11 = m3 - m1 * m2;
    let l21 = l21_d11 / d11;
    let d22 = (m4 - m2 * m2) - l21_d11 * l21;
    if d22 <= SINGULAR_EPS {
        // two points: roots of the monic orthogonal quadratic z² + a z + c
        let a = -l21;
        let c = -m2 - a * m1;
        let disc = (0.25 * a * a - c).max(0.0).sqrt();
        let (z1, z2) = (-0.5 * a - disc, -0.5 * a + disc);
        if !(z1.is_finite() && z2.is_finite()) {
            return fallback(b0, d);
        }
        // l21 loses about ε/d11 to cancellation and the roots inherit it
        // likewise a third point may hide next to either root
        let hidden = ((d22.max(0.0) + PIVOT_NOISE * eps) / (WEIGHT_FLOOR * d11)).sqrt();
        let noise = (ROOT_NOISE * eps / d11).max(COINCIDENT_EPS);
        let w1 = if z2 - z1 > 0.0 { (m1 - z2) / (z1 - z2) } else { 0.5 };
        return discrete_bounds(b0, &mut [(z1, w1), (z2, 1.0 - w1)], d, noise, noise.max(hidden), beta);
    }

    // kernel polynomial through d: solve H c = (1, d, d²)
    let mut c = [1.0, d, d * d];
    c[1] -= m1;
    c[2] -= m2 + l21 * c[1];
    c[1] /= d11;
    c[2] /= d22;
    c[1] -= l21 * c[2];
    c[0] -= c[1] * m1 + c[2] * m2;
    let p = c[1] / c[2];
    let q = c[0] / c[2];
    let r = (0.25 * p * p - q).sqrt();
    let z = [d, -0.5 * p - r, -0.5 * p + r];

    let weight = |j: usize| {
        let (k, l) = ((j + 1) % 3, (j + 2) % 3);
        (m2 - (z[k] + z[l]) * m1 + z[k] * z[l]) / ((z[j] - z[k]) * (z[j] - z[l]))
    };
    let w = [weight(0), weight(1), weight(2)];
    if !w.iter().chain(&z).all(|x| x.is_finite()) {
        return fallback(b0, d);
    }
    let noise = (ROOT_NOISE * eps * (1.0 / d11 + 1.0 / d22)).max(COINCIDENT_EPS);
    let mut support = [(z[0], w[0]), (z[1], w[1]), (z[2], w[2])];
    discrete_bounds(b0, &mut support, d, noise, noise, beta)
}

fn fallback(b0: f64, d: f64) -> MomentBounds {
    let a = b0 * 0.5 * (d.clamp(-1.0, 1.0) + 1.0);
    MomentBounds {
        lower: a,
        upper: a,
        absorbance: a,
        transmittance: (-a).exp(),
        fallback: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MboitParams {
    /// Interpolation between lower and upper bound.
    pub beta: f64,
    /// Blend factor toward the uniform moment vector.
    pub bias: f64,
}

impl Default for MboitParams {
    fn default() -> Self {
        Self { beta: 0.1, bias: 6e-5 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MboitStats {
    pub fallbacks: u64,
    pub clamped_depths: u64,
    /// Pixels with absorbance but zero accumulated weight; they show the background.
    pub zero_weight_pixels: u64,
}

impl MboitStats {
    fn add(self, o: Self) -> Self {
        Self {
            fallbacks: self.fallbacks + o.fallbacks,
            clamped_depths: self.clamped_depths + o.clamped_depths,
            zero_weight_pixels: self.zero_weight_pixels + o.zero_weight_pixels,
        }
    }
}

/// Resolves one pixel. The returned alpha is `1 − exp(−b0)`.
pub fn mboit_pixel(
    fragments: &[Fragment],
    background: [f64; 3],
    params: MboitParams,
    near: f64,
    far: f64,
) -> (Rgba, MboitStats) {
    let mut stats = MboitStats::default();
    let mut moments = MomentPixel::default();
    for f in fragments {
        if accumulate_moments(&mut moments, f, near, far) {
            stats.clamped_depths += 1;
        }
    }
    let b0 = moments.total_absorbance();
    let t_total = (-b0).exp();
    let mut c = [0.0; 3];
    let mut w_sum = 0.0;
    if b0 > 0.0 {
        for f in fragments {
            let (d, _) = warp_depth(f.depth, near, far);
            let r = reconstruct_absorbance(&moments, d, params.beta, params.bias);
            stats.fallbacks += r.fallback as u64;
            let w = r.transmittance * f.alpha;
            for k in 0..3 {
                c[k] += w * f.color[k];
            }
            w_sum += w;
        }
    }
    let mut rgb = background;
    if w_sum > 0.0 {
        let s = (1.0 - t_total) / w_sum;
        for k in 0..3 {
            rgb[k] = (c[k] * s + t_total * background[k]).clamp(0.0, 1.0);
        }
    } else if b0 > 0.0 {
        stats.zero_weight_pixels += 1;
    }
    ([rgb[0], rgb[1], rgb[2], 1.0 - t_total], stats)
}

pub fn mboit_render(
    fb: &FragmentBuffer,
    background: [f64; 3],
    params: MboitParams,
    near: f64,
    far: f64,
) -> (Framebuffer, MboitStats) {
    let results: Vec<(Rgba, MboitStats)> = (0..fb.pixel_count())
        .into_par_iter()
        .map(|i| mboit_pixel(fb.pixel(i), background, params, near, far))
        .collect();
    let stats = results.iter().fold(MboitStats::default(), |acc, r| acc.add(r.1));
    let out = Framebuffer {
        width: fb.width(),
        height: fb.height(),
        background,
        pixels: results.into_iter().map(|r| r.0).collect(),
    };
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn absorb_values() {
        assert_eq!(absorb(0.0), 0.0);
        assert!((absorb(0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(absorb(1.0).is_finite());
        assert!(absorb(0.3) < absorb(0.31));
    }

    #[test]
    fn warp_endpoints_and_midpoint() {
        let (n, f) = (0.1, 40.0);
        assert_eq!(warp_depth(n, n, f), (-1.0, false));
        assert!((warp_depth(f, n, f).0 - 1.0).abs() < 1e-15);
        assert!(warp_depth((n * f).sqrt(), n, f).0.abs() < 1e-12);
        assert!(warp_depth(2.0, n, f).0 < warp_depth(2.1, n, f).0);
        assert_eq!(warp_depth(100.0, n, f), (1.0, true));
        assert_eq!(warp_depth(0.01, n, f), (-1.0, true));
    }

    #[test]
    fn single_fragment_moments() {
        let mut p = MomentPixel::default();
        p.add(absorb(0.75), 0.0);
        assert!((p.b[0] - 4f64.ln()).abs() < 1e-15);
        assert_eq!(&p.b[1..], &[0.0; 4]);
        let mut q = MomentPixel::default();
        q.add(0.7, 0.3);
        let m = q.normalized();
        for i in 0..4 {
            assert!((m[i] - 0.3f64.powi(i as i32 + 1)).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_is_transparent() {
        let p = MomentPixel::default();
        for d in [-1.0, 0.0, 0.7] {
            assert_eq!(reconstruct_absorbance(&p, d, 0.1, 6e-5).transmittance, 1.0);
        }
    }

    #[test]
    fn single_point_mass_transmittance() {
        let mut p = MomentPixel::default();
        p.add(absorb(0.75), -0.2);
        // the bias spreads the point mass over roughly sqrt(bias) in warped depth
        for (bias, behind) in [(0.0, 1e-3), (6e-5, 0.05)] {
            let r = reconstruct_absorbance(&p, -0.2 + behind, 0.1, bias);
            assert!((r.transmittance - 0.25).abs() <= 0.01, "bias {bias}: {r:?}");
            let r = reconstruct_absorbance(&p, -0.5, 0.1, bias);
            assert!((r.transmittance - 1.0).abs() <= 0.01, "bias {bias}: {r:?}");
        }
    }

    /// Absorbance strictly in front of `d`, summed directly.
    fn prefix(points: &[(f64, f64)], d: f64) -> f64 {
        points.iter().filter(|p| p.0 < d).map(|p| p.1).sum()
    }

    #[test]
    fn bounds_contain_truth_for_three_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let n = rng.gen_range(1..=3);
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(-1.0..1.0), absorb(rng.gen_range(0.01..0.99))))
                .collect();
            let mut px = MomentPixel::default();
            for &(d, a) in &pts {
                px.add(a, d);
            }
            let mut queries: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            queries.extend(pts.iter().map(|p| p.0));
            for d in queries {
                let r = reconstruct_absorbance(&px, d, 0.1, 0.0);
                let truth = prefix(&pts, d);
                assert!(!r.fallback);
                assert!(
                    r.lower - 1e-6 <= truth && truth <= r.upper + 1e-6,
                    "{pts:?} d={d} {r:?} truth={truth}"
                );
            }
        }
    }

    #[test]
    fn bounds_hold_for_nearly_coincident_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..3000 {
            let n = rng.gen_range(2..=3);
            let mut pts: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(-0.9..0.9), absorb(rng.gen_range(0.01..0.99))))
                .collect();
            pts[1].0 = pts[0].0 + 10f64.powf(rng.gen_range(-12.0..-1.0));
            let mut px = MomentPixel::default();
            for &(d, a) in &pts {
                px.add(a, d);
            }
            for d in pts.iter().map(|p| p.0) {
                let r = reconstruct_absorbance(&px, d, 0.1, 0.0);
                let truth = prefix(&pts, d);
                assert!(
                    r.lower - 1e-6 <= truth && truth <= r.upper + 1e-6,
                    "{pts:?} d={d} {r:?} truth={truth}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn estimate_nondecreasing_in_depth(
            pts in proptest::collection::vec((-1.0f64..1.0, 0.05f64..0.95), 1..12),
            a in -1.0f64..1.0, b in -1.0f64..1.0,
        ) {
            let mut px = MomentPixel::default();
            for &(d, alpha) in &pts {
                px.add(absorb(alpha), d);
            }
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ra = reconstruct_absorbance(&px, lo, 0.1, 6e-5);
            let rb = reconstruct_absorbance(&px, hi, 0.1, 6e-5);
            prop_assert!(rb.absorbance >= ra.absorbance - 1e-9 * px.b[0].max(1.0));
        }
    }

    fn frag(depth: f64, alpha: f64, submission: u32) -> Fragment {
        Fragment {
            depth,
            color: [
                0.9 * (submission % 3) as f64 / 2.0,
                0.4,
                1.0 - 0.1 * (submission % 4) as f64,
            ],
            alpha,
            submission,
        }
    }

    #[test]
    fn single_fragment_pixel_close_to_blend() {
        let bg = [1.0, 1.0, 1.0];
        let f = frag(3.0, 0.6, 1);
        let (rgba, stats) = mboit_pixel(&[f], bg, MboitParams::default(), 0.1, 20.0);
        for k in 0..3 {
            let exact = 0.6 * f.color[k] + 0.4 * bg[k];
            assert!((rgba[k] - exact).abs() <= 1e-3);
        }
        assert_eq!(stats, MboitStats::default());
    }

    #[test]
    fn empty_pixel_is_background() {
        let (rgba, _) = mboit_pixel(&[], [0.3, 0.2, 0.1], MboitParams::default(), 0.1, 20.0);
        assert_eq!(rgba, [0.3, 0.2, 0.1, 0.0]);
    }

    #[test]
    fn permutation_invariant_and_background_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut fs: Vec<Fragment> = (0..40)
            .map(|s| frag(rng.gen_range(0.5..15.0), rng.gen_range(0.05..1.0), s))
            .collect();
        let (base, _) = mboit_pixel(&fs, [1.0; 3], MboitParams::default(), 0.1, 20.0);
        let product: f64 = fs.iter().map(|f| 1.0 - f.alpha.min(ALPHA_MAX)).product();
        assert!(((1.0 - base[3]) - product).abs() <= 1e-6);
        for _ in 0..10 {
            fs.shuffle(&mut rng);
            let (p, _) = mboit_pixel(&fs, [1.0; 3], MboitParams::default(), 0.1, 20.0);
            for k in 0..4 {
                assert!((p[k] - base[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fallback_is_uniform_share() {
        let r = fallback(2.0, 0.0);
        assert_eq!(r.absorbance, 1.0);
        assert!(r.fallback);
    }
}
