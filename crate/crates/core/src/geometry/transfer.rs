use super::GeometryError;

/// Straight (non-premultiplied) RGBA, all channels in [0, 1].
pub type Rgba = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoint {
    pub t: f64,
    pub rgba: Rgba,
}

/// Piecewise-linear map from a line attribute to color and opacity.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    points: Vec<ControlPoint>,
}

impl TransferFunction {
    /// Control points must start at t = 0, end at t = 1 and be strictly increasing.
    pub fn new(points: Vec<ControlPoint>) -> Result<Self, GeometryError> {
        let bad = |m: &str| Err(GeometryError::Transfer(m.to_string()));
        if points.len() < 2 {
            return bad("need at least two control points");
        }
        if points[0].t != 0.0 || points[points.len() - 1].t != 1.0 {
            return bad("control points must span exactly [0, 1]");
        }
        if points.windows(2).any(|w| w[1].t <= w[0].t) {
            return bad("control points must be strictly increasing in t");
        }
        if points.iter().flat_map(|p| p.rgba).any(|c| !(0.0..=1.0).contains(&c)) {
            return bad("channels must lie in [0, 1]");
        }
        Ok(Self { points })
    }

    pub fn constant(rgba: Rgba) -> Result<Self, GeometryError> {
        Self::new(vec![ControlPoint { t: 0.0, rgba }, ControlPoint { t: 1.0, rgba }])
    }

    /// Convenience constructor from `(t, rgba)` pairs.
    pub fn from_pairs(pairs: &[(f64, Rgba)]) -> Result<Self, GeometryError> {
        Self::new(pairs.iter().map(|&(t, rgba)| ControlPoint { t, rgba }).collect())
    }

    pub fn points(&self) -> &[ControlPoint] {
        &self.points
    }

    pub fn max_alpha(&self) -> f64 {
        self.points.iter().map(|p| p.rgba[3]).fold(0.0, f64::max)
    }

    pub fn eval(&self, attribute: f64) -> Rgba {
        apply_transfer(self, attribute)
    }
}

/// Linear interpolation between the control points bracketing `attribute`.
///
/// Attributes outside [0, 1] are clamped.
pub fn apply_transfer(tf: &TransferFunction, attribute: f64) -> Rgba {
    let pts = &tf.points;
    let t = attribute.clamp(0.0, 1.0);
    // first control point with pt.t >= t; pts[0].t == 0 so idx >= 0
    let idx = pts.partition_point(|p| p.t < t);
    if idx == 0 {
        return pts[0].rgba;
    }
    let hi = pts[idx.min(pts.len() - 1)];
    if hi.t == t {
        return hi.rgba;
    }
    let lo = pts[idx - 1];
    let w = (t - lo.t) / (hi.t - lo.t);
    let mut out = [0.0; 4];
    for c in 0..4 {
        out[c] = (lo.rgba[c] + (hi.rgba[c] - lo.rgba[c]) * w).clamp(0.0, 1.0);
    }
    out
}
