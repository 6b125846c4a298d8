//! Piecewise-affine scalar maps `R -> R` that can be composed with a
//! [`PlFunction`](super::PlFunction) exactly.

use serde::{Deserialize, Serialize};

use super::{PlError, EPS_GEOM};

/// A continuous piecewise-affine map of the real line (or of a subinterval).
///
/// Composition with a PL function only needs the knots that fall strictly
/// inside the value range of each linear piece, plus exact evaluation.
pub trait ScalarMap {
    fn apply(&self, t: f64) -> f64;

    /// Pushes the knots lying strictly inside `(lo, hi)` onto `out`, increasing.
    fn knots_between(&self, lo: f64, hi: f64, out: &mut Vec<f64>);

    /// Closed interval on which the map is defined.
    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Upper bound on the number of knots in `(lo, hi)`, used to refuse
    /// compositions that would blow the piece cap before allocating.
    fn knot_count_hint(&self, lo: f64, hi: f64) -> f64 {
        let mut v = Vec::new();
        self.knots_between(lo, hi, &mut v);
        v.len() as f64
    }
}

/// Triangle wave `t ↦ min_k |t − 2^{-(n-1)} k|`, the distance to the lattice
/// `2^{-(n-1)} Z`. Its values lie in `[0, 2^{-n}]` and every slope is ±1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleWave {
    level: u32,
    half_period: f64,
}

impl TriangleWave {
    pub fn new(level: u32) -> Self {
        Self {
            level,
            half_period: (-(level as f64)).exp2(),
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Peak value `2^{-n}`.
    pub fn height(&self) -> f64 {
        self.half_period
    }

    /// Lebesgue measure of `{t ∈ [lo, hi] : T_n(t) < cap}` for `0 ≤ cap ≤ 2^{-n}`.
    pub fn measure_below(&self, lo: f64, hi: f64, cap: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let cap = cap.clamp(0.0, self.half_period);
        self.cumulative_below(hi, cap) - self.cumulative_below(lo, cap)
    }

    // Measure of {s in [0, t] : T(s) < cap}, extended as an odd function.
    fn cumulative_below(&self, t: f64, cap: f64) -> f64 {
        if t < 0.0 {
            return -self.cumulative_below(-t, cap);
        }
        let period = 2.0 * self.half_period;
        let q = (t / period).floor();
        let rem = t - q * period;
        q * 2.0 * cap + rem.min(cap) + (rem - (period - cap)).max(0.0)
    }
}

impl ScalarMap for TriangleWave {
    fn apply(&self, t: f64) -> f64 {
        let s = t / (2.0 * self.half_period);
        (s - s.round()).abs() * 2.0 * self.half_period
    }

    fn knots_between(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        let h = self.half_period;
        let mut k = (lo / h).floor() + 1.0;
        loop {
            let t = k * h;
            if t >= hi {
                break;
            }
            if t > lo {
                out.push(t);
            }
            k += 1.0;
        }
    }

    fn knot_count_hint(&self, lo: f64, hi: f64) -> f64 {
        ((hi - lo) / self.half_period).max(0.0) + 1.0
    }
}

/// The plateau-ramp map `t ↦ ((−t + a + 2^{-n}) ∧ 2^{-n})^+`.
///
/// Equals `2^{-n}` for `t ≤ a`, `0` for `t ≥ a + 2^{-n}`, linear in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftedCut {
    pub threshold: f64,
    pub height: f64,
}

impl ShiftedCut {
    pub fn new(threshold: f64, level: u32) -> Self {
        Self {
            threshold,
            height: (-(level as f64)).exp2(),
        }
    }
}

impl ScalarMap for ShiftedCut {
    fn apply(&self, t: f64) -> f64 {
        (self.threshold + self.height - t).clamp(0.0, self.height)
    }

    fn knots_between(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        for t in [self.threshold, self.threshold + self.height] {
            if t > lo && t < hi {
                out.push(t);
            }
        }
    }
}

/// The normalized cut `C_a^b(t) = ((t ∧ b) ∨ a) − ((0 ∧ b) ∨ a)` with
/// `−∞ ≤ a < b ≤ ∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cut {
    lo: f64,
    hi: f64,
    offset: f64,
}

impl Cut {
    pub fn new(lo: f64, hi: f64) -> Result<Self, PlError> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(PlError::InvalidCut { lo, hi });
        }
        Ok(Self {
            lo,
            hi,
            offset: 0.0f64.min(hi).max(lo),
        })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

impl ScalarMap for Cut {
    fn apply(&self, t: f64) -> f64 {
        t.min(self.hi).max(self.lo) - self.offset
    }

    fn knots_between(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        for t in [self.lo, self.hi] {
            if t.is_finite() && t > lo && t < hi {
                out.push(t);
            }
        }
    }
}

/// Absolute value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Abs;

impl ScalarMap for Abs {
    fn apply(&self, t: f64) -> f64 {
        t.abs()
    }

    fn knots_between(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        if lo < 0.0 && hi > 0.0 {
            out.push(0.0);
        }
    }
}

/// Affine map `t ↦ slope·t + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub slope: f64,
    pub intercept: f64,
}

impl ScalarMap for Affine {
    fn apply(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }

    fn knots_between(&self, _lo: f64, _hi: f64, _out: &mut Vec<f64>) {}
}

/// A general piecewise-affine map given by knots and values on a finite
/// interval `[knots[0], knots[last]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMap", into = "RawMap")]
pub struct PlMap {
    knots: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMap {
    t: Vec<f64>,
    y: Vec<f64>,
}

impl TryFrom<RawMap> for PlMap {
    type Error = PlError;
    fn try_from(raw: RawMap) -> Result<Self, PlError> {
        PlMap::new(raw.t, raw.y)
    }
}

impl From<PlMap> for RawMap {
    fn from(m: PlMap) -> Self {
        RawMap {
            t: m.knots,
            y: m.values,
        }
    }
}

impl PlMap {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, PlError> {
        if knots.len() != values.len() || knots.len() < 2 {
            return Err(PlError::InvalidBreakpoints(format!(
                "map needs at least two knots and matching values, got {} knots and {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(PlError::InvalidBreakpoints("non-finite map knot or value".into()));
        }
        if knots.windows(2).any(|w| w[1] - w[0] <= EPS_GEOM) {
            return Err(PlError::InvalidBreakpoints(
                "map knots must be strictly increasing".into(),
            ));
        }
        Ok(Self { knots, values })
    }

    pub fn identity(lo: f64, hi: f64) -> Self {
        Self::new(vec![lo, hi], vec![lo, hi]).expect("lo < hi")
    }

    /// Samples any [`ScalarMap`] on `[lo, hi]` into an explicit `PlMap`.
    pub fn from_map(map: &dyn ScalarMap, lo: f64, hi: f64) -> Result<Self, PlError> {
        let mut knots = vec![lo];
        map.knots_between(lo, hi, &mut knots);
        knots.push(hi);
        let values = knots.iter().map(|&t| map.apply(t)).collect();
        Self::new(knots, values)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| (v[1] - v[0]) / (t[1] - t[0]))
    }

    /// Derivative at `t`, `None` at knots and outside the domain.
    pub fn slope_at(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(t > lo && t < hi) {
            return None;
        }
        let i = self.knots.partition_point(|&k| k < t);
        if (self.knots[i] - t).abs() <= EPS_GEOM {
            return None;
        }
        let j = i - 1;
        Some((self.values[j + 1] - self.values[j]) / (self.knots[j + 1] - self.knots[j]))
    }

    /// Largest absolute slope, i.e. the Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        self.slopes().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Lipschitz constant of the restriction to `[lo, hi]`.
    pub fn lipschitz_on(&self, lo: f64, hi: f64) -> f64 {
        self.knots
            .windows(2)
            .zip(self.slopes())
            .filter(|(t, _)| t[1] > lo + EPS_GEOM && t[0] < hi - EPS_GEOM)
            .fold(0.0, |m, (_, s)| m.max(s.abs()))
    }

    /// Whether the map has no knot strictly inside `(lo, hi)`.
    pub fn is_affine_on(&self, lo: f64, hi: f64) -> bool {
        self.knots
            .iter()
            .all(|&k| k <= lo + EPS_GEOM || k >= hi - EPS_GEOM)
    }
}

impl ScalarMap for PlMap {
    fn apply(&self, t: f64) -> f64 {
        let n = self.knots.len();
        let i = self.knots.partition_point(|&k| k <= t).clamp(1, n - 1);
        let (t0, t1) = (self.knots[i - 1], self.knots[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        if t == t1 {
            return v1;
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    fn knots_between(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        out.extend(self.knots.iter().copied().filter(|&k| k > lo && k < hi));
    }

    fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_measure_below(w: &TriangleWave, lo: f64, hi: f64, cap: f64) -> f64 {
        let n = 200_000;
        let dt = (hi - lo) / n as f64;
        (0..n)
            .filter(|&i| w.apply(lo + (i as f64 + 0.5) * dt) < cap)
            .count() as f64
            * dt
    }

    #[test]
    fn triangle_wave_values() {
        let t1 = TriangleWave::new(1);
        assert_eq!(t1.apply(0.0), 0.0);
        assert_eq!(t1.apply(0.5), 0.5);
        assert_eq!(t1.apply(1.0), 0.0);
        assert!((t1.apply(0.25) - 0.25).abs() < 1e-15);
        assert!((t1.apply(-0.75) - 0.25).abs() < 1e-15);
        let t3 = TriangleWave::new(3);
        assert_eq!(t3.height(), 0.125);
        assert_eq!(t3.apply(0.125), 0.125);
        assert_eq!(t3.apply(0.25), 0.0);
    }

    #[test]
    fn triangle_knots_are_dyadic() {
        let mut v = Vec::new();
        TriangleWave::new(2).knots_between(-0.3, 0.6, &mut v);
        assert_eq!(v, vec![-0.25, 0.0, 0.25, 0.5]);
    }

    #[test]
    fn measure_below_matches_brute_force() {
        let w = TriangleWave::new(2);
        for &(lo, hi, cap) in &[
            (-0.37, 1.11, 0.1),
            (0.0, 1.0, 0.25),
            (0.3, 0.31, 0.2),
            (-2.0, -1.3, 0.05),
            (0.1, 0.9, 0.0),
        ] {
            let exact = w.measure_below(lo, hi, cap);
            let brute = brute_measure_below(&w, lo, hi, cap);
            assert!((exact - brute).abs() < 1e-4, "{lo} {hi} {cap}: {exact} vs {brute}");
        }
    }

    #[test]
    fn cut_normalization() {
        let c = Cut::new(0.5, 2.0).unwrap();
        assert_eq!(c.apply(0.0), 0.0);
        assert_eq!(c.apply(3.0), 1.5);
        let c = Cut::new(f64::NEG_INFINITY, -1.0).unwrap();
        assert_eq!(c.apply(0.0), 0.0);
        assert_eq!(c.apply(-3.0), -2.0);
        assert!(Cut::new(1.0, 1.0).is_err());
    }

    #[test]
    fn shifted_cut_profile() {
        let s = ShiftedCut::new(0.25, 2);
        assert_eq!(s.apply(0.0), 0.25);
        assert_eq!(s.apply(0.5), 0.0);
        assert!((s.apply(0.375) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn plmap_slopes_and_affinity() {
        let m = PlMap::new(vec![-1.0, 0.0, 2.0], vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(m.slope_at(-0.5), Some(-1.0));
        assert_eq!(m.slope_at(0.0), None);
        assert_eq!(m.slope_at(1.0), Some(0.5));
        assert!(m.is_affine_on(0.0, 2.0));
        assert!(!m.is_affine_on(-1.0, 1.0));
        assert_eq!(m.lipschitz(), 1.0);
        assert_eq!(m.lipschitz_on(0.0, 2.0), 0.5);
        assert_eq!(m.apply(1.0), 0.5);
        assert_eq!(m.apply(2.0), 1.0);
    }
}
