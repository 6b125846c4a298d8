//! Continuous piecewise-linear functions on `[0, 1]` and the exact operators
//! the energy-measure construction is built from: linear combinations,
//! lattice operations, composition with piecewise-affine maps, cuts, folds and
//! sublevel sets.
//!
//! Every operation is exact up to floating-point rounding: new breakpoints are
//! placed at crossings and preimages computed from the segment formulas, never
//! by bisection. Products and powers are the only approximations and carry an
//! explicit error bound.

mod interval;
mod map;

pub use interval::{Interval, IntervalSet};
pub use map::{Abs, Affine, Cut, PlMap, ScalarMap, ShiftedCut, TriangleWave};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Breakpoints closer than this are identified.
pub const EPS_GEOM: f64 = 1e-12;
/// Adjacent pieces whose slopes differ by less than this are merged.
pub const SLOPE_MERGE_TOL: f64 = 1e-12;
pub const DEFAULT_PIECE_CAP: usize = 2_000_000;
/// Largest admissible fold level; beyond it `2^{-n}` drops below the
/// resolution of doubles for values of order one.
pub const MAX_FOLD_LEVEL: u32 = 48;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlError {
    #[error("piece count {pieces} exceeds cap {cap}")]
    PieceCap { pieces: usize, cap: usize },
    #[error("invalid cut bounds a = {lo}, b = {hi} (need a < b)")]
    InvalidCut { lo: f64, hi: f64 },
    #[error("map domain [{lo}, {hi}] does not cover function range [{min}, {max}]")]
    DomainMismatch { lo: f64, hi: f64, min: f64, max: f64 },
    #[error("fold level {level} outside 1..={cap}")]
    FoldLevel { level: u32, cap: u32 },
    #[error("invalid breakpoints: {0}")]
    InvalidBreakpoints(String),
}

/// One linear piece of a [`PlFunction`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Piece {
    pub fn slope(&self) -> f64 {
        (self.y1 - self.y0) / (self.x1 - self.x0)
    }

    pub fn len(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn at(&self, x: f64) -> f64 {
        if x == self.x1 {
            return self.y1;
        }
        self.y0 + (self.y1 - self.y0) * (x - self.x0) / (self.x1 - self.x0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lattice {
    Min,
    Max,
}

/// A piecewise-linear approximation together with a bound on its sup error.
#[derive(Clone, Debug)]
pub struct Approximation {
    pub function: PlFunction,
    pub sup_error_bound: f64,
}

/// Continuous piecewise-linear function on `[0, 1]`, stored as breakpoints
/// `0 = x_0 < … < x_m = 1` and the values there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPl", into = "RawPl")]
pub struct PlFunction {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPl {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl TryFrom<RawPl> for PlFunction {
    type Error = PlError;
    fn try_from(raw: RawPl) -> Result<Self, PlError> {
        PlFunction::new(raw.x, raw.y)
    }
}

impl From<PlFunction> for RawPl {
    fn from(f: PlFunction) -> Self {
        RawPl { x: f.xs, y: f.ys }
    }
}

impl PlFunction {
    /// Validates and normalizes breakpoint data.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, PlError> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(PlError::InvalidBreakpoints(format!(
                "need at least two breakpoints with matching values, got {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(PlError::InvalidBreakpoints("non-finite entry".into()));
        }
        if xs[0].abs() > EPS_GEOM || (xs[xs.len() - 1] - 1.0).abs() > EPS_GEOM {
            return Err(PlError::InvalidBreakpoints(format!(
                "breakpoints must span [0, 1], got [{}, {}]",
                xs[0],
                xs[xs.len() - 1]
            )));
        }
        if xs.windows(2).any(|w| w[1] < w[0]) {
            return Err(PlError::InvalidBreakpoints("breakpoints must increase".into()));
        }
        Self::normalized(xs, ys, DEFAULT_PIECE_CAP)
    }

    // Dedups breakpoints at ε_geom, prunes collinear knots, checks the cap.
    fn normalized(xs: Vec<f64>, ys: Vec<f64>, cap: usize) -> Result<Self, PlError> {
        let n = xs.len();
        let mut kx: Vec<f64> = Vec::with_capacity(n);
        let mut ky: Vec<f64> = Vec::with_capacity(n);
        for (i, (&x, &y)) in xs.iter().zip(ys.iter()).enumerate() {
            if let Some(&last) = kx.last() {
                if x - last < EPS_GEOM {
                    if i == n - 1 && kx.len() > 1 {
                        kx.pop();
                        ky.pop();
                    } else {
                        continue;
                    }
                }
            }
            kx.push(x);
            ky.push(y);
        }
        kx[0] = 0.0;
        *kx.last_mut().unwrap() = 1.0;
        if kx.len() < 2 {
            kx = vec![0.0, 1.0];
            ky = vec![ys[0], ys[n - 1]];
        }

        let m = kx.len();
        let mut px = Vec::with_capacity(m);
        let mut py = Vec::with_capacity(m);
        px.push(kx[0]);
        py.push(ky[0]);
        for i in 1..m - 1 {
            let (lx, ly) = (*px.last().unwrap(), *py.last().unwrap());
            let s_in = (ky[i] - ly) / (kx[i] - lx);
            let s_out = (ky[i + 1] - ky[i]) / (kx[i + 1] - kx[i]);
            if (s_in - s_out).abs() >= SLOPE_MERGE_TOL {
                px.push(kx[i]);
                py.push(ky[i]);
            }
        }
        px.push(kx[m - 1]);
        py.push(ky[m - 1]);

        if px.len() - 1 > cap {
            return Err(PlError::PieceCap {
                pieces: px.len() - 1,
                cap,
            });
        }
        Ok(Self { xs: px, ys: py })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            xs: vec![0.0, 1.0],
            ys: vec![c, c],
        }
    }

    /// `x ↦ slope·x + intercept`.
    pub fn linear(slope: f64, intercept: f64) -> Self {
        Self {
            xs: vec![0.0, 1.0],
            ys: vec![intercept, slope + intercept],
        }
    }

    pub fn identity() -> Self {
        Self::linear(1.0, 0.0)
    }

    /// Hat function: zero outside `[lo, hi]`, linear up to `height` at `peak`.
    pub fn hat(lo: f64, peak: f64, hi: f64, height: f64) -> Result<Self, PlError> {
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        for (x, y) in [(lo, 0.0), (peak, height), (hi, 0.0)] {
            if x > *xs.last().unwrap() && x < 1.0 {
                xs.push(x);
                ys.push(y);
            }
        }
        xs.push(1.0);
        ys.push(if hi >= 1.0 {
            if peak >= 1.0 {
                height
            } else {
                height * (hi - 1.0) / (hi - peak)
            }
        } else {
            0.0
        });
        if lo <= 0.0 {
            ys[0] = if peak <= 0.0 {
                height
            } else {
                height * (0.0 - lo) / (peak - lo)
            };
        }
        Self::new(xs, ys)
    }

    /// Tent with value 0 at both endpoints and `height` at `peak`.
    pub fn tent(peak: f64, height: f64) -> Result<Self, PlError> {
        Self::new(vec![0.0, peak, 1.0], vec![0.0, height, 0.0])
    }

    /// Interpolates `func` at the given knots (which must span `[0, 1]`).
    pub fn interpolate(knots: &[f64], func: impl Fn(f64) -> f64) -> Result<Self, PlError> {
        let ys = knots.iter().map(|&x| func(x)).collect();
        Self::new(knots.to_vec(), ys)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn n_pieces(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn pieces(&self) -> impl ExactSizeIterator<Item = Piece> + '_ {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| Piece {
                x0: x[0],
                x1: x[1],
                y0: y[0],
                y1: y[1],
            })
    }

    pub fn slopes(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces().map(|p| p.slope())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let n = self.xs.len();
        let i = self.xs.partition_point(|&k| k <= x).clamp(1, n - 1);
        if x == self.xs[i - 1] {
            return self.ys[i - 1];
        }
        Piece {
            x0: self.xs[i - 1],
            x1: self.xs[i],
            y0: self.ys[i - 1],
            y1: self.ys[i],
        }
        .at(x)
    }

    /// Slope of the piece containing `x` (right-continuous; the last piece at `x = 1`).
    pub fn slope_at(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&k| k <= x).clamp(1, n - 1);
        (self.ys[i] - self.ys[i - 1]) / (self.xs[i] - self.xs[i - 1])
    }

    pub fn min_value(&self) -> f64 {
        self.ys.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.ys.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.ys.iter().fold(0.0, |m, y| m.max(y.abs()))
    }

    pub fn is_constant(&self) -> bool {
        self.ys.iter().all(|&y| y == self.ys[0])
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map_values(|y| a * y)
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map_values(|y| y + c)
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let ys = self.ys.iter().map(|&y| f(y)).collect();
        Self::normalized(self.xs.clone(), ys, usize::MAX).expect("uncapped")
    }

    /// `a·f + b·g` on the merged breakpoints.
    pub fn affine_combine(a: f64, f: &PlFunction, b: f64, g: &PlFunction) -> Result<Self, PlError> {
        let xs = merge_knots(&[&f.xs, &g.xs]);
        let ys = xs.iter().map(|&x| a * f.eval(x) + b * g.eval(x)).collect();
        Self::normalized(xs, ys, DEFAULT_PIECE_CAP)
    }

    pub fn add(&self, g: &PlFunction) -> Result<Self, PlError> {
        Self::affine_combine(1.0, self, 1.0, g)
    }

    pub fn sub(&self, g: &PlFunction) -> Result<Self, PlError> {
        Self::affine_combine(1.0, self, -1.0, g)
    }

    /// Exact pointwise minimum or maximum; crossings of the two graphs become
    /// breakpoints.
    pub fn lattice(f: &PlFunction, g: &PlFunction, which: Lattice) -> Result<Self, PlError> {
        let knots = merge_knots(&[&f.xs, &g.xs]);
        let pick = |a: f64, b: f64| match which {
            Lattice::Min => a.min(b),
            Lattice::Max => a.max(b),
        };
        let mut xs = Vec::with_capacity(knots.len() * 2);
        let mut ys = Vec::with_capacity(knots.len() * 2);
        let mut prev: Option<(f64, f64, f64)> = None;
        for &x in &knots {
            let (fv, gv) = (f.eval(x), g.eval(x));
            if let Some((px, pf, pg)) = prev {
                let d0 = pf - pg;
                let d1 = fv - gv;
                if (d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0) {
                    let s = d0 / (d0 - d1);
                    let xc = px + s * (x - px);
                    if xc - px > EPS_GEOM && x - xc > EPS_GEOM {
                        xs.push(xc);
                        ys.push(pf + s * (fv - pf));
                    }
                }
            }
            xs.push(x);
            ys.push(pick(fv, gv));
            prev = Some((x, fv, gv));
        }
        Self::normalized(xs, ys, DEFAULT_PIECE_CAP)
    }

    pub fn min(&self, g: &PlFunction) -> Result<Self, PlError> {
        Self::lattice(self, g, Lattice::Min)
    }

    pub fn max(&self, g: &PlFunction) -> Result<Self, PlError> {
        Self::lattice(self, g, Lattice::Max)
    }

    /// Exact composition `map ∘ self`, capped at `cap` pieces.
    pub fn compose_with_cap(&self, map: &dyn ScalarMap, cap: usize) -> Result<Self, PlError> {
        let (min, max) = (self.min_value(), self.max_value());
        let (lo, hi) = map.domain();
        if min < lo - EPS_GEOM || max > hi + EPS_GEOM {
            return Err(PlError::DomainMismatch { lo, hi, min, max });
        }
        let estimate: f64 = self
            .pieces()
            .map(|p| map.knot_count_hint(p.y0.min(p.y1), p.y0.max(p.y1)) + 1.0)
            .sum();
        if estimate > 2.0 * cap as f64 + 2.0 {
            return Err(PlError::PieceCap {
                pieces: estimate as usize,
                cap,
            });
        }
        let mut xs = vec![self.xs[0]];
        let mut ys = vec![map.apply(self.ys[0])];
        let mut knots = Vec::new();
        for p in self.pieces() {
            knots.clear();
            if p.y0 != p.y1 {
                map.knots_between(p.y0.min(p.y1), p.y0.max(p.y1), &mut knots);
                if p.y1 < p.y0 {
                    knots.reverse();
                }
                for &t in &knots {
                    let x = p.x0 + (t - p.y0) / (p.y1 - p.y0) * (p.x1 - p.x0);
                    xs.push(x);
                    ys.push(map.apply(t));
                }
            }
            xs.push(p.x1);
            ys.push(map.apply(p.y1));
        }
        Self::normalized(xs, ys, cap)
    }

    pub fn compose(&self, map: &dyn ScalarMap) -> Result<Self, PlError> {
        self.compose_with_cap(map, DEFAULT_PIECE_CAP)
    }

    /// `C_a^b ∘ f`; `a` and `b` may be infinite.
    pub fn cut(&self, a: f64, b: f64) -> Result<Self, PlError> {
        self.compose(&Cut::new(a, b)?)
    }

    pub fn abs(&self) -> Self {
        self.compose_with_cap(&Abs, usize::MAX).expect("uncapped")
    }

    /// `T_n ∘ f` with `T_n(t) = min_k |t − 2^{-(n-1)} k|`.
    pub fn triangle_fold(&self, n: u32) -> Result<Self, PlError> {
        check_level(n)?;
        self.compose(&TriangleWave::new(n))
    }

    /// `S_n^a ∘ g` with `S_n^a(t) = ((−t + a + 2^{-n}) ∧ 2^{-n})^+`.
    pub fn shifted_cut(&self, a: f64, n: u32) -> Result<Self, PlError> {
        check_level(n)?;
        self.compose(&ShiftedCut::new(a, n))
    }

    /// Interpolant of the product `f·g` on the merged breakpoints, each piece
    /// split into `refine` equal parts. On a piece both factors are affine, so
    /// the product is a quadratic with second derivative `2 f' g'` and the
    /// interpolation error is at most `|f' g'| h² / 4` for sub-piece width `h`.
    pub fn pl_product(f: &PlFunction, g: &PlFunction, refine: usize) -> Result<Approximation, PlError> {
        let refine = refine.max(1);
        let base = merge_knots(&[&f.xs, &g.xs]);
        let mut bound: f64 = 0.0;
        for w in base.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let h = (w[1] - w[0]) / refine as f64;
            bound = bound.max((f.slope_at(mid) * g.slope_at(mid)).abs() * h * h / 4.0);
        }
        let knots = refine_knots(&base, refine);
        let function = Self::interpolate(&knots, |x| f.eval(x) * g.eval(x))?;
        Ok(Approximation {
            function,
            sup_error_bound: bound,
        })
    }

    /// Exact sublevel set `{x : self(x) ≤ a}` as closed components.
    pub fn sublevel_set(&self, a: f64) -> IntervalSet {
        let mut parts = Vec::new();
        for p in self.pieces() {
            let in0 = p.y0 <= a;
            let in1 = p.y1 <= a;
            match (in0, in1) {
                (true, true) => parts.push(Interval::closed(p.x0, p.x1)),
                (false, false) => {}
                _ => {
                    let xc = if p.y0 == a {
                        p.x0
                    } else if p.y1 == a {
                        p.x1
                    } else {
                        (p.x0 + (a - p.y0) / (p.y1 - p.y0) * (p.x1 - p.x0)).clamp(p.x0, p.x1)
                    };
                    if in0 {
                        parts.push(Interval::closed(p.x0, xc));
                    } else {
                        parts.push(Interval::closed(xc, p.x1));
                    }
                }
            }
        }
        IntervalSet::new(parts)
    }
}

fn check_level(n: u32) -> Result<(), PlError> {
    if n == 0 || n > MAX_FOLD_LEVEL {
        return Err(PlError::FoldLevel {
            level: n,
            cap: MAX_FOLD_LEVEL,
        });
    }
    Ok(())
}

/// Sorted union of breakpoint lists, identifying points closer than `ε_geom`.
pub fn merge_knots(lists: &[&[f64]]) -> Vec<f64> {
    let mut all: Vec<f64> = lists.iter().flat_map(|l| l.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for x in all {
        match out.last() {
            Some(&last) if x - last < EPS_GEOM => {}
            _ => out.push(x),
        }
    }
    out
}

/// Splits every gap of a sorted knot list into `refine` equal parts.
pub fn refine_knots(knots: &[f64], refine: usize) -> Vec<f64> {
    let refine = refine.max(1);
    let mut out = Vec::with_capacity((knots.len() - 1) * refine + 1);
    for w in knots.windows(2) {
        for k in 0..refine {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / refine as f64);
        }
    }
    out.push(*knots.last().unwrap());
    out
}
