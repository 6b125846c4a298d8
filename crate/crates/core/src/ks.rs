//! Korevaar–Schoen functionals on sampled metric measure spaces.
//!
//! `J_{p,r}(u) = Σ_x Σ_{d(x,y)<r} |u(x) − u(y)|^p k_r(x, y) m(y) m(x)` with
//! the kernel `k_r(x, y) = 1_U(x) / (r^p m(B(x, r)))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::{measure_of_set, ConstructError, FoldSchedule};
use crate::forms::{pow_abs, PlIntervalForm};
use crate::pl::{IntervalSet, PlFunction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KsError {
    #[error("invalid space: {0}")]
    Space(String),
    #[error("invalid radius: {0}")]
    Radius(String),
    #[error("all functional values vanish")]
    Degenerate,
    #[error(transparent)]
    Construct(#[from] ConstructError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// Cell midpoints of a uniform grid on `[0, 1]`.
    Interval,
    /// Cell midpoints of a `side × side` grid on the flat torus `R²/Z²`.
    Torus { side: usize },
}

#[derive(Clone, Debug)]
pub struct SampledSpace {
    geometry: Geometry,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    spacing: f64,
}

impl SampledSpace {
    pub fn interval(n: usize) -> Result<Self, KsError> {
        if n < 2 {
            return Err(KsError::Space(format!("need at least two points, got {n}")));
        }
        let h = 1.0 / n as f64;
        Ok(Self {
            geometry: Geometry::Interval,
            points: (0..n).map(|i| [(i as f64 + 0.5) * h, 0.0]).collect(),
            weights: vec![h; n],
            spacing: h,
        })
    }

    pub fn torus(side: usize) -> Result<Self, KsError> {
        if side < 2 {
            return Err(KsError::Space(format!("need side at least 2, got {side}")));
        }
        let h = 1.0 / side as f64;
        let points = (0..side * side)
            .map(|k| [((k / side) as f64 + 0.5) * h, ((k % side) as f64 + 0.5) * h])
            .collect();
        Ok(Self {
            geometry: Geometry::Torus { side },
            points,
            weights: vec![h * h; side * side],
            spacing: h,
        })
    }

    /// Replaces the quadrature weights.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, KsError> {
        if weights.len() != self.points.len() {
            return Err(KsError::Space(format!(
                "{} weights for {} points",
                weights.len(),
                self.points.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(KsError::Space("weights must be nonnegative with positive total".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Smallest admissible radius.
    pub fn resolution_floor(&self) -> f64 {
        3.0 * self.spacing
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.points[i], self.points[j]);
        match self.geometry {
            Geometry::Interval => (a[0] - b[0]).abs(),
            Geometry::Torus { .. } => {
                let wrap = |d: f64| {
                    let d = d.abs();
                    d.min(1.0 - d)
                };
                wrap(a[0] - b[0]).hypot(wrap(a[1] - b[1]))
            }
        }
    }

    pub fn sample(&self, u: impl Fn(&[f64; 2]) -> f64) -> Vec<f64> {
        self.points.iter().map(u).collect()
    }

    /// Points of the open ball `B(x_i, r)` with the fraction of their weight
    /// inside it. On the interval each point carries its grid cell and the
    /// fraction is the exact overlap of the cell with the ball; on the torus
    /// points count whole when `d(x_i, x_j) < r`.
    fn neighbors(&self, i: usize, r: f64, offsets: &[(isize, isize)], out: &mut Vec<(usize, f64)>) {
        out.clear();
        match self.geometry {
            Geometry::Interval => {
                let (x, h) = (self.points[i][0], self.spacing);
                let (lo, hi) = (x - r, x + r);
                let start = self.points.partition_point(|q| q[0] + 0.5 * h <= lo);
                for (j, q) in self.points.iter().enumerate().skip(start) {
                    let (c0, c1) = (q[0] - 0.5 * h, q[0] + 0.5 * h);
                    if c0 >= hi {
                        break;
                    }
                    let frac = ((c1.min(hi) - c0.max(lo)) / h).clamp(0.0, 1.0);
                    if frac > 0.0 {
                        out.push((j, frac));
                    }
                }
            }
            Geometry::Torus { side } => {
                let s = side as isize;
                let (a, b) = ((i / side) as isize, (i % side) as isize);
                for &(da, db) in offsets {
                    let j = ((a + da).rem_euclid(s) * s + (b + db).rem_euclid(s)) as usize;
                    out.push((j, 1.0));
                }
            }
        }
    }

    /// Grid offsets inside the open ball of radius `r` (torus only).
    fn offsets(&self, r: f64) -> Vec<(isize, isize)> {
        let Geometry::Torus { side } = self.geometry else {
            return Vec::new();
        };
        let s = side as isize;
        let k = (r / self.spacing).ceil() as isize;
        let range: Vec<isize> = if 2 * k + 1 >= s {
            (-(s / 2)..s - s / 2).collect()
        } else {
            (-k..=k).collect()
        };
        let h = self.spacing;
        let wrap = |d: isize| {
            let d = d.rem_euclid(s);
            d.min(s - d) as f64 * h
        };
        let mut out = Vec::new();
        for &da in &range {
            for &db in &range {
                if wrap(da).hypot(wrap(db)) < r {
                    out.push((da, db));
                }
            }
        }
        out
    }
}

/// `m(B(x_i, r))` with the open ball, weighted as in the quadrature of
/// [`ks_energy`].
pub fn ball_measure(space: &SampledSpace, i: usize, r: f64) -> f64 {
    let offsets = space.offsets(r);
    let mut nb = Vec::new();
    space.neighbors(i, r, &offsets, &mut nb);
    nb.iter().map(|&(j, frac)| frac * space.weights[j]).sum()
}

/// Kernel `1_U(x) / (r^p m(B(x, r)))`; `U` constrains the first coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsKernel {
    pub r: f64,
    pub p: f64,
    #[serde(default)]
    pub restriction: Option<IntervalSet>,
}

impl KsKernel {
    pub fn new(r: f64, p: f64) -> Result<Self, KsError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(KsError::Radius(format!("r = {r} must be positive")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(KsError::Space(format!("p = {p} must exceed 1")));
        }
        Ok(Self { r, p, restriction: None })
    }

    pub fn restricted(mut self, set: IntervalSet) -> Self {
        self.restriction = Some(set);
        self
    }
}

/// `J_{p,r}(u)`. Per-point sums run in parallel and are reduced in index
/// order.
pub fn ks_energy(space: &SampledSpace, u: &[f64], kernel: &KsKernel) -> Result<f64, KsError> {
    if u.len() != space.len() {
        return Err(KsError::Space(format!("{} values for {} points", u.len(), space.len())));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(KsError::Space("non-finite function value".into()));
    }
    let (r, p) = (kernel.r, kernel.p);
    let offsets = space.offsets(r);
    let rp = r.powf(p);
    let parts: Vec<f64> = (0..space.len())
        .into_par_iter()
        .map_init(Vec::new, |nb, i| {
            if let Some(set) = &kernel.restriction {
                if !set.contains(space.points[i][0]) {
                    return 0.0;
                }
            }
            space.neighbors(i, r, &offsets, nb);
            let (mut s, mut ball) = (0.0, 0.0);
            for &(j, frac) in nb.iter() {
                let w = frac * space.weights[j];
                ball += w;
                s += w * pow_abs(u[i] - u[j], p);
            }
            if ball > 0.0 {
                space.weights[i] * s / (rp * ball)
            } else {
                0.0
            }
        })
        .collect();
    Ok(parts.iter().sum())
}

/// Number of trailing radii used for the liminf estimate and the fits.
pub const SCAN_WINDOW: usize = 3;

#[derive(Clone, Debug, Serialize)]
pub struct KsScan {
    pub p: f64,
    pub r: Vec<f64>,
    pub j: Vec<f64>,
    pub sup_so_far: Vec<f64>,
    /// Minimum over the last [`SCAN_WINDOW`] values.
    pub liminf_estimate: f64,
    /// `J(r) ≈ L + c r` through the last two radii.
    pub extrapolated: f64,
    pub linear_coefficient: f64,
    /// Spread of the two-point extrapolations over consecutive pairs of the
    /// last window.
    pub dispersion: f64,
    /// Least-squares slope of `log J` against `log r` over the last window.
    pub loglog_slope: f64,
    /// Set when `J` grows like `r^{-(p-1)/2}` or faster.
    pub divergent: bool,
}

impl KsScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,J,sup_so_far\n");
        for i in 0..self.r.len() {
            out.push_str(&format!("{:e},{:e},{:e}\n", self.r[i], self.j[i], self.sup_so_far[i]));
        }
        out
    }
}

fn check_radii(space: &SampledSpace, rs: &[f64]) -> Result<(), KsError> {
    if rs.len() < 2 {
        return Err(KsError::Radius("need at least two radii".into()));
    }
    if rs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(KsError::Radius("radii must be strictly decreasing".into()));
    }
    let floor = space.resolution_floor();
    if rs[rs.len() - 1] < floor {
        return Err(KsError::Radius(format!(
            "r = {} is below the resolution floor {floor}",
            rs[rs.len() - 1]
        )));
    }
    Ok(())
}

fn two_point(r0: f64, j0: f64, r1: f64, j1: f64) -> f64 {
    (r0 * j1 - r1 * j0) / (r0 - r1)
}

/// `J_{p,r}(u)` along a decreasing sequence of radii.
pub fn ks_limit_scan(space: &SampledSpace, u: &[f64], p: f64, rs: &[f64]) -> Result<KsScan, KsError> {
    check_radii(space, rs)?;
    let j = rs
        .iter()
        .map(|&r| ks_energy(space, u, &KsKernel::new(r, p)?))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sup = f64::NEG_INFINITY;
    let sup_so_far = j
        .iter()
        .map(|&v| {
            sup = sup.max(v);
            sup
        })
        .collect();
    let n = rs.len();
    let w = SCAN_WINDOW.min(n);
    let tail = n - w;
    let liminf_estimate = j[tail..].iter().copied().fold(f64::INFINITY, f64::min);
    let extrapolated = two_point(rs[n - 2], j[n - 2], rs[n - 1], j[n - 1]);
    let linear_coefficient = (j[n - 2] - j[n - 1]) / (rs[n - 2] - rs[n - 1]);
    let estimates: Vec<f64> = (tail + 1..n)
        .map(|k| two_point(rs[k - 1], j[k - 1], rs[k], j[k]))
        .collect();
    let dispersion = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - estimates.iter().copied().fold(f64::INFINITY, f64::min);
    let loglog_slope = if j[tail..].iter().all(|&v| v > 0.0) && w >= 2 {
        let xs: Vec<f64> = rs[tail..].iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = j[tail..].iter().map(|v| v.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / w as f64, ys.iter().sum::<f64>() / w as f64);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        cov / var
    } else {
        0.0
    };
    Ok(KsScan {
        p,
        r: rs.to_vec(),
        j,
        sup_so_far,
        liminf_estimate,
        extrapolated,
        linear_coefficient,
        dispersion,
        loglog_slope,
        divergent: loglog_slope < -0.5 * (p - 1.0),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakMonotonicity {
    pub sup: f64,
    pub window_min: f64,
    /// `sup_r J / min_{last window} J`.
    pub c_star: f64,
    pub finite: bool,
}

/// Empirical constant of `sup_r J ≤ C liminf_{r↓0} J` over the scanned radii.
pub fn check_weak_monotonicity(
    space: &SampledSpace,
    u: &[f64],
    p: f64,
    rs: &[f64],
) -> Result<WeakMonotonicity, KsError> {
    let scan = ks_limit_scan(space, u, p, rs)?;
    let sup = scan.sup_so_far[scan.sup_so_far.len() - 1];
    if sup <= 0.0 {
        return Err(KsError::Degenerate);
    }
    let window_min = scan.liminf_estimate;
    let c_star = sup / window_min;
    Ok(WeakMonotonicity {
        sup,
        window_min,
        c_star,
        finite: c_star.is_finite(),
    })
}

/// Test profiles on the first coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `x`.
    Linear,
    /// `sin 2πx`.
    Sine,
    /// Peak `1/2` at `x = 1/2`.
    Tent,
    /// `1_{x ≥ 1/2}`.
    Step,
}

impl Profile {
    pub fn eval(&self, x: &[f64; 2]) -> f64 {
        let t = x[0];
        match self {
            Self::Linear => t,
            Self::Sine => (2.0 * std::f64::consts::PI * t).sin(),
            Self::Tent => 0.5 - (t - 0.5).abs(),
            Self::Step => {
                if t >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// The profile as a PL function, when it is one.
    pub fn to_pl(&self) -> Option<PlFunction> {
        match self {
            Self::Linear => Some(PlFunction::identity()),
            Self::Tent => Some(PlFunction::tent(0.5, 0.5).expect("valid tent")),
            Self::Sine | Self::Step => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KsCanonical {
    pub scan: KsScan,
    /// `(p + 1) · lim J`.
    pub scaled_limit: f64,
    pub energy: f64,
    /// `μ_⟨u⟩([0, 1])` from the construction.
    pub canonical_mass: f64,
    pub energy_deviation: f64,
    pub mass_deviation: f64,
}

fn rel_dev(a: f64, b: f64) -> f64 {
    if b != 0.0 {
        (a - b).abs() / b.abs()
    } else {
        a.abs()
    }
}

/// `(p + 1) · lim J_{p,r}(u)` against `E(u)` and `μ_⟨u⟩(X)` on the interval.
pub fn ks_vs_canonical(
    space: &SampledSpace,
    u: &PlFunction,
    p: f64,
    rs: &[f64],
) -> Result<KsCanonical, KsError> {
    if space.geometry() != Geometry::Interval {
        return Err(KsError::Space("comparison needs the interval grid".into()));
    }
    let form = PlIntervalForm::new(p).map_err(|e| KsError::Space(e.to_string()))?;
    let values = space.sample(|x| u.eval(x[0]));
    let scan = ks_limit_scan(space, &values, p, rs)?;
    let scaled_limit = (p + 1.0) * scan.extrapolated;
    let energy = form.energy(u);
    let canonical_mass = measure_of_set(&form, u, &IntervalSet::full(), &FoldSchedule::default())?;
    Ok(KsCanonical {
        energy_deviation: rel_dev(scaled_limit, energy),
        mass_deviation: rel_dev(scaled_limit, canonical_mass),
        scan,
        scaled_limit,
        energy,
        canonical_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_measures() {
        let s = SampledSpace::interval(1000).unwrap();
        let h = s.spacing();
        assert!((ball_measure(&s, 500, 0.05) - 0.1).abs() <= 2.0 * h);
        assert!((ball_measure(&s, 0, 0.05) - 0.05).abs() <= 2.0 * h);
        assert!((ball_measure(&s, 10, 2.0) - 1.0).abs() < 1e-12);
        let t = SampledSpace::torus(64).unwrap();
        let area = ball_measure(&t, 100, 0.1);
        assert!((area - std::f64::consts::PI * 0.01).abs() < 0.02 * std::f64::consts::PI * 0.01 + 4.0 * 0.1 * t.spacing());
        assert!((ball_measure(&t, 5, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_profile_oracle() {
        let s = SampledSpace::interval(2000).unwrap();
        let u = s.sample(|x| x[0]);
        for (p, r) in [(2.0, 0.05), (3.0, 0.02)] {
            let j = ks_energy(&s, &u, &KsKernel::new(r, p).unwrap()).unwrap();
            assert!((j - 1.0 / (p + 1.0)).abs() < 0.02 / (p + 1.0), "p = {p}: {j}");
        }
        let c = s.sample(|_| 3.0);
        assert_eq!(ks_energy(&s, &c, &KsKernel::new(0.05, 2.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn homogeneity_and_restriction() {
        let s = SampledSpace::interval(500).unwrap();
        let u = s.sample(|x| Profile::Sine.eval(x));
        let k = KsKernel::new(0.04, 2.5).unwrap();
        let j = ks_energy(&s, &u, &k).unwrap();
        let scaled: Vec<f64> = u.iter().map(|v| -1.7 * v).collect();
        let js = ks_energy(&s, &scaled, &k).unwrap();
        assert!((js - 1.7f64.powf(2.5) * j).abs() <= 1e-12 * js);
        let small = ks_energy(&s, &u, &k.clone().restricted(IntervalSet::closed(0.2, 0.4))).unwrap();
        let large = ks_energy(&s, &u, &k.clone().restricted(IntervalSet::closed(0.1, 0.6))).unwrap();
        assert!(small <= large && large <= j);
        let clipped: Vec<f64> = u.iter().map(|v| v.clamp(-0.3, 0.5)).collect();
        assert!(ks_energy(&s, &clipped, &k).unwrap() <= j);
    }

    #[test]
    fn scans() {
        let s = SampledSpace::interval(4000).unwrap();
        let rs = [0.08, 0.04, 0.02, 0.01];
        let sine = s.sample(|x| Profile::Sine.eval(x));
        let scan = ks_limit_scan(&s, &sine, 2.0, &rs).unwrap();
        let exact = 2.0 * std::f64::consts::PI.powi(2) / 3.0;
        assert!((scan.extrapolated - exact).abs() < 0.03 * exact, "{scan:?}");
        assert!(!scan.divergent);
        let step = s.sample(|x| Profile::Step.eval(x));
        assert!(ks_limit_scan(&s, &step, 2.0, &rs).unwrap().divergent);
        let zero = s.sample(|_| 0.0);
        let z = ks_limit_scan(&s, &zero, 2.0, &rs).unwrap();
        assert!(z.j.iter().all(|&v| v == 0.0));
        assert!(matches!(check_weak_monotonicity(&s, &zero, 2.0, &rs), Err(KsError::Degenerate)));
        assert!(ks_limit_scan(&s, &sine, 2.0, &[0.01, 0.02]).is_err());
        assert!(ks_limit_scan(&s, &sine, 2.0, &[0.02, 0.0005]).is_err());
    }

    #[test]
    fn weak_monotonicity_constants() {
        let s = SampledSpace::interval(4000).unwrap();
        let rs = [0.1, 0.05, 0.025, 0.0125];
        let lin = check_weak_monotonicity(&s, &s.sample(|x| x[0]), 2.0, &rs).unwrap();
        assert!((lin.c_star - 1.0).abs() < 0.05, "{lin:?}");
        let sine = check_weak_monotonicity(&s, &s.sample(|x| Profile::Sine.eval(x)), 2.0, &rs).unwrap();
        assert!(sine.finite && sine.c_star <= 1.2, "{sine:?}");
    }

    #[test]
    fn torus_sine() {
        let t = SampledSpace::torus(96).unwrap();
        let u = t.sample(|x| Profile::Sine.eval(x));
        // Unit-disk constant for p = 2 is 1/4; ∫|∇u|² = 2π².
        let j = ks_energy(&t, &u, &KsKernel::new(0.1, 2.0).unwrap()).unwrap();
        let exact = std::f64::consts::PI.powi(2) / 2.0;
        assert!((j - exact).abs() < 0.05 * exact, "{j} vs {exact}");
    }

    #[test]
    fn canonical_comparison() {
        let s = SampledSpace::interval(4000).unwrap();
        let rs = [0.04, 0.02, 0.01];
        for prof in [Profile::Linear, Profile::Tent] {
            let c = ks_vs_canonical(&s, &prof.to_pl().unwrap(), 3.0, &rs).unwrap();
            assert!(c.energy_deviation < 0.03 && c.mass_deviation < 0.03, "{prof:?}: {c:?}");
        }
        let c = ks_vs_canonical(&s, &PlFunction::constant(1.0), 2.0, &rs).unwrap();
        assert_eq!(c.scaled_limit, 0.0);
        assert_eq!(c.energy, 0.0);
    }
}
