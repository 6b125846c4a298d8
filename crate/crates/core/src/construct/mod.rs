//! The cut-and-fold construction of energy measures on the PL interval model.
//!
//! For `f, g` and a level `a`, the cell functions `f_n^{g,a} = T_n∘f ∧ S_n^a∘g`
//! have energies decreasing to `F_f^g(a) = μ_⟨f⟩({g ≤ a})`. Everything in
//! this module is computed from those limits alone: distributions, outer
//! measures of sets through witness families, and densities on a grid. The
//! closed-form density `w|f'|^p` is only used as an independent reference.

mod cell;
mod measure;

pub use cell::{cell_energy, cell_energy_parts, cell_function, CellEnergy, RAMP_FOLD_LIMIT};
pub use measure::{density_gap, energy_measure, reference_measure, EnergyMeasure};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forms::{FormError, PlIntervalForm};
use crate::pl::{Interval, IntervalSet, PlError, PlFunction, MAX_FOLD_LEVEL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstructError {
    #[error("invalid fold schedule: {0}")]
    Schedule(String),
    #[error("F value at a = {a} did not converge by n = {n_max} (last change {last_change:e})")]
    NoConvergence { a: f64, n_max: u32, last_change: f64 },
    #[error("negative measure {value:e} on cell [{lo}, {hi}] beyond slack {slack:e}")]
    NegativeMass { lo: f64, hi: f64, value: f64, slack: f64 },
    #[error("total mass {mass} differs from E(f) = {energy}")]
    TotalMass { mass: f64, energy: f64 },
    #[error("no admissible witness in the family")]
    EmptyFamily,
    #[error("cover hypothesis fails: {0}")]
    Cover(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Pl(#[from] PlError),
}

/// Discretization of `lim_n E(f_n^{g,a})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldSchedule {
    pub n_min: u32,
    pub n_max: u32,
    /// Relative to `E(f)`, or absolute when `E(f) = 0`.
    pub rel_tol: f64,
    /// Consecutive stable steps required.
    pub stall_count: u32,
}

impl Default for FoldSchedule {
    fn default() -> Self {
        Self {
            n_min: 4,
            n_max: 40,
            rel_tol: 1e-6,
            stall_count: 2,
        }
    }
}

impl FoldSchedule {
    pub fn new(n_min: u32, n_max: u32, rel_tol: f64, stall_count: u32) -> Result<Self, ConstructError> {
        let s = Self {
            n_min,
            n_max,
            rel_tol,
            stall_count,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ConstructError> {
        if !(1 <= self.n_min && self.n_min <= self.n_max && self.n_max <= MAX_FOLD_LEVEL) {
            return Err(ConstructError::Schedule(format!(
                "need 1 <= n_min ({}) <= n_max ({}) <= {MAX_FOLD_LEVEL}",
                self.n_min, self.n_max
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(ConstructError::Schedule(format!("rel_tol {} must be positive", self.rel_tol)));
        }
        if self.stall_count == 0 {
            return Err(ConstructError::Schedule("stall_count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub n: u32,
    pub energy: f64,
    pub inf_so_far: f64,
    /// Energy on the ramp `{a < g < a + 2^{-n}}`, an upper bound on
    /// `energy − F_f^g(a)`.
    pub ramp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub a: f64,
    pub steps: Vec<TraceStep>,
    pub converged: bool,
    /// Infimum of the recorded energies.
    pub value: f64,
}

impl ConvergenceTrace {
    pub fn last_change(&self) -> f64 {
        match self.steps.as_slice() {
            [.., x, y] => (y.energy - x.energy).abs(),
            _ => f64::INFINITY,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,energy,inf_so_far,ramp\n");
        for s in &self.steps {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", s.n, s.energy, s.inf_so_far, s.ramp));
        }
        out
    }

    fn require_converged(&self, sched: &FoldSchedule) -> Result<f64, ConstructError> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(ConstructError::NoConvergence {
                a: self.a,
                n_max: sched.n_max,
                last_change: self.last_change(),
            })
        }
    }
}

fn scale_of(ef: f64) -> f64 {
    if ef > 0.0 {
        ef
    } else {
        1.0
    }
}

/// `F_f^g(a)`: energies of the cell functions for `n = n_min, …` until they
/// change by less than `rel_tol · E(f)` on `stall_count` consecutive steps.
///
/// On `{g ≤ a}` every cell function is `T_m∘f`, so `F_f^g(a)` is at least
/// the energy there and `E_n − F_f^g(a)` is at most the ramp energy. A step
/// counts toward the stall only while that ramp energy is within tolerance;
/// the cell energies can repeat exactly over several `n` well before the
/// limit.
pub fn f_value(
    form: &PlIntervalForm,
    f: &PlFunction,
    g: &PlFunction,
    a: f64,
    sched: &FoldSchedule,
) -> Result<ConvergenceTrace, ConstructError> {
    sched.validate()?;
    let tol = sched.rel_tol * scale_of(form.energy(f));
    let mut steps: Vec<TraceStep> = Vec::new();
    let mut inf = f64::INFINITY;
    let mut stable = 0;
    let mut converged = false;
    for n in sched.n_min..=sched.n_max {
        let parts = cell_energy_parts(form, f, g, a, n)?;
        let e = parts.below + parts.ramp;
        if let Some(prev) = steps.last() {
            if parts.ramp <= tol && (e - prev.energy).abs() <= tol {
                stable += 1;
            } else {
                stable = 0;
            }
        }
        inf = inf.min(e);
        steps.push(TraceStep {
            n,
            energy: e,
            inf_so_far: inf,
            ramp: parts.ramp,
        });
        if stable >= sched.stall_count {
            converged = true;
            break;
        }
    }
    Ok(ConvergenceTrace {
        a,
        steps,
        converged,
        value: inf,
    })
}

/// `F_f^g(a)` for several levels in parallel, requiring convergence.
pub fn f_values(
    form: &PlIntervalForm,
    f: &PlFunction,
    g: &PlFunction,
    levels: &[f64],
    sched: &FoldSchedule,
) -> Result<Vec<f64>, ConstructError> {
    levels
        .par_iter()
        .map(|&a| f_value(form, f, g, a, sched)?.require_converged(sched))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Distribution {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub energy: f64,
    /// Most negative increment `F(a_{i+1}) − F(a_i)`.
    pub worst_increment: f64,
    pub monotone: bool,
    /// Set when the grid reaches below `min g − 1` and above `max g`:
    /// whether the first value is ≈ 0 and the last ≈ `E(f)`.
    pub limits_ok: Option<bool>,
}

/// Samples `a ↦ F_f^g(a)` and checks it is a distribution function of a
/// measure of total mass `E(f)`.
pub fn distribution(
    form: &PlIntervalForm,
    f: &PlFunction,
    g: &PlFunction,
    levels: &[f64],
    sched: &FoldSchedule,
) -> Result<Distribution, ConstructError> {
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(ConstructError::Argument("levels must be sorted".into()));
    }
    let values = f_values(form, f, g, levels, sched)?;
    let energy = form.energy(f);
    let slack = sched.rel_tol * scale_of(energy);
    let worst_increment = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let limits_ok = match (levels.first(), levels.last()) {
        (Some(&lo), Some(&hi)) if lo < g.min_value() - 1.0 && hi >= g.max_value() => Some(
            values[0].abs() <= slack && (values[values.len() - 1] - energy).abs() <= slack,
        ),
        _ => None,
    };
    Ok(Distribution {
        levels: levels.to_vec(),
        values,
        energy,
        worst_increment,
        monotone: worst_increment >= -slack || levels.len() < 2,
        limits_ok,
    })
}

/// Gap between `E(f)` and `F_f^g(a) + F_f^{−g}(−a−ε)` for a small `ε`,
/// the reflection identity of the distribution.
#[derive(Clone, Debug, Serialize)]
pub struct ReflectionReport {
    pub below: f64,
    pub above: f64,
    pub energy: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const REFLECTION_EPS: f64 = 1e-10;

pub fn reflection_check(
    form: &PlIntervalForm,
    f: &PlFunction,
    g: &PlFunction,
    a: f64,
    sched: &FoldSchedule,
) -> Result<ReflectionReport, ConstructError> {
    let below = f_value(form, f, g, a, sched)?.require_converged(sched)?;
    let above = f_value(form, f, &g.scale(-1.0), -a - REFLECTION_EPS, sched)?.require_converged(sched)?;
    let energy = form.energy(f);
    let gap = (below + above - energy).abs();
    let tolerance = 2.0 * sched.rel_tol * scale_of(energy);
    Ok(ReflectionReport {
        below,
        above,
        energy,
        gap,
        tolerance,
        pass: gap <= tolerance,
    })
}

/// A witness `g` with `{g ≤ −1}` equal to the closure of `set`:
/// `g(x) = dist(x, set) − 1`.
pub fn set_witness(set: &IntervalSet) -> Option<(PlFunction, f64)> {
    let comps: Vec<(f64, f64)> = set.components().iter().map(|iv| (iv.lo, iv.hi)).collect();
    closure_witness(&comps).map(|g| (g, -1.0))
}

fn closure_witness(comps: &[(f64, f64)]) -> Option<PlFunction> {
    if comps.is_empty() {
        return None;
    }
    let eval = |x: f64| {
        comps
            .iter()
            .map(|&(lo, hi)| (lo - x).max(x - hi).max(0.0))
            .fold(f64::INFINITY, f64::min)
            - 1.0
    };
    let mut knots = vec![0.0, 1.0];
    for (i, &(lo, hi)) in comps.iter().enumerate() {
        knots.extend([lo, hi]);
        if let Some(&(next, _)) = comps.get(i + 1) {
            knots.push(0.5 * (hi + next));
        }
    }
    knots.retain(|x| (0.0..=1.0).contains(x));
    knots.sort_by(f64::total_cmp);
    let knots = crate::pl::merge_knots(&[&knots]);
    PlFunction::interpolate(&knots, eval).ok()
}

/// Canonical witnesses `(g, a)` with `a < 0` and `{g ≤ a} ⊆ U`.
///
/// Closed components are used as they are; open ends are pulled in by
/// `2^{-k}` of the component length for `k = 1..=depth`. Components touching
/// an end of `[0, 1]` also get the one-sided witnesses `x − hi − 1` and
/// `lo − x − 1`.
pub fn canonical_witnesses(u: &IntervalSet, depth: u32) -> Vec<(PlFunction, f64)> {
    let mut family = Vec::new();
    let comps = u.components();
    if comps.is_empty() {
        return family;
    }
    let all_closed = comps.iter().all(|iv| iv.lo_closed && iv.hi_closed);
    let shrink_levels: Vec<Option<u32>> = if all_closed {
        vec![None]
    } else {
        (1..=depth.max(1)).map(Some).collect()
    };
    for k in shrink_levels {
        let shrunk: Vec<(f64, f64)> = comps
            .iter()
            .filter_map(|iv| {
                let d = k.map_or(0.0, |k| (iv.hi - iv.lo) * 0.5f64.powi(k as i32 + 1));
                let lo = if iv.lo_closed { iv.lo } else { iv.lo + d };
                let hi = if iv.hi_closed { iv.hi } else { iv.hi - d };
                (lo <= hi).then_some((lo, hi))
            })
            .collect();
        if let Some(g) = closure_witness(&shrunk) {
            family.push((g, -1.0));
        }
    }
    for iv in comps {
        if iv.lo == 0.0 && iv.lo_closed && iv.hi_closed {
            family.push((PlFunction::linear(1.0, -iv.hi - 1.0), -1.0));
        }
        if iv.hi == 1.0 && iv.hi_closed && iv.lo_closed {
            family.push((PlFunction::linear(-1.0, iv.lo - 1.0), -1.0));
        }
    }
    family
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterMeasureBound {
    pub value: f64,
    pub best: Option<usize>,
    pub admissible: usize,
    /// Index and reason for every skipped witness.
    pub skipped: Vec<(usize, String)>,
    pub all_converged: bool,
}

/// `sup F_f^g(a)` over admissible pairs of `family` (`a < 0`,
/// `{g ≤ a} ⊆ U`): a lower bound for `μ_⟨f⟩(U)`.
pub fn outer_measure_lb(
    form: &PlIntervalForm,
    f: &PlFunction,
    u: &IntervalSet,
    family: &[(PlFunction, f64)],
    sched: &FoldSchedule,
) -> Result<OuterMeasureBound, ConstructError> {
    let mut skipped = Vec::new();
    let mut admissible = Vec::new();
    for (i, (g, a)) in family.iter().enumerate() {
        if !(*a < 0.0) {
            skipped.push((i, format!("level {a} is not negative")));
        } else if !g.sublevel_set(*a).is_subset_of(u) {
            skipped.push((i, format!("sublevel set {} is not inside {u}", g.sublevel_set(*a))));
        } else {
            admissible.push(i);
        }
    }
    if admissible.is_empty() {
        return Err(ConstructError::EmptyFamily);
    }
    let traces = admissible
        .par_iter()
        .map(|&i| f_value(form, f, &family[i].0, family[i].1, sched))
        .collect::<Result<Vec<_>, _>>()?;
    let (best_pos, best) = traces
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, t)| {
            if t.value > bv {
                (i, t.value)
            } else {
                (bi, bv)
            }
        });
    Ok(OuterMeasureBound {
        value: best,
        best: Some(admissible[best_pos]),
        admissible: admissible.len(),
        skipped,
        all_converged: traces.iter().all(|t| t.converged),
    })
}

/// Slope `E(f)^{1/p}` given to witnesses, so that the ramp energy of the cell
/// functions is of order `2^{-n} E(f)` rather than `2^{-n}`.
pub fn witness_slope(form: &PlIntervalForm, f: &PlFunction) -> f64 {
    let e = form.energy(f);
    if e > 0.0 {
        e.powf(1.0 / form.p())
    } else {
        1.0
    }
}

/// `μ_⟨f⟩(U)` as `F_f^{Lg}(−L)` for the closure witness `g` of `U`, with
/// `L` from [`witness_slope`]. Points carry no mass in the PL model, so
/// endpoint flags do not matter.
pub fn measure_of_set(
    form: &PlIntervalForm,
    f: &PlFunction,
    u: &IntervalSet,
    sched: &FoldSchedule,
) -> Result<f64, ConstructError> {
    match set_witness(u) {
        None => Ok(0.0),
        Some((g, a)) => {
            let l = witness_slope(form, f);
            f_value(form, f, &g.scale(l), a * l, sched)?.require_converged(sched)
        }
    }
}

/// `μ_⟨f⟩(A)` for every set of a family, in parallel.
pub fn measures_of_sets(
    form: &PlIntervalForm,
    f: &PlFunction,
    sets: &[IntervalSet],
    sched: &FoldSchedule,
) -> Result<Vec<f64>, ConstructError> {
    sets.par_iter().map(|u| measure_of_set(form, f, u, sched)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CoveringReport {
    pub covered: f64,
    pub cover_sum: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `F_f^g(a) ≤ Σ F_f^{h_i}(b_i)` whenever `{g ≤ a} ⊆ ∪ {h_i ≤ b_i}`.
pub fn covering_check(
    form: &PlIntervalForm,
    f: &PlFunction,
    g: &PlFunction,
    a: f64,
    covers: &[(PlFunction, f64)],
    sched: &FoldSchedule,
) -> Result<CoveringReport, ConstructError> {
    let target = g.sublevel_set(a);
    let union = covers
        .iter()
        .fold(IntervalSet::empty(), |acc, (h, b)| acc.union(&h.sublevel_set(*b)));
    if !target.is_subset_of(&union) {
        return Err(ConstructError::Cover(format!("{target} is not inside {union}")));
    }
    let covered = f_value(form, f, g, a, sched)?.require_converged(sched)?;
    let parts = covers
        .par_iter()
        .map(|(h, b)| f_value(form, f, h, *b, sched)?.require_converged(sched))
        .collect::<Result<Vec<_>, _>>()?;
    let cover_sum: f64 = parts.iter().sum();
    let tolerance = sched.rel_tol * scale_of(form.energy(f));
    let slack = cover_sum - covered;
    Ok(CoveringReport {
        covered,
        cover_sum,
        slack,
        tolerance,
        pass: slack >= -tolerance,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CapacityReport {
    /// `lim E(T_n∘f ∧ S_n^b∘g ∧ S_n^{−a'}∘(−g))`.
    pub two_sided: f64,
    /// `F_f^g(b) − F_f^g(a)`.
    pub increment: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Two-sided cut energy against the distribution increment on `(a, b]`,
/// for `a < a' < b`.
///
/// `S_n^b∘g ∧ S_n^{−a'}∘(−g) = S_n^c∘|g − m|` with `m = (b + a')/2` and
/// `c = (b − a')/2`, so the two-sided limit is itself an `F` value.
pub fn capacity_check(
    form: &PlIntervalForm,
    f: &PlFunction,
    g: &PlFunction,
    a: f64,
    a_prime: f64,
    b: f64,
    sched: &FoldSchedule,
) -> Result<CapacityReport, ConstructError> {
    if !(a < a_prime && a_prime < b) {
        return Err(ConstructError::Argument(format!("need a < a' < b, got {a}, {a_prime}, {b}")));
    }
    let m = 0.5 * (b + a_prime);
    let c = 0.5 * (b - a_prime);
    let dist = g.shift(-m).abs();
    let two_sided = f_value(form, f, &dist, c, sched)?.require_converged(sched)?;
    let fb = f_value(form, f, g, b, sched)?.require_converged(sched)?;
    let fa = f_value(form, f, g, a, sched)?.require_converged(sched)?;
    let increment = fb - fa;
    let tolerance = 2.0 * sched.rel_tol * scale_of(form.energy(f));
    let slack = increment - two_sided;
    Ok(CapacityReport {
        two_sided,
        increment,
        slack,
        tolerance,
        pass: slack >= -tolerance,
    })
}

/// Dyadic intervals of levels `0..=5` plus `extra` seeded unions of up to
/// three random closed intervals.
pub fn a_family(seed: u64, extra: usize) -> Vec<IntervalSet> {
    use rand::Rng;
    let mut family = IntervalSet::dyadic_family(5);
    let sampler = crate::sampler::PlSampler::new(seed);
    for i in 0..extra {
        let mut rng = sampler.rng(1_000_000 + i as u64);
        let k = rng.gen_range(1..=3usize);
        let parts = (0..k)
            .map(|_| {
                let x: f64 = rng.gen();
                let y: f64 = rng.gen();
                Interval::closed(x.min(y), x.max(y))
            })
            .collect();
        family.push(IntervalSet::new(parts));
    }
    family
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> FoldSchedule {
        FoldSchedule::new(4, 40, 1e-9, 2).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(FoldSchedule::new(0, 10, 1e-6, 2).is_err());
        assert!(FoldSchedule::new(5, 4, 1e-6, 2).is_err());
        assert!(FoldSchedule::new(4, 49, 1e-6, 2).is_err());
        assert!(FoldSchedule::new(4, 10, 0.0, 2).is_err());
        assert!(FoldSchedule::new(4, 10, 1e-6, 0).is_err());
        assert!(FoldSchedule::default().validate().is_ok());
    }

    #[test]
    fn f_value_examples() {
        let form = PlIntervalForm::new(2.0).unwrap();
        let id = PlFunction::identity();
        let t = f_value(&form, &id, &id, 0.5, &sched()).unwrap();
        assert!(t.converged);
        assert!((t.value - 0.5).abs() < 1e-8, "{}", t.value);
        for s in &t.steps {
            assert!(t.value <= s.energy + 1e-12);
        }
        // Above max g the plateau covers the whole range.
        let f = PlFunction::new(vec![0.0, 0.3, 1.0], vec![0.2, -0.7, 0.4]).unwrap();
        let t = f_value(&form, &f, &id, 1.0, &sched()).unwrap();
        assert!((t.value - form.energy(&f)).abs() < 1e-12);
        // Just below max g the first cuts still cover everything.
        let t = f_value(&form, &id, &id, 63.0 / 64.0, &sched()).unwrap();
        assert!(t.converged);
        assert!((t.value - 63.0 / 64.0).abs() < 1e-8, "{}", t.value);
        // A point carries no mass although E_7 = E_8 = E_9 here.
        let f = PlFunction::new(
            vec![0.0, 0.5120609463306236, 0.5877138736564611, 0.6828369456182892, 0.8828369456182892, 1.0],
            vec![-0.04463311606681919, 0.13855230450018508, 0.41180593127955656, 0.0653830975963709, 0.0653830975963709, 0.05409905618272412],
        )
        .unwrap();
        let x0 = 0.26113388674608534;
        let (g, a) = set_witness(&IntervalSet::closed(x0, x0)).unwrap();
        let l = witness_slope(&form, &f);
        let t = f_value(&form, &f, &g.scale(l), a * l, &sched()).unwrap();
        assert!(t.converged);
        assert!((t.steps[3].energy - t.steps[5].energy).abs() < 1e-12);
        assert!(t.value < 1e-6 * form.energy(&f), "{}", t.value);
        // Below min g − 1 the cell function vanishes.
        let t = f_value(&form, &f, &id, -1.5, &sched()).unwrap();
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn distribution_and_reflection() {
        let form = PlIntervalForm::new(3.0).unwrap();
        let f = PlFunction::new(vec![0.0, 0.3, 0.8, 1.0], vec![0.1, 0.9, -0.2, 0.0]).unwrap();
        let g = PlFunction::new(vec![0.0, 0.5, 1.0], vec![0.4, -0.6, 0.2]).unwrap();
        let levels: Vec<f64> = (0..=12).map(|i| -1.7 + 0.25 * i as f64).collect();
        let d = distribution(&form, &f, &g, &levels, &sched()).unwrap();
        assert!(d.monotone);
        assert_eq!(d.limits_ok, Some(true));
        for a in [-0.3, 0.0, 0.25] {
            let r = reflection_check(&form, &f, &g, a, &sched()).unwrap();
            assert!(r.pass, "{r:?}");
        }
        let c = PlFunction::constant(0.3);
        let d = distribution(&form, &c, &g, &levels, &sched()).unwrap();
        assert!(d.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn witnesses_realize_sets() {
        let set = IntervalSet::new(vec![Interval::closed(0.1, 0.2), Interval::closed(0.5, 0.9)]);
        let (g, a) = set_witness(&set).unwrap();
        assert_eq!(g.sublevel_set(a), set);
        let open = IntervalSet::new(vec![Interval::open(0.2, 0.6)]);
        for (g, a) in canonical_witnesses(&open, 6) {
            assert!(a < 0.0);
            assert!(g.sublevel_set(a).is_subset_of(&open));
        }
        assert!(set_witness(&IntervalSet::empty()).is_none());
    }

    #[test]
    fn outer_measure_examples() {
        let form = PlIntervalForm::new(2.0).unwrap();
        let id = PlFunction::identity();
        let fam = vec![(PlFunction::constant(-1.0), -0.5)];
        let r = outer_measure_lb(&form, &id, &IntervalSet::full(), &fam, &sched()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!(matches!(
            outer_measure_lb(&form, &id, &IntervalSet::empty(), &fam, &sched()),
            Err(ConstructError::EmptyFamily)
        ));
        let half = IntervalSet::closed(0.0, 0.5);
        let r = outer_measure_lb(&form, &id, &half, &canonical_witnesses(&half, 4), &sched()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-8);
    }

    #[test]
    fn covering_and_capacity() {
        let form = PlIntervalForm::new(2.0).unwrap();
        let f = PlFunction::new(vec![0.0, 0.4, 1.0], vec![0.0, 1.0, 0.3]).unwrap();
        let (whole, a) = set_witness(&IntervalSet::closed(0.1, 0.9)).unwrap();
        let (left, _) = set_witness(&IntervalSet::closed(0.1, 0.5)).unwrap();
        let (right, _) = set_witness(&IntervalSet::closed(0.5, 0.9)).unwrap();
        let r = covering_check(&form, &f, &whole, a, &[(left, -1.0), (right, -1.0)], &sched()).unwrap();
        assert!(r.pass && r.slack.abs() < 1e-7, "{r:?}");
        let (narrow, _) = set_witness(&IntervalSet::closed(0.1, 0.3)).unwrap();
        assert!(covering_check(&form, &f, &whole, a, &[(narrow, -1.0)], &sched()).is_err());

        let g = PlFunction::identity();
        let r = capacity_check(&form, &f, &g, 0.2, 0.3, 0.7, &sched()).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(capacity_check(&form, &f, &g, 0.3, 0.2, 0.7, &sched()).is_err());
    }

    #[test]
    fn a_family_shape() {
        let fam = a_family(9, 8);
        assert_eq!(fam.len(), 63 + 8);
        assert_eq!(fam, a_family(9, 8));
    }
}
