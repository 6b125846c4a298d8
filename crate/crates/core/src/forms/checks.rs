use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{EnergyForm, FormDescriptor, FormError, PlIntervalForm};
use crate::pl::{PlFunction, PlMap, TriangleWave, DEFAULT_PIECE_CAP, EPS_GEOM};
use crate::sampler::PlSampler;

/// Slack below `-CLARKSON_TOL` counts as a violation.
pub const CLARKSON_TOL: f64 = 1e-9;

/// Normalized slacks of CI1–CI4 from the energies of `u`, `v`, `u + v`,
/// `u − v`; `None` marks an inequality that does not apply at this `p`.
///
/// Each slack is divided by `E(u+v) + E(u−v) + 2(E(u) + E(v))`, so it is
/// scale-free and lies in `[-1, 1]`.
pub fn clarkson_slacks(p: f64, eu: f64, ev: f64, e_sum: f64, e_diff: f64) -> [Option<f64>; 4] {
    let q = p / (p - 1.0);
    let (fu, fv) = (eu.powf(1.0 / p), ev.powf(1.0 / p));
    let dual = 2.0 * (fu.powf(q) + fv.powf(q)).powf(p - 1.0);
    let mid = e_sum + e_diff;
    let primal = 2.0 * (eu + ev);
    let scale = mid + primal;
    if scale == 0.0 {
        let z = Some(0.0);
        return [
            (p <= 2.0).then_some(0.0),
            (p <= 2.0).then_some(0.0),
            (p >= 2.0).then_some(0.0),
            (p >= 2.0).then_some(0.0),
        ]
        .map(|s| s.and(z));
    }
    let small = p <= 2.0;
    let large = p >= 2.0;
    [
        small.then(|| (mid - dual) / scale),
        small.then(|| (primal - mid) / scale),
        large.then(|| (dual - mid) / scale),
        large.then(|| (mid - primal) / scale),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct ClarksonReport {
    pub p: f64,
    pub seed: u64,
    pub trials: u64,
    /// Worst normalized slack of CI1–CI4; `None` where inapplicable.
    pub worst: [Option<f64>; 4],
    /// Trial index attaining each worst slack.
    pub worst_trial: [Option<u64>; 4],
    pub pass: bool,
}

/// Samples `trials` pairs `(u, v)` and records the worst slack of each
/// applicable Clarkson inequality.
pub fn check_clarkson<F: EnergyForm>(
    form: &F,
    sampler: &PlSampler,
    trials: u64,
) -> Result<ClarksonReport, FormError> {
    let p = form.exponent();
    let per_trial: Vec<[Option<f64>; 4]> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = sampler.rng(t);
            let u = form.sample(sampler, &mut rng);
            let v = form.sample(sampler, &mut rng);
            clarkson_pair(form, &u, &v)
        })
        .collect::<Result<_, _>>()?;
    let mut worst = [None; 4];
    let mut worst_trial = [None; 4];
    for (t, slacks) in per_trial.iter().enumerate() {
        for i in 0..4 {
            if let Some(s) = slacks[i] {
                if worst[i].map_or(true, |w| s < w) {
                    worst[i] = Some(s);
                    worst_trial[i] = Some(t as u64);
                }
            }
        }
    }
    let pass = worst.iter().flatten().all(|&s| s >= -CLARKSON_TOL);
    Ok(ClarksonReport {
        p,
        seed: sampler.seed,
        trials,
        worst,
        worst_trial,
        pass,
    })
}

fn clarkson_pair<F: EnergyForm>(form: &F, u: &F::Func, v: &F::Func) -> Result<[Option<f64>; 4], FormError> {
    let eu = form.energy_of(u)?;
    let ev = form.energy_of(v)?;
    let es = form.energy_of(&form.combine(1.0, u, 1.0, v)?)?;
    let ed = form.energy_of(&form.combine(1.0, u, -1.0, v)?)?;
    Ok(clarkson_slacks(form.exponent(), eu, ev, es, ed))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "note", rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Holds by construction of the model; not sampled.
    ModelFact(String),
    /// The model does not satisfy the hypothesis the check needs.
    NotApplicable(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckItem {
    pub id: String,
    pub description: String,
    pub status: CheckStatus,
    pub worst_slack: Option<f64>,
    pub tolerance: f64,
    pub trials: u64,
}

impl CheckItem {
    fn sampled(id: &str, description: &str, worst: f64, tolerance: f64, trials: u64) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            status: if worst >= -tolerance {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            worst_slack: Some(worst),
            tolerance,
            trials,
        }
    }

    fn fixed(id: &str, description: &str, status: CheckStatus) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            status,
            worst_slack: None,
            tolerance: 0.0,
            trials: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub form: FormDescriptor,
    pub seed: u64,
    pub trials: u64,
    pub items: Vec<CheckItem>,
    /// True when no item failed.
    pub pass: bool,
}

#[derive(Default, Clone, Copy)]
struct TrialSlacks {
    homogeneity: f64,
    triangle: f64,
    unit: f64,
    normal: f64,
    locality: Option<f64>,
    minmax: f64,
}

impl TrialSlacks {
    fn min(self, o: Self) -> Self {
        Self {
            homogeneity: self.homogeneity.min(o.homogeneity),
            triangle: self.triangle.min(o.triangle),
            unit: self.unit.min(o.unit),
            normal: self.normal.min(o.normal),
            locality: match (self.locality, o.locality) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
            minmax: self.minmax.min(o.minmax),
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn assumption_trial<F: EnergyForm>(
    form: &F,
    sampler: &PlSampler,
    trial: u64,
) -> Result<TrialSlacks, FormError> {
    let p = form.exponent();
    let mut rng = sampler.rng(trial);
    let f = form.sample(sampler, &mut rng);
    let g = form.sample(sampler, &mut rng);
    let ef = form.energy_of(&f)?;
    let eg = form.energy_of(&g)?;
    let (ff, fg) = (ef.powf(1.0 / p), eg.powf(1.0 / p));

    let c: f64 = rng.gen_range(-3.0..3.0);
    let scaled = form.energy_of(&form.combine(c, &f, 0.0, &g)?)?;
    let homogeneity = -rel(scaled, c.abs().powf(p) * ef);

    let sum = form.energy_of(&form.combine(1.0, &f, 1.0, &g)?)?;
    let triangle = ff + fg - sum.powf(1.0 / p);

    let radius = form.sup_norm(&f) + 1.0;
    let unit_map = PlMap::new(vec![-radius, 0.0, 1.0, radius], vec![0.0, 0.0, 1.0, 1.0])?;
    let unit = (ef - form.energy_of(&form.compose_with(&unit_map, &f)?)?) / ef.max(1.0);
    let phi = sampler.contraction(&mut rng, radius);
    let normal = (ef - form.energy_of(&form.compose_with(&phi, &f)?)?) / ef.max(1.0);

    let locality = match form.separated_pair(sampler, &mut rng) {
        Some((a, b)) => {
            let ea = form.energy_of(&a)?;
            let eb = form.energy_of(&b)?;
            let eab = form.energy_of(&form.combine(1.0, &a, 1.0, &b)?)?;
            Some(-rel(eab, ea + eb))
        }
        None => None,
    };

    let shift: f64 = rng.gen_range(0.0..1.0);
    let (mx, mn) = form.max_min_shifted(&f, &g, shift)?;
    let bound = ff + fg;
    let minmax = (bound - form.energy_of(&mx)?.powf(1.0 / p)).min(bound - form.energy_of(&mn)?.powf(1.0 / p));

    Ok(TrialSlacks {
        homogeneity,
        triangle,
        unit,
        normal,
        locality,
        minmax,
    })
}

/// Runs the sampled surrogates of the standing assumptions on `form`.
pub fn check_assumptions<F: EnergyForm>(
    form: &F,
    sampler: &PlSampler,
    trials: u64,
) -> Result<AssumptionReport, FormError> {
    let trials = trials.max(1);
    let slacks = (0..trials)
        .into_par_iter()
        .map(|t| assumption_trial(form, sampler, t))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .reduce(TrialSlacks::min)
        .expect("at least one trial");
    let clarkson = check_clarkson(form, sampler, trials)?;
    let clarkson_worst = clarkson
        .worst
        .iter()
        .flatten()
        .fold(f64::INFINITY, |m, &s| m.min(s));

    let mut items = vec![
        CheckItem::fixed(
            "F1",
            "(F, E_1) is a Banach space",
            CheckStatus::ModelFact("finite-dimensional or Sobolev-type model space".into()),
        ),
        CheckItem::sampled("homogeneity", "E(cf) = |c|^p E(f)", slacks.homogeneity, 1e-12, trials),
        CheckItem::sampled(
            "triangle",
            "E(f+g)^{1/p} <= E(f)^{1/p} + E(g)^{1/p}",
            slacks.triangle,
            1e-9,
            trials,
        ),
        CheckItem::sampled("F2", "Clarkson inequalities for E^{1/p}", clarkson_worst, CLARKSON_TOL, trials),
        CheckItem::sampled("F3", "unit contraction E((f ∧ 1)^+) <= E(f)", slacks.unit, 1e-9, trials),
        CheckItem::sampled(
            "normal_contraction",
            "E(φ∘f) <= E(f) for 1-Lipschitz φ with φ(0) = 0",
            slacks.normal,
            1e-9,
            trials,
        ),
    ];
    items.push(match slacks.locality {
        Some(s) => CheckItem::sampled("F4", "E(f+g) = E(f) + E(g) for separated supports", s, 1e-12, trials),
        None => CheckItem::fixed(
            "F4",
            "E(f+g) = E(f) + E(g) for separated supports",
            CheckStatus::NotApplicable("model deviation: the form is not strongly local".into()),
        ),
    });
    items.push(CheckItem::sampled(
        "minmax",
        "E(f ∨ (g−a))^{1/p}, E(f ∧ (g+a))^{1/p} <= E(f)^{1/p} + E(g)^{1/p}",
        slacks.minmax,
        1e-9,
        trials,
    ));
    items.push(CheckItem::fixed(
        "F5",
        "regularity",
        CheckStatus::ModelFact("PL functions are dense in the model".into()),
    ));
    let pass = items.iter().all(|i| i.status != CheckStatus::Fail);
    Ok(AssumptionReport {
        form: form.descriptor(),
        seed: sampler.seed,
        trials,
        items,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldIdentityReport {
    /// `E(φ∘f)`.
    pub lhs: f64,
    /// `Σ LIP(φ|cell)^p E(C_cell∘f)`.
    pub rhs: f64,
    pub rel_error: f64,
    /// Highest `n` for which `E(T_n∘f) = E(f)` was checked.
    pub fold_levels_checked: u32,
    pub fold_max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks the decomposition of `E(φ∘f)` over a partition on whose cells `φ`
/// is affine, and the invariance `E(T_n∘f) = E(f)` for `n ≤ fold_cap`
/// (stopping early once `T_n∘f` would exceed the piece cap).
pub fn check_fold_identity(
    form: &PlIntervalForm,
    f: &PlFunction,
    phi: &PlMap,
    partition: &[f64],
    fold_cap: u32,
) -> Result<FoldIdentityReport, FormError> {
    const TOL: f64 = 1e-9;
    let p = form.p();
    let (min, max) = (f.min_value(), f.max_value());
    let spans = partition.len() >= 2
        && partition.windows(2).all(|w| w[0] < w[1])
        && partition[0] <= min + EPS_GEOM
        && partition[partition.len() - 1] >= max - EPS_GEOM;
    if !spans {
        return Err(FormError::PartitionRange {
            lo: partition.first().copied().unwrap_or(f64::NAN),
            hi: partition.last().copied().unwrap_or(f64::NAN),
            min,
            max,
        });
    }
    let mut rhs = 0.0;
    for w in partition.windows(2) {
        if !phi.is_affine_on(w[0], w[1]) {
            return Err(FormError::NotAffine { lo: w[0], hi: w[1] });
        }
        let cut = f.cut(w[0], w[1])?;
        rhs += phi.lipschitz_on(w[0], w[1]).powf(p) * form.energy(&cut);
    }
    let lhs = form.energy(&f.compose(phi)?);
    let rel_error = if lhs == rhs { 0.0 } else { rel(lhs, rhs) };

    let ef = form.energy(f);
    let mut levels = 0;
    let mut fold_err: f64 = 0.0;
    let total_variation: f64 = f.pieces().map(|q| (q.y1 - q.y0).abs()).sum();
    for n in 1..=fold_cap {
        let expected_pieces = total_variation * (1u64 << n.min(62)) as f64 + f.n_pieces() as f64;
        if expected_pieces > DEFAULT_PIECE_CAP as f64 {
            break;
        }
        let folded = f.compose(&TriangleWave::new(n))?;
        let e = form.energy(&folded);
        fold_err = fold_err.max(if e == ef { 0.0 } else { rel(e, ef) });
        levels = n;
    }
    Ok(FoldIdentityReport {
        lhs,
        rhs,
        rel_error,
        fold_levels_checked: levels,
        fold_max_rel_error: fold_err,
        tolerance: TOL,
        pass: rel_error <= TOL && fold_err <= TOL,
    })
}

/// `E(φ1∘f) ≤ E(φ2∘f)` when `|φ1'| ≤ |φ2'|` a.e.; returns the normalized
/// slack `(E(φ2∘f) − E(φ1∘f)) / max(E(φ2∘f), 1)`, or `None` when the slope
/// hypothesis fails on the range of `f`.
pub fn check_fold_domination(
    form: &PlIntervalForm,
    f: &PlFunction,
    phi1: &PlMap,
    phi2: &PlMap,
) -> Result<Option<f64>, FormError> {
    let knots = crate::pl::merge_knots(&[phi1.knots(), phi2.knots(), &[f.min_value(), f.max_value()]]);
    let dominated = knots
        .windows(2)
        .filter(|w| w[1] > f.min_value() && w[0] < f.max_value())
        .all(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            match (phi1.slope_at(mid), phi2.slope_at(mid)) {
                (Some(a), Some(b)) => a.abs() <= b.abs() + 1e-12,
                _ => false,
            }
        });
    if !dominated {
        return Ok(None);
    }
    let e1 = form.energy(&f.compose(phi1)?);
    let e2 = form.energy(&f.compose(phi2)?);
    Ok(Some((e2 - e1) / e2.max(1.0)))
}
