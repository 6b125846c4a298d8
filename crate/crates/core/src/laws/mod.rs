//! Executable checks of the calculus of energy measures on the PL interval
//! model.
//!
//! Each law samples seeded trials and records a normalized slack per trial;
//! a law passes when its worst slack is at least `−tolerance`. Measures of
//! sets come from a [`MeasureSource`]: either the closed-form density
//! `w|f'|^p` or the cut-and-fold construction.

mod quad;
mod two_variable;

pub use quad::gauss_legendre;
pub use two_variable::{
    functional_terms, integral_against_measure, law_chain_rule_two_variable,
    law_functional_identity, law_leibniz, law_multivariable_chain, law_two_variable,
    nu_closed_form, two_variable_measure, FunctionalTerms, Polynomial, SignedMeasureSample,
    RICHARDSON_STEPS, SLOPE_FLOOR,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::{measures_of_sets, ConstructError, FoldSchedule};
use crate::forms::{pow_abs, signed_pow, FormDescriptor, FormError, PlIntervalForm};
use crate::pl::{Cut, Interval, IntervalSet, PlError, PlFunction, PlMap, ScalarMap, TriangleWave};
use crate::sampler::PlSampler;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("extrapolation failed: {0}")]
    Extrapolation(String),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Pl(#[from] PlError),
}

/// Where measures of sets come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSource {
    /// The closed-form density `w|f'|^p`.
    Oracle,
    /// `F_f^g(a)` limits with closure witnesses.
    Construction { schedule: FoldSchedule },
}

impl MeasureSource {
    /// Construction with the schedule used by the law suite.
    pub fn construction() -> Self {
        Self::Construction {
            schedule: FoldSchedule {
                rel_tol: 1e-9,
                n_max: crate::pl::MAX_FOLD_LEVEL,
                ..FoldSchedule::default()
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Construction { .. } => "construction",
        }
    }

    /// Default tolerance for measure laws under this source.
    pub fn default_tolerance(&self) -> f64 {
        match self {
            Self::Oracle => 1e-9,
            Self::Construction { .. } => 1e-4,
        }
    }

    /// `μ_⟨f⟩(A)` for every `A` in `sets`.
    pub fn measures(
        &self,
        form: &PlIntervalForm,
        f: &PlFunction,
        sets: &[IntervalSet],
    ) -> Result<Vec<f64>, LawError> {
        match self {
            Self::Oracle => Ok(sets.iter().map(|a| oracle_measure(form, f, a)).collect()),
            Self::Construction { schedule } => Ok(measures_of_sets(form, f, sets, schedule)?),
        }
    }
}

/// `∫_A g · w|u'|^{p-2}u'v' dx`, exact for PL `u, v, g`.
pub fn weighted_integral(
    form: &PlIntervalForm,
    u: &PlFunction,
    v: &PlFunction,
    g: Option<&PlFunction>,
    set: &IntervalSet,
) -> f64 {
    let p = form.p();
    let mut fs = vec![u, v];
    if let Some(g) = g {
        fs.push(g);
    }
    let mut total = 0.0;
    for c in form.cells(&fs) {
        let d = c.weight * signed_pow(c.slopes[0], p) * c.slopes[1];
        if d == 0.0 {
            continue;
        }
        for iv in set.components() {
            let (lo, hi) = (iv.lo.max(c.x0), iv.hi.min(c.x1));
            if hi > lo {
                let avg = g.map_or(1.0, |g| g.eval(0.5 * (lo + hi)));
                total += d * avg * (hi - lo);
            }
        }
    }
    total
}

/// `μ_⟨f⟩(A) = ∫_A w|f'|^p dx`.
pub fn oracle_measure(form: &PlIntervalForm, f: &PlFunction, set: &IntervalSet) -> f64 {
    weighted_integral(form, f, f, None, set)
}

/// Shared parameters of a law run.
#[derive(Clone, Debug)]
pub struct LawContext {
    pub form: PlIntervalForm,
    pub sampler: PlSampler,
    pub trials: usize,
    pub family: Vec<IntervalSet>,
    pub source: MeasureSource,
    /// Tolerance for measure identities and inequalities.
    pub tolerance: f64,
    /// Tolerance for laws that differentiate in `t`.
    pub derivative_tolerance: f64,
}

/// Number of seeded unions added to the dyadic intervals.
pub const A_FAMILY_EXTRA: usize = 8;

impl LawContext {
    pub fn new(form: PlIntervalForm, sampler: PlSampler, trials: usize, source: MeasureSource) -> Self {
        let family = crate::construct::a_family(sampler.seed, A_FAMILY_EXTRA);
        let tolerance = source.default_tolerance();
        let derivative_tolerance = if form.p() >= 2.0 { 1e-3 } else { 1e-2 };
        Self {
            form,
            sampler,
            trials,
            family,
            source,
            tolerance,
            derivative_tolerance,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_family(mut self, family: Vec<IntervalSet>) -> Self {
        self.family = family;
        self
    }

    fn measures(&self, f: &PlFunction) -> Result<Vec<f64>, LawError> {
        self.source.measures(&self.form, f, &self.family)
    }

    fn report(&self, law: &str, tolerance: f64, rows: Vec<TrialOutcome>) -> LawReport {
        LawReport::from_rows(law, self.form.descriptor(), self.sampler.seed, self.source.name(), tolerance, rows)
    }

    /// Runs `trial` for every trial index in parallel.
    fn run<F>(&self, law: &str, tolerance: f64, trial: F) -> Result<LawReport, LawError>
    where
        F: Fn(u64, &mut ChaCha8Rng) -> Result<TrialOutcome, LawError> + Sync,
    {
        let rows = (0..self.trials as u64)
            .into_par_iter()
            .map(|t| trial(t, &mut self.sampler.rng(t)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.report(law, tolerance, rows))
    }
}

/// Worst slack of one trial and where it occurred.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub slack: f64,
    pub detail: String,
}

impl TrialOutcome {
    fn new(trial: u64) -> Self {
        Self {
            trial,
            slack: f64::INFINITY,
            detail: String::new(),
        }
    }

    fn record(&mut self, slack: f64, detail: impl FnOnce() -> String) {
        if slack < self.slack || slack.is_nan() {
            self.slack = slack;
            self.detail = detail();
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LawReport {
    pub law: String,
    pub form: FormDescriptor,
    pub seed: u64,
    pub source: String,
    pub trials: usize,
    pub worst_slack: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub worst_trial: Option<u64>,
    pub witness: String,
    pub rows: Vec<TrialOutcome>,
}

impl LawReport {
    pub fn from_rows(
        law: &str,
        form: FormDescriptor,
        seed: u64,
        source: &str,
        tolerance: f64,
        rows: Vec<TrialOutcome>,
    ) -> Self {
        let worst = rows
            .iter()
            .min_by(|a, b| a.slack.total_cmp(&b.slack).then(a.trial.cmp(&b.trial)));
        let worst_slack = worst.map_or(f64::INFINITY, |r| r.slack);
        Self {
            law: law.to_string(),
            form,
            seed,
            source: source.to_string(),
            trials: rows.len(),
            worst_slack,
            tolerance,
            pass: worst_slack >= -tolerance,
            worst_trial: worst.map(|r| r.trial),
            witness: worst.map(|r| r.detail.clone()).unwrap_or_default(),
            rows,
        }
    }

    /// Rows `law,source,trial,slack,pass`.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:e},{}\n",
                self.law,
                self.source,
                r.trial,
                r.slack,
                r.slack >= -self.tolerance
            ));
        }
        out
    }
}

pub const LAW_CSV_HEADER: &str = "law,source,trial,slack,pass\n";

fn rel(x: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        x / scale
    } else {
        x
    }
}

/// Interior of `{f = 0}`: the union of the pieces on which `f` vanishes.
pub fn zero_set_interior(f: &PlFunction) -> IntervalSet {
    IntervalSet::new(
        f.pieces()
            .filter(|p| p.y0 == 0.0 && p.y1 == 0.0)
            .map(|p| Interval::open(p.x0, p.x1))
            .collect(),
    )
}

/// `μ_⟨f⟩(X) = E(f)` and `μ_⟨f⟩` vanishes on the interior of `{f = 0}`,
/// for free samples and samples supported in `[1/4, 3/4]`.
pub fn law_total_mass(ctx: &LawContext) -> Result<LawReport, LawError> {
    ctx.run("total_mass", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let fs = [ctx.sampler.sample(rng), ctx.sampler.sample_supported(rng, 0.25, 0.75)];
        for (k, f) in fs.iter().enumerate() {
            let e = ctx.form.energy(f);
            let zero = zero_set_interior(f);
            let sets = [IntervalSet::full(), zero.clone()];
            let m = ctx.source.measures(&ctx.form, f, &sets)?;
            out.record(-rel((m[0] - e).abs(), e), || format!("sample {k}: mu(X) = {} vs E = {e}", m[0]));
            out.record(-rel(m[1].abs(), e), || format!("sample {k}: mu({zero}) = {}", m[1]));
        }
        Ok(out)
    })
}

/// `μ_⟨af⟩ = |a|^p μ_⟨f⟩` and `μ_⟨|f−a|−|a|⟩ = μ_⟨f⟩` on the family.
pub fn law_homogeneity_shift(ctx: &LawContext) -> Result<LawReport, LawError> {
    let p = ctx.form.p();
    ctx.run("homogeneity_shift", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = ctx.sampler.sample(rng);
        let a: f64 = rng.gen_range(-3.0..3.0);
        let c: f64 = rng.gen_range(-ctx.sampler.amplitude..ctx.sampler.amplitude);
        let e = ctx.form.energy(&f);
        let mf = ctx.measures(&f)?;
        let ma = ctx.measures(&f.scale(a))?;
        let reflected = f.shift(-c).abs().shift(-c.abs());
        let mr = ctx.measures(&reflected)?;
        let ap = pow_abs(a, p);
        for (i, set) in ctx.family.iter().enumerate() {
            out.record(-rel((ma[i] - ap * mf[i]).abs(), ap.max(1.0) * e), || {
                format!("a = {a}, A = {set}: {} vs {}", ma[i], ap * mf[i])
            });
            out.record(-rel((mr[i] - mf[i]).abs(), e), || {
                format!("shift {c}, A = {set}: {} vs {}", mr[i], mf[i])
            });
        }
        Ok(out)
    })
}

/// Measures of `f`, `g`, `f + g` and `f − g` on the family.
fn pair_measures(
    ctx: &LawContext,
    f: &PlFunction,
    g: &PlFunction,
) -> Result<[Vec<f64>; 4], LawError> {
    Ok([
        ctx.measures(f)?,
        ctx.measures(g)?,
        ctx.measures(&f.add(g)?)?,
        ctx.measures(&f.sub(g)?)?,
    ])
}

/// The Clarkson inequalities for `A ↦ μ_⟨·⟩(A)^{1/p}`, with the slack of each
/// normalized as in [`crate::forms::clarkson_slacks`].
pub fn law_measure_clarkson(ctx: &LawContext) -> Result<LawReport, LawError> {
    let p = ctx.form.p();
    ctx.run("measure_clarkson", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = ctx.sampler.sample(rng);
        let g = ctx.sampler.sample(rng);
        let [mf, mg, ms, md] = pair_measures(ctx, &f, &g)?;
        for (i, set) in ctx.family.iter().enumerate() {
            let slacks = crate::forms::clarkson_slacks(p, mf[i], mg[i], ms[i], md[i]);
            for (k, s) in slacks.iter().enumerate() {
                if let Some(s) = *s {
                    out.record(s, || format!("CI{} on A = {set}", k + 1));
                }
            }
        }
        Ok(out)
    })
}

/// `μ_⟨f+g⟩(A)^{1/p} ≤ μ_⟨f⟩(A)^{1/p} + μ_⟨g⟩(A)^{1/p}`.
pub fn law_measure_triangle(ctx: &LawContext) -> Result<LawReport, LawError> {
    let q = 1.0 / ctx.form.p();
    ctx.run("measure_triangle", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = ctx.sampler.sample(rng);
        let g = ctx.sampler.sample(rng);
        let mf = ctx.measures(&f)?;
        let mg = ctx.measures(&g)?;
        let ms = ctx.measures(&f.add(&g)?)?;
        let scale = ctx.form.energy(&f).powf(q) + ctx.form.energy(&g).powf(q);
        for (i, set) in ctx.family.iter().enumerate() {
            let lhs = ms[i].max(0.0).powf(q);
            let rhs = mf[i].max(0.0).powf(q) + mg[i].max(0.0).powf(q);
            out.record(rel(rhs - lhs, scale), || format!("A = {set}: {lhs} > {rhs}"));
        }
        Ok(out)
    })
}

/// A random `h` vanishing on `[lo, hi]`.
fn vanishing_on(sampler: &PlSampler, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Result<PlFunction, PlError> {
    let mut xs: Vec<f64> = sampler
        .breakpoints(rng)
        .into_iter()
        .filter(|&x| x < lo || x > hi)
        .collect();
    xs.extend([lo, hi]);
    if lo > 0.0 {
        xs.push(0.0);
    }
    if hi < 1.0 {
        xs.push(1.0);
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let ys = xs
        .iter()
        .map(|&x| {
            if (lo..=hi).contains(&x) {
                0.0
            } else {
                rng.gen_range(-sampler.amplitude..=sampler.amplitude)
            }
        })
        .collect();
    PlFunction::new(xs, ys)
}

/// `(f − g)|_A` constant implies `μ_⟨f⟩(A) = μ_⟨g⟩(A)`. `A` is a random
/// interval, `g = f + c + h` with `h` vanishing on `A`. Slack is relative to
/// `E(f) + E(g)`.
pub fn law_locality(ctx: &LawContext) -> Result<LawReport, LawError> {
    ctx.run("locality", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = ctx.sampler.sample(rng);
        let x: f64 = rng.gen_range(0.0..0.8);
        let (lo, hi) = (x, rng.gen_range(x + 0.1..=1.0));
        let set = IntervalSet::closed(lo, hi);
        let c: f64 = rng.gen_range(-5.0..5.0);
        let g = f.add(&vanishing_on(&ctx.sampler, rng, lo, hi)?)?.shift(c);
        let sets = [set.clone()];
        let mf = ctx.source.measures(&ctx.form, &f, &sets)?[0];
        let mg = ctx.source.measures(&ctx.form, &g, &sets)?[0];
        let scale = ctx.form.energy(&f) + ctx.form.energy(&g);
        out.record(-rel((mf - mg).abs(), scale), || format!("A = {set}: {mf} vs {mg}"));
        Ok(out)
    })
}

/// `c_p = 2^{|p−2|}`.
pub fn minmax_constant(p: f64) -> f64 {
    2f64.powf((p - 2.0).abs())
}

/// `μ_⟨f∨(g−a)⟩(A) ∨ μ_⟨f∧(g+a)⟩(A) ≤ c_p (μ_⟨f⟩(A) + μ_⟨g⟩(A))` for `a ≥ 0`.
pub fn law_minmax_bound(ctx: &LawContext) -> Result<LawReport, LawError> {
    let cp = minmax_constant(ctx.form.p());
    ctx.run("minmax_bound", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = ctx.sampler.sample(rng);
        let g = ctx.sampler.sample(rng);
        let a: f64 = rng.gen_range(0.0..1.0);
        let mx = ctx.measures(&f.max(&g.shift(-a))?)?;
        let mn = ctx.measures(&f.min(&g.shift(a))?)?;
        let mf = ctx.measures(&f)?;
        let mg = ctx.measures(&g)?;
        let scale = cp * (ctx.form.energy(&f) + ctx.form.energy(&g));
        for (i, set) in ctx.family.iter().enumerate() {
            let lhs = mx[i].max(mn[i]);
            let rhs = cp * (mf[i] + mg[i]);
            out.record(rel(rhs - lhs, scale), || format!("a = {a}, A = {set}: {lhs} > {rhs}"));
        }
        Ok(out)
    })
}

/// Ten piecewise-affine maps on `[-r, r]`: `|·|`, `T_2`, `T_3`, two cuts,
/// three scalings and two irregular PL maps.
pub fn chain_map_family(r: f64) -> Vec<(String, PlMap)> {
    let pl = |knots: Vec<f64>, values: Vec<f64>| PlMap::new(knots, values).expect("increasing knots");
    let lin = |s: f64| pl(vec![-r, r], vec![-s * r, s * r]);
    let from = |m: &dyn ScalarMap| PlMap::from_map(m, -r, r).expect("finite range");
    vec![
        ("abs".into(), pl(vec![-r, 0.0, r], vec![r, 0.0, r])),
        ("T_2".into(), from(&TriangleWave::new(2))),
        ("T_3".into(), from(&TriangleWave::new(3))),
        ("cut[-0.5,0.7]".into(), from(&Cut::new(-0.5, 0.7).expect("valid"))),
        ("cut[0,1]".into(), from(&Cut::new(0.0, 1.0).expect("valid"))),
        ("scale 2".into(), lin(2.0)),
        ("scale -0.5".into(), lin(-0.5)),
        ("scale 3".into(), lin(3.0)),
        (
            "convex".into(),
            pl(vec![-r, -1.0, 0.0, 0.5, r], vec![2.0 * r - 1.0, 1.0, 0.0, 0.25, 0.25 + 2.5 * (r - 0.5)]),
        ),
        (
            "zigzag".into(),
            pl(vec![-r, -0.3, 0.4, 0.9, r], vec![0.7 - 1.5 * (r - 0.3), 0.7, -0.35, 0.65, 0.65 - 0.5 * (r - 0.9)]),
        ),
    ]
}

/// Cells lighter than this fraction of `E(φ∘f)` are compared absolutely.
pub const CHAIN_MASS_FLOOR: f64 = 1e-4;

/// Cells of `f` refined at the preimages of the knots of `phi`, on which
/// `φ' ∘ f` is constant.
fn chain_cells(f: &PlFunction, phi: &PlMap) -> Vec<(f64, f64, f64)> {
    let composed = f.compose_with_cap(phi, usize::MAX).expect("uncapped");
    let knots = crate::pl::merge_knots(&[f.breakpoints(), composed.breakpoints()]);
    let mut splits = knots.clone();
    for piece in f.pieces() {
        if piece.y0 == piece.y1 {
            continue;
        }
        let mut ts = Vec::new();
        phi.knots_between(piece.y0.min(piece.y1), piece.y0.max(piece.y1), &mut ts);
        splits.extend(ts.iter().map(|&t| piece.x0 + (t - piece.y0) / piece.slope()));
    }
    splits.sort_by(f64::total_cmp);
    let splits = crate::pl::merge_knots(&[&splits]);
    splits
        .windows(2)
        .map(|w| {
            let (y0, y1) = (f.eval(w[0]), f.eval(w[1]));
            let s = if y0 == y1 {
                0.0
            } else {
                (phi.apply(y1) - phi.apply(y0)) / (y1 - y0)
            };
            (w[0], w[1], s)
        })
        .collect()
}

/// Cell-wise `μ_⟨φ∘f⟩(C) = |φ'∘f|^p μ_⟨f⟩(C)` on every cell where `φ' ∘ f`
/// is constant. The gap is `|lhs − rhs| / (max(lhs, rhs) + 1e-4·E(φ∘f))`.
pub fn law_chain_rule(ctx: &LawContext, maps: &[(String, PlMap)]) -> Result<LawReport, LawError> {
    let p = ctx.form.p();
    ctx.run("chain_rule", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = ctx.sampler.sample(rng);
        for (name, phi) in maps {
            let composed = f.compose_with_cap(phi, usize::MAX)?;
            let cells = chain_cells(&f, phi);
            let sets: Vec<IntervalSet> = cells.iter().map(|&(a, b, _)| IntervalSet::closed(a, b)).collect();
            let lhs = ctx.source.measures(&ctx.form, &composed, &sets)?;
            let base = ctx.source.measures(&ctx.form, &f, &sets)?;
            let floor = CHAIN_MASS_FLOOR * ctx.form.energy(&composed);
            for (i, &(a, b, s)) in cells.iter().enumerate() {
                let rhs = pow_abs(s, p) * base[i];
                let denom = lhs[i].abs().max(rhs.abs()) + floor;
                let gap = if denom > 0.0 { (lhs[i] - rhs).abs() / denom } else { 0.0 };
                out.record(-gap, || format!("{name} on [{a}, {b}]: {} vs {rhs}", lhs[i]));
            }
        }
        Ok(out)
    })
}

/// `μ_lo(A) ≤ μ_hi(A)` whenever the weights satisfy `w_lo ≤ w_hi`.
pub fn law_domination(ctx: &LawContext, upper: &PlIntervalForm) -> Result<LawReport, LawError> {
    if upper.p() != ctx.form.p() {
        return Err(LawError::Precondition("forms must share the exponent".into()));
    }
    if !ctx.form.weight().le(upper.weight()) {
        return Err(LawError::Precondition("lower weight exceeds the upper weight".into()));
    }
    ctx.run("domination", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = ctx.sampler.sample(rng);
        let lo = ctx.measures(&f)?;
        let hi = ctx.source.measures(upper, &f, &ctx.family)?;
        let scale = upper.energy(&f);
        for (i, set) in ctx.family.iter().enumerate() {
            out.record(rel(hi[i] - lo[i], scale), || format!("A = {set}: {} > {}", lo[i], hi[i]));
        }
        Ok(out)
    })
}

/// `ν = Σ_i 2^{-i} E(u_i)^{-1} μ_⟨u_i⟩` evaluated on `sets`.
pub fn dominant_measure(
    form: &PlIntervalForm,
    basis: &[PlFunction],
    sets: &[IntervalSet],
    source: &MeasureSource,
) -> Result<Vec<f64>, LawError> {
    let mut total = vec![0.0; sets.len()];
    for (i, u) in basis.iter().enumerate() {
        let e = form.energy(u);
        if e <= 0.0 {
            return Err(LawError::Precondition(format!("basis function {i} has zero energy")));
        }
        let m = source.measures(form, u, sets)?;
        let c = 0.5f64.powi(i as i32 + 1) / e;
        for (t, v) in total.iter_mut().zip(m) {
            *t += c * v;
        }
    }
    Ok(total)
}

/// Domination half of minimality: on every cell where `ν` has no mass,
/// sampled `μ_⟨f⟩` has none either.
pub fn law_minimal_dominant(ctx: &LawContext, basis: &[PlFunction]) -> Result<LawReport, LawError> {
    let tol = ctx.tolerance;
    ctx.run("minimal_dominant", tol, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = ctx.sampler.sample(rng);
        let mut lists: Vec<&[f64]> = basis.iter().map(|u| u.breakpoints()).collect();
        lists.push(f.breakpoints());
        lists.push(ctx.form.weight().cuts());
        let knots = crate::pl::merge_knots(&lists);
        let sets: Vec<IntervalSet> = knots.windows(2).map(|w| IntervalSet::closed(w[0], w[1])).collect();
        let nu = dominant_measure(&ctx.form, basis, &sets, &ctx.source)?;
        let mf = ctx.source.measures(&ctx.form, &f, &sets)?;
        let e = ctx.form.energy(&f);
        let nu_total: f64 = nu.iter().sum();
        out.record(0.0, String::new);
        for (i, set) in sets.iter().enumerate() {
            if nu[i] <= tol * nu_total {
                out.record(-rel(mf[i], e), || format!("nu({set}) = {} but mu_f = {}", nu[i], mf[i]));
            }
        }
        Ok(out)
    })
}

/// Density of `f_* μ_⟨f⟩` at `y`: `Σ w |f'|^{p−1}` over the cells where
/// `f` crosses `y`.
pub fn image_density(form: &PlIntervalForm, f: &PlFunction, y: f64) -> f64 {
    form.cells(&[f])
        .iter()
        .filter(|c| {
            let (a, b) = (f.eval(c.x0), f.eval(c.x1));
            c.slopes[0] != 0.0 && a.min(b) <= y && y < a.max(b)
        })
        .map(|c| c.weight * c.slopes[0].abs().powf(form.p() - 1.0))
        .sum()
}

/// The level set `{f = y}` as closed components (isolated points included).
pub fn level_set(f: &PlFunction, y: f64) -> IntervalSet {
    let below = f.sublevel_set(y);
    let above = f.scale(-1.0).sublevel_set(-y);
    let mut parts = Vec::new();
    for a in below.components() {
        for b in above.components() {
            let (lo, hi) = (a.lo.max(b.lo), a.hi.min(b.hi));
            if lo <= hi {
                parts.push(Interval::closed(lo, hi));
            }
        }
    }
    IntervalSet::new(parts)
}

/// Number of probed values per sample in [`law_image_density`].
pub const IMAGE_PROBES: usize = 50;

/// Samples with a planted flat piece.
fn sample_with_plateau(sampler: &PlSampler, rng: &mut ChaCha8Rng) -> Result<PlFunction, PlError> {
    let f = sampler.sample(rng);
    let x: f64 = rng.gen_range(0.1..0.7);
    let (lo, hi) = (x, x + 0.2);
    let level = f.eval(lo);
    let mut xs = vec![];
    let mut ys = vec![];
    for (&bx, &by) in f.breakpoints().iter().zip(f.values()) {
        if bx < lo || bx > hi {
            xs.push(bx);
            ys.push(if bx > hi { by - f.eval(hi) + level } else { by });
        }
    }
    xs.extend([lo, hi]);
    ys.extend([level, level]);
    let mut pts: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (xs, ys) = pts.into_iter().unzip();
    PlFunction::new(xs, ys)
}

/// `f_* μ_⟨f⟩` has no atoms: `μ_⟨f⟩({f = y})` is zero relative to `E(f)` at
/// breakpoint values, the value of a planted flat piece, and random levels.
pub fn law_image_density(ctx: &LawContext) -> Result<LawReport, LawError> {
    ctx.run("image_density", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = sample_with_plateau(&ctx.sampler, rng)?;
        let e = ctx.form.energy(&f);
        let mut probes: Vec<f64> = f.values().to_vec();
        let (lo, hi) = (f.min_value(), f.max_value());
        while probes.len() < IMAGE_PROBES {
            probes.push(rng.gen_range(lo..=hi));
        }
        probes.truncate(IMAGE_PROBES);
        let sets: Vec<IntervalSet> = probes.iter().map(|&y| level_set(&f, y)).collect();
        let m = ctx.source.measures(&ctx.form, &f, &sets)?;
        for (i, y) in probes.iter().enumerate() {
            out.record(-rel(m[i].abs(), e), || format!("atom at y = {y}: {}", m[i]));
        }
        Ok(out)
    })
}

/// `t ↦ μ_⟨f+tg⟩(A)` has no jumps: on a grid of spacing `δ` the largest
/// increment fixes a Lipschitz modulus `L`, and increments on a grid ten
/// times finer stay below `2 L δ/10`.
pub fn law_continuity(ctx: &LawContext) -> Result<LawReport, LawError> {
    const COARSE: usize = 8;
    ctx.run("continuity", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = ctx.sampler.sample(rng);
        let g = ctx.sampler.sample(rng);
        let x: f64 = rng.gen_range(0.0..0.7);
        let sets = [IntervalSet::closed(x, x + 0.3)];
        let at = |s: f64| -> Result<f64, LawError> {
            let h = PlFunction::affine_combine(1.0, &f, s, &g)?;
            Ok(ctx.source.measures(&ctx.form, &h, &sets)?[0])
        };
        let delta = 1.0 / COARSE as f64;
        let coarse = (0..=COARSE).map(|k| at(k as f64 * delta)).collect::<Result<Vec<_>, _>>()?;
        let lip = coarse.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max) / delta;
        let fine_delta = delta / 10.0;
        let fine = (0..=10).map(|k| at(k as f64 * fine_delta)).collect::<Result<Vec<_>, _>>()?;
        let scale = ctx.form.energy(&f) + ctx.form.energy(&g);
        for (k, w) in fine.windows(2).enumerate() {
            let jump = (w[1] - w[0]).abs();
            out.record(rel(2.0 * lip * fine_delta - jump, scale), || {
                format!("jump {jump} at t = {} (L = {lip})", k as f64 * fine_delta)
            });
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::Weight;

    fn ctx(p: f64, source: MeasureSource, trials: usize) -> LawContext {
        let sampler = PlSampler::new(5).with_max_breakpoints(8);
        LawContext::new(PlIntervalForm::new(p).unwrap(), sampler, trials, source)
    }

    #[test]
    fn oracle_examples() {
        let form = PlIntervalForm::new(2.5).unwrap();
        let f = PlFunction::identity().scale(3.0);
        let half = IntervalSet::closed(0.0, 0.5);
        assert!((oracle_measure(&form, &f, &half) - 0.5 * 3f64.powf(2.5)).abs() < 1e-12);
        let supported = PlFunction::hat(0.25, 0.5, 0.75, 1.0).unwrap();
        assert_eq!(oracle_measure(&form, &supported, &IntervalSet::closed(0.0, 0.125)), 0.0);
        let z = zero_set_interior(&supported);
        assert_eq!(z.components().len(), 2);
        assert_eq!(oracle_measure(&form, &supported, &z), 0.0);
    }

    #[test]
    fn oracle_laws_pass() {
        for p in [1.5, 2.0, 3.0] {
            let c = ctx(p, MeasureSource::Oracle, 12);
            for r in [
                law_total_mass(&c).unwrap(),
                law_homogeneity_shift(&c).unwrap(),
                law_measure_clarkson(&c).unwrap(),
                law_measure_triangle(&c).unwrap(),
                law_locality(&c).unwrap(),
                law_minmax_bound(&c).unwrap(),
                law_chain_rule(&c, &chain_map_family(3.0)).unwrap(),
                law_image_density(&c).unwrap(),
                law_continuity(&c).unwrap(),
            ] {
                assert!(r.pass, "p = {p}: {} worst {} ({})", r.law, r.worst_slack, r.witness);
                assert_eq!(r.trials, 12);
            }
        }
    }

    #[test]
    fn construction_laws_pass() {
        let c = ctx(3.0, MeasureSource::construction(), 2);
        for r in [
            law_total_mass(&c).unwrap(),
            law_locality(&c).unwrap(),
            law_image_density(&c).unwrap(),
        ] {
            assert!(r.pass, "{} worst {} ({})", r.law, r.worst_slack, r.witness);
        }
    }

    #[test]
    fn chain_family_shape() {
        let maps = chain_map_family(3.0);
        assert_eq!(maps.len(), 10);
        for (name, m) in &maps {
            assert_eq!(m.domain(), (-3.0, 3.0), "{name}");
        }
        let f = PlFunction::linear(2.0, -1.0);
        let form = PlIntervalForm::new(2.0).unwrap();
        let abs = f.abs();
        let m = oracle_measure(&form, &abs, &IntervalSet::full());
        assert!((m - 4.0).abs() < 1e-12);
    }

    #[test]
    fn domination_examples() {
        let base = Weight::uniform(1.0);
        let c = ctx(2.0, MeasureSource::Oracle, 5);
        let double = PlIntervalForm::with_weight(2.0, base.scaled(2.0)).unwrap();
        let r = law_domination(&c, &double).unwrap();
        assert!(r.pass && r.worst_slack >= 0.0);
        let bump = Weight::from_segments(&[(0.0, 0.5, 2.0), (0.5, 1.0, 1.0)]).unwrap();
        let r = law_domination(&c, &PlIntervalForm::with_weight(2.0, bump.clone()).unwrap()).unwrap();
        assert!(r.pass);
        let lower = LawContext {
            form: PlIntervalForm::with_weight(2.0, bump).unwrap(),
            ..ctx(2.0, MeasureSource::Oracle, 5)
        };
        assert!(law_domination(&lower, &double).unwrap().pass);
        let crossed = Weight::from_segments(&[(0.0, 0.5, 0.5), (0.5, 1.0, 3.0)]).unwrap();
        assert!(matches!(
            law_domination(&lower, &PlIntervalForm::with_weight(2.0, crossed).unwrap()),
            Err(LawError::Precondition(_))
        ));
    }

    #[test]
    fn minimal_dominant_examples() {
        let c = ctx(2.0, MeasureSource::Oracle, 4);
        let r = law_minimal_dominant(&c, &[PlFunction::identity()]).unwrap();
        assert!(r.pass);
        let sets = [IntervalSet::closed(0.0, 0.25)];
        let nu = dominant_measure(&c.form, &[PlFunction::identity()], &sets, &c.source).unwrap();
        assert!((nu[0] - 0.125).abs() < 1e-12);
        let flat_right = PlFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 1.0]).unwrap();
        let r = law_minimal_dominant(&c, &[flat_right]).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn image_density_oracle() {
        let form = PlIntervalForm::new(3.0).unwrap();
        let tent = PlFunction::tent(0.5, 0.5).unwrap();
        // Two preimages with |f'| = 1.
        assert!((image_density(&form, &tent, 0.25) - 2.0).abs() < 1e-12);
        let f = PlFunction::linear(2.0, 0.0);
        // |f'|^{p-1} = 4 on [0, 2], integrating to E(f) = 8.
        assert!((image_density(&form, &f, 1.0) - 4.0).abs() < 1e-12);
        let plateau = PlFunction::new(vec![0.0, 0.3, 0.6, 1.0], vec![0.0, 0.5, 0.5, 1.0]).unwrap();
        let ls = level_set(&plateau, 0.5);
        assert_eq!(ls, IntervalSet::closed(0.3, 0.6));
        assert_eq!(oracle_measure(&form, &plateau, &ls), 0.0);
    }

    #[test]
    fn reports_are_reproducible() {
        let c = ctx(1.5, MeasureSource::Oracle, 6);
        let a = law_measure_clarkson(&c).unwrap();
        let b = law_measure_clarkson(&c).unwrap();
        assert_eq!(a.csv_rows(), b.csv_rows());
        assert_eq!(a.worst_slack, b.worst_slack);
    }
}
