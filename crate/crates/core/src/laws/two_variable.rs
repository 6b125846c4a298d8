use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    chain_cells, gauss_legendre, weighted_integral, LawContext, LawError, LawReport, MeasureSource,
    TrialOutcome,
};
use crate::forms::{signed_pow, PlIntervalForm};
use crate::pl::{merge_knots, refine_knots, IntervalSet, PlFunction, PlMap};
use crate::sampler::PlSampler;

/// Step sizes for the central differences, before scaling by [`step_scale`].
pub const RICHARDSON_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Slope floor for the first argument of derivative laws.
pub const SLOPE_FLOOR: f64 = 0.05;

/// Gauss panels per cell for integrands that are not piecewise polynomial.
const QUAD_PANELS: usize = 16;

/// `ν_⟨u;v⟩` on a family of sets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignedMeasureSample {
    pub values: Vec<f64>,
    /// Step sizes in `t`, after scaling.
    pub steps: Vec<f64>,
    /// `|R_{m,m} − R_{m,m−1}|` from the Richardson tableau.
    pub error_estimate: Vec<f64>,
}

/// `ν_⟨u;v⟩(A) = ∫_A w|u'|^{p−2}u'v' dx`.
pub fn nu_closed_form(form: &PlIntervalForm, u: &PlFunction, v: &PlFunction, set: &IntervalSet) -> f64 {
    weighted_integral(form, u, v, None, set)
}

/// `min |u'| / max |v'|` over cells where `u' ≠ 0`, capped at 1, so that
/// `t|v'| ≤ t|u'|` and `t ↦ |u' + t v'|^p` is analytic on the steps used.
fn step_scale(form: &PlIntervalForm, u: &PlFunction, v: &PlFunction) -> f64 {
    let cells = form.cells(&[u, v]);
    let umin = cells
        .iter()
        .filter(|c| c.weight > 0.0 && c.slopes[0] != 0.0)
        .map(|c| c.slopes[0].abs())
        .fold(f64::INFINITY, f64::min);
    let vmax = cells
        .iter()
        .filter(|c| c.weight > 0.0)
        .map(|c| c.slopes[1].abs())
        .fold(0.0, f64::max);
    if vmax == 0.0 || !umin.is_finite() {
        return 0.0;
    }
    (umin / vmax).min(1.0)
}

/// `ν_⟨u;v⟩(A) = (1/p) d/dt μ_⟨u+tv⟩(A)|_{t=0}` by central differences at the
/// given decreasing steps, extrapolated in `t²`.
pub fn two_variable_measure(
    form: &PlIntervalForm,
    u: &PlFunction,
    v: &PlFunction,
    sets: &[IntervalSet],
    steps: &[f64],
    source: &MeasureSource,
) -> Result<SignedMeasureSample, LawError> {
    if steps.len() < 2 || steps.iter().any(|&t| !(t > 0.0)) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LawError::Extrapolation(
            "need at least two positive, strictly decreasing steps".into(),
        ));
    }
    let p = form.p();
    let c = step_scale(form, u, v);
    let steps: Vec<f64> = steps.iter().map(|t| t * c).collect();
    if c == 0.0 {
        return Ok(SignedMeasureSample {
            values: vec![0.0; sets.len()],
            steps,
            error_estimate: vec![0.0; sets.len()],
        });
    }
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(steps.len());
    for &t in &steps {
        let plus = source.measures(form, &PlFunction::affine_combine(1.0, u, t, v)?, sets)?;
        let minus = source.measures(form, &PlFunction::affine_combine(1.0, u, -t, v)?, sets)?;
        table.push(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * p * t)).collect());
    }
    let m = steps.len();
    let mut values = Vec::with_capacity(sets.len());
    let mut error_estimate = Vec::with_capacity(sets.len());
    for j in 0..sets.len() {
        let mut row: Vec<f64> = table.iter().map(|d| d[j]).collect();
        let mut prev_diag = row[m - 1];
        let mut last_diag = row[m - 1];
        for k in 1..m {
            let mut next = vec![0.0; m];
            for i in k..m {
                let r = (steps[i - k] / steps[i]).powi(2 * k as i32);
                next[i] = row[i] + (row[i] - row[i - 1]) / (r - 1.0);
            }
            prev_diag = row[m - 1];
            last_diag = next[m - 1];
            row = next;
        }
        if !last_diag.is_finite() {
            return Err(LawError::Extrapolation(format!("non-finite value on set {}", sets[j])));
        }
        values.push(last_diag);
        error_estimate.push((last_diag - prev_diag).abs());
    }
    Ok(SignedMeasureSample {
        values,
        steps,
        error_estimate,
    })
}

/// `E(u)^{(p−1)/p} E(v)^{1/p}`, which bounds `|ν_⟨u;v⟩(A)|`.
fn holder_scale(form: &PlIntervalForm, u: &PlFunction, v: &PlFunction) -> f64 {
    let p = form.p();
    form.energy(u).powf((p - 1.0) / p) * form.energy(v).powf(1.0 / p)
}

fn rel(x: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        x / scale
    } else {
        x
    }
}

fn derivative_sampler(ctx: &LawContext) -> PlSampler {
    match ctx.sampler.min_abs_slope {
        Some(_) => ctx.sampler.clone(),
        None => ctx.sampler.clone().with_min_abs_slope(SLOPE_FLOOR),
    }
}

/// `ν_⟨u;v⟩` by differentiation against the closed form, and `ν_⟨u;u⟩ = μ_⟨u⟩`.
/// `u` is drawn with `|u'| ≥ 0.05`.
pub fn law_two_variable(ctx: &LawContext) -> Result<LawReport, LawError> {
    let slope_sampler = derivative_sampler(ctx);
    ctx.run("two_variable", ctx.derivative_tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let u = slope_sampler.sample(rng);
        let v = ctx.sampler.sample(rng);
        let form = &ctx.form;
        let nu = two_variable_measure(form, &u, &v, &ctx.family, &RICHARDSON_STEPS, &ctx.source)?;
        let diag = two_variable_measure(form, &u, &u, &ctx.family, &RICHARDSON_STEPS, &ctx.source)?;
        let mu = ctx.source.measures(form, &u, &ctx.family)?;
        let scale = holder_scale(form, &u, &v);
        let e = form.energy(&u);
        for (i, set) in ctx.family.iter().enumerate() {
            let exact = nu_closed_form(form, &u, &v, set);
            out.record(-rel((nu.values[i] - exact).abs(), scale), || {
                format!("nu(u;v)({set}) = {} vs {exact}", nu.values[i])
            });
            out.record(-rel((diag.values[i] - mu[i]).abs(), e), || {
                format!("nu(u;u)({set}) = {} vs mu = {}", diag.values[i], mu[i])
            });
        }
        Ok(out)
    })
}

/// `ν_⟨φ∘f;g⟩(C) = sgn(s)|s|^{p−1} ν_⟨f;g⟩(C)` on cells where `φ' ∘ f = s`.
pub fn law_chain_rule_two_variable(ctx: &LawContext, maps: &[(String, PlMap)]) -> Result<LawReport, LawError> {
    let p = ctx.form.p();
    let slope_sampler = derivative_sampler(ctx);
    ctx.run("chain_rule_two_variable", ctx.derivative_tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = slope_sampler.sample(rng);
        let g = ctx.sampler.sample(rng);
        let nu_f = |sets: &[IntervalSet]| {
            two_variable_measure(&ctx.form, &f, &g, sets, &RICHARDSON_STEPS, &ctx.source)
        };
        for (name, phi) in maps {
            let composed = f.compose_with_cap(phi, usize::MAX)?;
            let cells = chain_cells(&f, phi);
            let sets: Vec<IntervalSet> = cells.iter().map(|&(a, b, _)| IntervalSet::closed(a, b)).collect();
            let lhs = two_variable_measure(&ctx.form, &composed, &g, &sets, &RICHARDSON_STEPS, &ctx.source)?;
            let base = nu_f(&sets)?;
            let scale = holder_scale(&ctx.form, &composed, &g);
            for (i, &(a, b, s)) in cells.iter().enumerate() {
                let rhs = signed_pow(s, p) * base.values[i];
                out.record(-rel((lhs.values[i] - rhs).abs(), scale), || {
                    format!("{name} on [{a}, {b}]: {} vs {rhs}", lhs.values[i])
                });
            }
        }
        Ok(out)
    })
}

/// Leibniz rule `ν_⟨f;gh⟩(A) = ∫_A g dν_⟨f;h⟩ + ∫_A h dν_⟨f;g⟩`.
///
/// `gh` is replaced by its PL interpolant `P` with `refine` sub-pieces; the
/// budget `|ν_⟨f;P⟩(A) − rhs|` is computed in closed form and added to the
/// allowed gap.
pub fn law_leibniz(ctx: &LawContext, refine: usize) -> Result<LawReport, LawError> {
    let slope_sampler = derivative_sampler(ctx);
    ctx.run("leibniz", ctx.derivative_tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = slope_sampler.sample(rng);
        let g = ctx.sampler.sample(rng);
        let h = ctx.sampler.sample(rng);
        let prod = PlFunction::pl_product(&g, &h, refine)?.function;
        let form = &ctx.form;
        let lhs = two_variable_measure(form, &f, &prod, &ctx.family, &RICHARDSON_STEPS, &ctx.source)?;
        let scale = holder_scale(form, &f, &prod);
        for (i, set) in ctx.family.iter().enumerate() {
            let rhs = weighted_integral(form, &f, &h, Some(&g), set) + weighted_integral(form, &f, &g, Some(&h), set);
            let budget = (nu_closed_form(form, &f, &prod, set) - rhs).abs();
            out.record(rel(budget - (lhs.values[i] - rhs).abs(), scale), || {
                format!("A = {set}: {} vs {rhs} (budget {budget:e})", lhs.values[i])
            });
        }
        Ok(out)
    })
}

/// Both sides of `∫ g dμ_⟨f⟩ = E(f; fg) − ((p−1)/p)^{p−1} E(|f|^{p/(p−1)}; g)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionalTerms {
    pub lhs: f64,
    pub rhs: f64,
    /// Error of the PL product and power interpolants in the right side.
    pub budget: f64,
}

/// Zeros of `f` added to its breakpoints.
fn knots_with_zeros(f: &PlFunction) -> Vec<f64> {
    let mut xs = f.breakpoints().to_vec();
    for p in f.pieces() {
        if p.y0 * p.y1 < 0.0 {
            xs.push(p.x0 - p.y0 / p.slope());
        }
    }
    xs.sort_by(f64::total_cmp);
    merge_knots(&[&xs])
}

/// `∫ g dμ_⟨f⟩` from cell masses: on each cell of `f`, `g` and the weight,
/// `g` is affine and the density constant, so the cell contributes
/// `μ_⟨f⟩(C) · g(mid C)`.
pub fn integral_against_measure(
    form: &PlIntervalForm,
    f: &PlFunction,
    g: &PlFunction,
    source: &MeasureSource,
) -> Result<f64, LawError> {
    let knots = merge_knots(&[f.breakpoints(), g.breakpoints(), form.weight().cuts()]);
    let sets: Vec<IntervalSet> = knots.windows(2).map(|w| IntervalSet::closed(w[0], w[1])).collect();
    let m = source.measures(form, f, &sets)?;
    Ok(knots
        .windows(2)
        .zip(m)
        .map(|(w, m)| m * g.eval(0.5 * (w[0] + w[1])))
        .sum())
}

pub fn functional_terms(
    form: &PlIntervalForm,
    f: &PlFunction,
    g: &PlFunction,
    refine: usize,
    source: &MeasureSource,
) -> Result<FunctionalTerms, LawError> {
    let p = form.p();
    let q = p / (p - 1.0);
    let c = ((p - 1.0) / p).powf(p - 1.0);
    let lhs = integral_against_measure(form, f, g, source)?;

    let fg = PlFunction::pl_product(f, g, refine)?.function;
    let knots = refine_knots(&knots_with_zeros(f), refine.max(1));
    let power = PlFunction::interpolate(&knots, |x| f.eval(x).abs().powf(q))?;
    let rhs = form.energy_drv(f, &fg) - c * form.energy_drv(&power, g);

    let mut exact_first = 0.0;
    let mut exact_second = 0.0;
    let zeros = knots_with_zeros(f);
    let all = merge_knots(&[&zeros, g.breakpoints(), form.weight().cuts()]);
    for w in all.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let mid = 0.5 * (x0 + x1);
        let (sf, sg, wt) = (f.slope_at(mid), g.slope_at(mid), form.weight().at(mid));
        // (fg)' is affine on the cell, so the midpoint value is its mean.
        exact_first += wt * signed_pow(sf, p) * (sf * g.eval(mid) + f.eval(mid) * sg) * (x1 - x0);
        if sg != 0.0 && sf != 0.0 {
            let dpow = |x: f64| {
                let y = f.eval(x);
                q * y.abs().powf(q - 1.0) * y.signum() * sf
            };
            exact_second += wt * sg * gauss_legendre(|x| signed_pow(dpow(x), p), x0, x1, QUAD_PANELS);
        }
    }
    let exact_rhs = exact_first - c * exact_second;
    Ok(FunctionalTerms {
        lhs,
        rhs,
        budget: (rhs - exact_rhs).abs(),
    })
}

/// The functional identity with the approximation budget added to the
/// allowed gap; slack is relative to `E(f) · sup|g|`.
pub fn law_functional_identity(ctx: &LawContext, refine: usize) -> Result<LawReport, LawError> {
    ctx.run("functional_identity", ctx.tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = ctx.sampler.sample(rng);
        let g = ctx.sampler.sample(rng);
        let terms = functional_terms(&ctx.form, &f, &g, refine, &ctx.source)?;
        let scale = ctx.form.energy(&f) * g.sup_norm();
        out.record(rel(terms.budget - (terms.lhs - terms.rhs).abs(), scale), || {
            format!("lhs {} vs rhs {} (budget {:e})", terms.lhs, terms.rhs, terms.budget)
        });
        Ok(out)
    })
}

/// A polynomial `Σ c_k x^{α_k}` in a few variables with no constant term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub vars: usize,
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(vars: usize, terms: Vec<(f64, Vec<u32>)>) -> Result<Self, LawError> {
        if vars == 0 || vars > 3 {
            return Err(LawError::Precondition(format!("{vars} variables; need 1 to 3")));
        }
        for (_, pw) in &terms {
            if pw.len() != vars {
                return Err(LawError::Precondition("exponent vector of the wrong length".into()));
            }
            if pw.iter().all(|&k| k == 0) {
                return Err(LawError::Precondition("constant term: need φ(0) = 0".into()));
            }
        }
        Ok(Self { vars, terms })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, pw)| c * pw.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn partial(&self, i: usize, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .filter(|(_, pw)| pw[i] > 0)
            .map(|(c, pw)| {
                let mono: f64 = pw
                    .iter()
                    .zip(x)
                    .enumerate()
                    .map(|(j, (&k, &v))| if j == i { v.powi(k as i32 - 1) } else { v.powi(k as i32) })
                    .product();
                c * pw[i] as f64 * mono
            })
            .sum()
    }

    /// `x1 + x2`, `x1 x2`, `x1²`, and `x1 x2 x3 + x3²`.
    pub fn default_family() -> Vec<Polynomial> {
        vec![
            Self::new(2, vec![(1.0, vec![1, 0]), (1.0, vec![0, 1])]).expect("valid"),
            Self::new(2, vec![(1.0, vec![1, 1])]).expect("valid"),
            Self::new(1, vec![(1.0, vec![2])]).expect("valid"),
            Self::new(3, vec![(1.0, vec![1, 1, 1]), (1.0, vec![0, 0, 2])]).expect("valid"),
        ]
    }
}

/// `ν_⟨f;φ∘g⟩(A) = Σ_i ∫_A ∂_iφ(g) dν_⟨f;g_i⟩`. `φ∘g` is interpolated with
/// `refine` sub-pieces; the interpolation error in `ν` is the budget.
pub fn law_multivariable_chain(
    ctx: &LawContext,
    polys: &[Polynomial],
    refine: usize,
) -> Result<LawReport, LawError> {
    let slope_sampler = derivative_sampler(ctx);
    let form = &ctx.form;
    let p = form.p();
    ctx.run("multivariable_chain", ctx.derivative_tolerance, |t, rng| {
        let mut out = TrialOutcome::new(t);
        let f = slope_sampler.sample(rng);
        for (k, phi) in polys.iter().enumerate() {
            let gs: Vec<PlFunction> = (0..phi.vars).map(|_| small(&ctx.sampler, rng)).collect();
            let mut lists: Vec<&[f64]> = gs.iter().map(|g| g.breakpoints()).collect();
            lists.push(f.breakpoints());
            lists.push(form.weight().cuts());
            let base = merge_knots(&lists);
            let at = |x: f64| gs.iter().map(|g| g.eval(x)).collect::<Vec<_>>();
            let composed = PlFunction::interpolate(&refine_knots(&base, refine.max(1)), |x| phi.eval(&at(x)))?;
            let lhs = two_variable_measure(form, &f, &composed, &ctx.family, &RICHARDSON_STEPS, &ctx.source)?;
            let scale = holder_scale(form, &f, &composed);
            for (i, set) in ctx.family.iter().enumerate() {
                let mut rhs = 0.0;
                for w in base.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    let d = form.weight().at(mid) * signed_pow(f.slope_at(mid), p);
                    if d == 0.0 {
                        continue;
                    }
                    for iv in set.components() {
                        let (lo, hi) = (iv.lo.max(w[0]), iv.hi.min(w[1]));
                        if hi > lo {
                            let integrand = |x: f64| {
                                let y = at(x);
                                (0..phi.vars).map(|j| phi.partial(j, &y) * gs[j].slope_at(mid)).sum::<f64>()
                            };
                            rhs += d * gauss_legendre(integrand, lo, hi, 1);
                        }
                    }
                }
                let budget = (nu_closed_form(form, &f, &composed, set) - rhs).abs();
                out.record(rel(budget - (lhs.values[i] - rhs).abs(), scale), || {
                    format!("phi #{k}, A = {set}: {} vs {rhs} (budget {budget:e})", lhs.values[i])
                });
            }
        }
        Ok(out)
    })
}

/// A sample scaled into `[-1, 1]`.
fn small(sampler: &PlSampler, rng: &mut ChaCha8Rng) -> PlFunction {
    let g = sampler.sample(rng);
    let s = g.sup_norm();
    if s > 1.0 {
        g.scale(1.0 / s)
    } else {
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::chain_map_family;

    fn ctx(p: f64, trials: usize) -> LawContext {
        let mut sampler = PlSampler::new(21).with_max_breakpoints(8);
        sampler.amplitude = 1.0;
        sampler.min_gap = 0.05;
        LawContext::new(PlIntervalForm::new(p).unwrap(), sampler, trials, MeasureSource::Oracle)
    }

    #[test]
    fn two_variable_examples() {
        let form = PlIntervalForm::new(3.0).unwrap();
        let id = PlFunction::identity();
        let half = [IntervalSet::closed(0.0, 0.5)];
        let s = two_variable_measure(&form, &id, &id, &half, &RICHARDSON_STEPS, &MeasureSource::Oracle).unwrap();
        assert!((s.values[0] - 0.5).abs() < 1e-10, "{:?}", s);
        let c = PlFunction::constant(2.0);
        let z = two_variable_measure(&form, &id, &c, &half, &RICHARDSON_STEPS, &MeasureSource::Oracle).unwrap();
        assert_eq!(z.values[0], 0.0);
        assert!(two_variable_measure(&form, &id, &id, &half, &[1e-2], &MeasureSource::Oracle).is_err());
        assert!(two_variable_measure(&form, &id, &id, &half, &[1e-3, 1e-2], &MeasureSource::Oracle).is_err());
    }

    #[test]
    fn two_variable_is_linear_in_v() {
        let form = PlIntervalForm::new(2.5).unwrap();
        let u = PlFunction::new(vec![0.0, 0.4, 1.0], vec![0.0, 0.6, -0.3]).unwrap();
        let v = PlFunction::new(vec![0.0, 0.7, 1.0], vec![0.2, -0.1, 0.5]).unwrap();
        let w = PlFunction::tent(0.3, 0.4).unwrap();
        let sets = crate::construct::a_family(3, 4);
        let src = MeasureSource::Oracle;
        let nv = two_variable_measure(&form, &u, &v, &sets, &RICHARDSON_STEPS, &src).unwrap();
        let nw = two_variable_measure(&form, &u, &w, &sets, &RICHARDSON_STEPS, &src).unwrap();
        let comb = PlFunction::affine_combine(2.0, &v, -3.0, &w).unwrap();
        let nc = two_variable_measure(&form, &u, &comb, &sets, &RICHARDSON_STEPS, &src).unwrap();
        for i in 0..sets.len() {
            assert!((nc.values[i] - (2.0 * nv.values[i] - 3.0 * nw.values[i])).abs() < 1e-8);
        }
    }

    #[test]
    fn functional_examples() {
        let form = PlIntervalForm::new(2.0).unwrap();
        let id = PlFunction::identity();
        let t = functional_terms(&form, &id, &id, 64, &MeasureSource::Oracle).unwrap();
        assert!((t.lhs - 0.5).abs() < 1e-12);
        assert!((t.rhs - 0.5).abs() < 1e-6, "{t:?}");
        let f = PlFunction::new(vec![0.0, 0.3, 1.0], vec![0.5, -0.4, 0.9]).unwrap();
        let one = PlFunction::constant(1.0);
        let t = functional_terms(&PlIntervalForm::new(3.0).unwrap(), &f, &one, 8, &MeasureSource::Oracle).unwrap();
        assert!((t.lhs - t.rhs).abs() < 1e-12);
        let left = PlFunction::hat(0.0, 0.2, 0.4, 1.0).unwrap();
        let right = PlFunction::hat(0.6, 0.8, 1.0, 1.0).unwrap();
        let t = functional_terms(&form, &left, &right, 8, &MeasureSource::Oracle).unwrap();
        assert!(t.lhs.abs() < 1e-14 && t.rhs.abs() < 1e-12);
    }

    #[test]
    fn polynomial_calculus() {
        let p = Polynomial::new(3, vec![(1.0, vec![1, 1, 1]), (1.0, vec![0, 0, 2])]).unwrap();
        let x = [0.5, -2.0, 3.0];
        assert_eq!(p.eval(&x), -3.0 + 9.0);
        assert_eq!(p.partial(0, &x), -6.0);
        assert_eq!(p.partial(2, &x), -1.0 + 6.0);
        assert!(Polynomial::new(1, vec![(1.0, vec![0])]).is_err());
    }

    #[test]
    fn derivative_laws_pass_with_oracle() {
        for p in [1.5, 2.0, 3.0] {
            let c = ctx(p, 3);
            for r in [
                law_two_variable(&c).unwrap(),
                law_chain_rule_two_variable(&c, &chain_map_family(3.0)).unwrap(),
                law_leibniz(&c, 16).unwrap(),
                law_functional_identity(&c, 16).unwrap(),
                law_multivariable_chain(&c, &Polynomial::default_family(), 16).unwrap(),
            ] {
                assert!(r.pass, "p = {p}: {} worst {} ({})", r.law, r.worst_slack, r.witness);
            }
        }
    }
}
