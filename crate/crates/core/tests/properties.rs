use penergy::construct::{
    canonical_witnesses, capacity_check, cell_function, f_value, measure_of_set, outer_measure_lb, FoldSchedule,
};
use penergy::forms::PlIntervalForm;
use penergy::ks::{ks_energy, KsKernel, SampledSpace};
use penergy::laws::{law_total_mass, two_variable_measure, LawContext, MeasureSource, RICHARDSON_STEPS};
use penergy::pl::{IntervalSet, PlFunction, ScalarMap, ShiftedCut, TriangleWave};
use penergy::sampler::PlSampler;
use proptest::collection::vec;
use proptest::prelude::*;

fn pl_fn(max_pieces: usize, amplitude: f64) -> impl Strategy<Value = PlFunction> {
    (1..=max_pieces)
        .prop_flat_map(move |m| (vec(0.05f64..1.0, m), vec(-amplitude..amplitude, m + 1)))
        .prop_map(|(gaps, ys)| {
            let total: f64 = gaps.iter().sum();
            let mut xs = vec![0.0];
            let mut acc = 0.0;
            for g in &gaps[..gaps.len() - 1] {
                acc += g / total;
                xs.push(acc);
            }
            xs.push(1.0);
            PlFunction::new(xs, ys).expect("increasing breakpoints")
        })
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.5), Just(2.0), Just(3.0), 1.1f64..4.0]
}

fn grid(k: usize) -> impl Iterator<Item = f64> {
    (0..=k).map(move |i| i as f64 / k as f64)
}

fn sched() -> FoldSchedule {
    FoldSchedule::new(4, 40, 1e-9, 2).unwrap()
}

fn min_abs_slope(f: &PlFunction) -> f64 {
    f.pieces().map(|p| p.slope().abs()).fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fold_and_cut_match_pointwise(f in pl_fn(6, 2.0), n in 1u32..7, a in -2.0f64..2.0) {
        let folded = f.triangle_fold(n).unwrap();
        let cut = f.shifted_cut(a, n).unwrap();
        let (tw, sc) = (TriangleWave::new(n), ShiftedCut::new(a, n));
        for x in grid(997) {
            prop_assert!((folded.eval(x) - tw.apply(f.eval(x))).abs() <= 1e-12);
            prop_assert!((cut.eval(x) - sc.apply(f.eval(x))).abs() <= 1e-12);
        }
        let top = 0.5f64.powi(n as i32);
        prop_assert!(cut.min_value() >= 0.0 && cut.max_value() <= top + 1e-15);
    }

    #[test]
    fn fold_preserves_absolute_slopes(f in pl_fn(6, 2.0), n in 1u32..7) {
        let folded = f.triangle_fold(n).unwrap();
        for p in folded.pieces() {
            let mid = 0.5 * (p.x0 + p.x1);
            let s = f.slope_at(mid).abs();
            prop_assert!((p.slope().abs() - s).abs() <= 1e-9 * (1.0 + s));
        }
    }

    #[test]
    fn sublevel_sets_grow(g in pl_fn(6, 2.0), a in -2.0f64..2.0, d in 0.0f64..1.0) {
        prop_assert!(g.sublevel_set(a).is_subset_of(&g.sublevel_set(a + d)));
    }

    #[test]
    fn cell_function_identity(f in pl_fn(5, 1.0), g in pl_fn(5, 1.0), a in -1.0f64..1.0, n in 1u32..6) {
        let cell = cell_function(&f, &g, a, n).unwrap();
        let tw = TriangleWave::new(n);
        let top = 0.5f64.powi(n as i32);
        for x in grid(500) {
            if g.eval(x) <= a {
                prop_assert!((cell.eval(x) - tw.apply(f.eval(x))).abs() <= 1e-12);
            } else if g.eval(x) >= a + top {
                prop_assert!(cell.eval(x).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn energy_is_homogeneous(f in pl_fn(8, 2.0), p in exponent(), c in -3.0f64..3.0) {
        let form = PlIntervalForm::new(p).unwrap();
        let lhs = form.energy(&f.scale(c));
        let rhs = c.abs().powf(p) * form.energy(&f);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }

    #[test]
    fn energy_triangle_and_minmax(f in pl_fn(6, 2.0), g in pl_fn(6, 2.0), p in exponent(), a in -1.0f64..1.0) {
        let form = PlIntervalForm::new(p).unwrap();
        let q = 1.0 / p;
        let bound = form.energy(&f).powf(q) + form.energy(&g).powf(q) + 1e-9;
        prop_assert!(form.energy(&f.add(&g).unwrap()).powf(q) <= bound);
        prop_assert!(form.energy(&f.max(&g.shift(-a)).unwrap()).powf(q) <= bound);
        prop_assert!(form.energy(&f.min(&g.shift(a)).unwrap()).powf(q) <= bound);
    }

    #[test]
    fn separated_supports_add(seed in any::<u64>(), p in exponent()) {
        let sampler = PlSampler::new(seed);
        let mut rng = sampler.rng(0);
        let f = sampler.sample_supported(&mut rng, 0.0, 0.4);
        let g = sampler.sample_supported(&mut rng, 0.6, 1.0);
        let form = PlIntervalForm::new(p).unwrap();
        let sum = form.energy(&f.add(&g).unwrap());
        let parts = form.energy(&f) + form.energy(&g);
        prop_assert!((sum - parts).abs() <= 1e-12 * parts.max(1.0));
    }

    #[test]
    fn derivative_matches_differences(u in pl_fn(6, 2.0), v in pl_fn(6, 2.0), p in exponent()) {
        prop_assume!(p >= 2.0 || min_abs_slope(&u) >= 0.2);
        let form = PlIntervalForm::new(p).unwrap();
        let d = |t: f64| {
            let plus = form.energy(&PlFunction::affine_combine(1.0, &u, t, &v).unwrap());
            let minus = form.energy(&PlFunction::affine_combine(1.0, &u, -t, &v).unwrap());
            (plus - minus) / (2.0 * p * t)
        };
        let t = 1e-3 * min_abs_slope(&u).max(1e-2) / v.pieces().map(|q| q.slope().abs()).fold(1e-9, f64::max);
        let richardson = (4.0 * d(t / 2.0) - d(t)) / 3.0;
        let exact = form.energy_drv(&u, &v);
        let scale = form.energy(&u).powf((p - 1.0) / p) * form.energy(&v).powf(1.0 / p);
        let tol = if p >= 2.0 { 1e-6 } else { 1e-4 };
        prop_assert!((richardson - exact).abs() <= tol * scale.max(1e-12), "{richardson} vs {exact}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn traces_and_distribution(f in pl_fn(5, 1.0), g in pl_fn(5, 1.0), a in -1.0f64..1.0, d in 0.01f64..0.5, p in exponent()) {
        let form = PlIntervalForm::new(p).unwrap();
        let s = sched();
        let tol = s.rel_tol * form.energy(&f).max(1.0);
        let lo = f_value(&form, &f, &g, a, &s).unwrap();
        let hi = f_value(&form, &f, &g, a + d, &s).unwrap();
        for t in [&lo, &hi] {
            prop_assert!(t.steps.iter().all(|st| t.value <= st.energy + tol));
        }
        prop_assert!(lo.value <= hi.value + 2.0 * tol);
    }

    #[test]
    fn outer_bound_below_measure(f in pl_fn(5, 1.0), c in 0.0f64..0.6, w in 0.05f64..0.4, p in exponent()) {
        let form = PlIntervalForm::new(p).unwrap();
        let u = IntervalSet::closed(c, c + w);
        let s = sched();
        let m = measure_of_set(&form, &f, &u, &s).unwrap();
        let lb = outer_measure_lb(&form, &f, &u, &canonical_witnesses(&u, 3), &s).unwrap();
        prop_assert!(lb.value <= m + 4.0 * s.rel_tol * form.energy(&f).max(1.0));
    }

    #[test]
    fn capacity_bound(f in pl_fn(4, 1.0), g in pl_fn(4, 1.0), a in -1.0f64..0.5, gaps in (0.05f64..0.3, 0.05f64..0.3)) {
        let form = PlIntervalForm::new(2.5).unwrap();
        let r = capacity_check(&form, &f, &g, a, a + gaps.0, a + gaps.0 + gaps.1, &sched()).unwrap();
        prop_assert!(r.pass, "{r:?}");
    }

    #[test]
    fn two_variable_is_linear(seed in any::<u64>(), ca in -2.0f64..2.0, cb in -2.0f64..2.0, p in prop_oneof![Just(2.0), Just(3.0)]) {
        let mut sampler = PlSampler::new(seed).with_max_breakpoints(8);
        sampler.amplitude = 1.0;
        sampler.min_gap = 0.05;
        let mut rng = sampler.rng(0);
        let u = sampler.clone().with_min_abs_slope(0.2).sample(&mut rng);
        let v = sampler.sample(&mut rng);
        let w = sampler.sample(&mut rng);
        let form = PlIntervalForm::new(p).unwrap();
        let sets: Vec<IntervalSet> = IntervalSet::dyadic_family(2);
        let src = MeasureSource::Oracle;
        let nu = |h: &PlFunction| two_variable_measure(&form, &u, h, &sets, &RICHARDSON_STEPS, &src).unwrap().values;
        let combo = PlFunction::affine_combine(ca, &v, cb, &w).unwrap();
        let (nv, nw, nc) = (nu(&v), nu(&w), nu(&combo));
        let scale = form.energy(&u).powf((p - 1.0) / p) * (form.energy(&v).powf(1.0 / p) + form.energy(&w).powf(1.0 / p)) * 2.0;
        for i in 0..sets.len() {
            prop_assert!((nc[i] - ca * nv[i] - cb * nw[i]).abs() <= 1e-6 * scale.max(1e-12));
        }
    }

    #[test]
    fn law_reports_replay(seed in any::<u64>()) {
        let build = || LawContext::new(PlIntervalForm::new(2.0).unwrap(), PlSampler::new(seed), 4, MeasureSource::Oracle);
        let a = law_total_mass(&build()).unwrap();
        let b = law_total_mass(&build()).unwrap();
        prop_assert_eq!(a.csv_rows(), b.csv_rows());
        prop_assert!(a.worst_slack >= -1e-12);
    }

    #[test]
    fn ks_homogeneity_and_monotonicity(
        f in pl_fn(5, 1.0),
        c in -3.0f64..3.0,
        r in 0.02f64..0.2,
        p in exponent(),
        inner in (0.0f64..0.4, 0.1f64..0.3),
    ) {
        let space = SampledSpace::interval(400).unwrap();
        let u = space.sample(|x| f.eval(x[0]));
        let kernel = KsKernel::new(r, p).unwrap();
        let j = ks_energy(&space, &u, &kernel).unwrap();
        let scaled: Vec<f64> = u.iter().map(|v| c * v).collect();
        let js = ks_energy(&space, &scaled, &kernel).unwrap();
        prop_assert!((js - c.abs().powf(p) * j).abs() <= 1e-12 * j.max(1e-300) * c.abs().powf(p).max(1.0));

        let small = IntervalSet::closed(inner.0, inner.0 + inner.1);
        let large = IntervalSet::closed(inner.0 * 0.5, (inner.0 + inner.1 + 0.2).min(1.0));
        let js = ks_energy(&space, &u, &kernel.clone().restricted(small)).unwrap();
        let jl = ks_energy(&space, &u, &kernel.clone().restricted(large)).unwrap();
        prop_assert!(js <= jl * (1.0 + 1e-12) && jl <= j * (1.0 + 1e-12));
    }

    #[test]
    fn ks_normal_contraction(f in pl_fn(5, 1.0), seed in any::<u64>(), r in 0.02f64..0.2, p in exponent()) {
        let space = SampledSpace::interval(400).unwrap();
        let u = space.sample(|x| f.eval(x[0]));
        let sampler = PlSampler::new(seed);
        let phi = sampler.contraction(&mut sampler.rng(0), 2.0);
        let v: Vec<f64> = u.iter().map(|&t| phi.apply(t)).collect();
        let kernel = KsKernel::new(r, p).unwrap();
        let (ju, jv) = (ks_energy(&space, &u, &kernel).unwrap(), ks_energy(&space, &v, &kernel).unwrap());
        prop_assert!(jv <= ju * (1.0 + 1e-12) + 1e-300);
    }
}
