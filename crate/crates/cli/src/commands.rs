use std::fs;
use std::path::{Path, PathBuf};

use penergy::construct::{
    density_gap, energy_measure, f_value, reference_measure, ConstructError,
};
use penergy::forms::{
    check_assumptions, check_clarkson, sg_renormalization, AssumptionReport, CheckStatus, ClarksonReport, Edge,
    EnergyForm, FormDescriptor, FormError, GraphForm, PlIntervalForm, SgForm,
};
use penergy::ks::{
    check_weak_monotonicity, ks_limit_scan, ks_vs_canonical, Geometry, KsError, KsScan, SampledSpace,
};
use penergy::laws::{self, LawContext, LawError, LawReport, Polynomial, LAW_CSV_HEADER};
use penergy::pl::PlFunction;
use penergy::sampler::PlSampler;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{self, BuildMeasureConfig, CheckLawsConfig, KsConfig, SgConfig, SpaceKind, ValidateFormConfig};
use crate::svg::{staircase, Chart, Series};
use crate::{Failure, Global, KsFlags};

fn construct_failure(e: ConstructError) -> Failure {
    match e {
        ConstructError::Schedule(_) | ConstructError::Argument(_) => Failure::Config(e.to_string()),
        other => Failure::Numerical(other.to_string()),
    }
}

fn form_failure(e: FormError) -> Failure {
    match e {
        FormError::NoConvergence { .. } => Failure::Numerical(e.to_string()),
        other => Failure::Config(other.to_string()),
    }
}

fn law_failure(e: LawError) -> Failure {
    match e {
        LawError::Precondition(_) => Failure::Config(e.to_string()),
        LawError::Construct(c) => construct_failure(c),
        LawError::Form(f) => form_failure(f),
        other => Failure::Numerical(other.to_string()),
    }
}

fn ks_failure(e: KsError) -> Failure {
    match e {
        KsError::Space(_) | KsError::Radius(_) => Failure::Config(e.to_string()),
        KsError::Construct(c) => construct_failure(c),
        KsError::Degenerate => Failure::Numerical(e.to_string()),
    }
}

/// Report files in one directory, each CSV opened by a `#` line holding the
/// resolved config.
struct Output {
    dir: PathBuf,
    header: String,
    plot: bool,
}

impl Output {
    fn new<C: Serialize>(global: &Global, resolved: &C) -> Result<Self, Failure> {
        fs::create_dir_all(&global.out)
            .map_err(|e| Failure::Config(format!("cannot create {}: {e}", global.out.display())))?;
        let header = serde_json::to_string(resolved).expect("configs serialize");
        let out = Self {
            dir: global.out.clone(),
            header,
            plot: global.plot,
        };
        out.write("config.json", &format!("{}\n", out.header))?;
        Ok(out)
    }

    fn write(&self, name: &str, body: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
    }

    fn csv(&self, name: &str, body: &str) -> Result<(), Failure> {
        self.write(name, &format!("# config: {}\n{body}", self.header))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).expect("reports serialize");
        self.write(name, &format!("{text}\n"))
    }

    fn svg(&self, name: &str, chart: impl FnOnce() -> Chart) -> Result<(), Failure> {
        if self.plot {
            self.write(name, &chart().render())?;
        }
        Ok(())
    }
}

fn require_config<T: serde::de::DeserializeOwned>(global: &Global) -> Result<T, Failure> {
    let path = global
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config is required for this command".into()))?;
    config::load(path)
}

fn status_text(s: &CheckStatus) -> String {
    match s {
        CheckStatus::Pass => "pass".into(),
        CheckStatus::Fail => "fail".into(),
        CheckStatus::ModelFact(n) => format!("model fact: {n}"),
        CheckStatus::NotApplicable(n) => format!("skipped: {n}"),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn run_form_checks<F: EnergyForm>(
    form: &F,
    sampler: &PlSampler,
    trials: u64,
) -> Result<(AssumptionReport, ClarksonReport), Failure> {
    let a = check_assumptions(form, sampler, trials).map_err(form_failure)?;
    let c = check_clarkson(form, sampler, trials).map_err(form_failure)?;
    Ok((a, c))
}

pub fn validate_form(global: &Global) -> Result<(), Failure> {
    let mut cfg: ValidateFormConfig = require_config(global)?;
    let seed = config::resolve_seed(cfg.seed, global.seed)?;
    cfg.seed = Some(seed);
    let sampler = cfg.sampler.build(seed)?;
    let (assumptions, clarkson) = match &cfg.form {
        FormDescriptor::Pl { p, weight } => {
            let form = PlIntervalForm::with_weight(*p, weight.clone().unwrap_or_default()).map_err(form_failure)?;
            run_form_checks(&form, &sampler, cfg.trials)?
        }
        FormDescriptor::Graph {
            p,
            vertices,
            edges,
            vertex_weights,
        } => {
            let edges = edges
                .iter()
                .map(|&(a, b, conductance)| Edge { a, b, conductance })
                .collect();
            let form = GraphForm::new(*p, *vertices, edges, vertex_weights.clone()).map_err(form_failure)?;
            run_form_checks(&form, &sampler, cfg.trials)?
        }
        FormDescriptor::Sg { p, level, rho } => {
            let form = SgForm::new(*p, *level, *rho).map_err(form_failure)?;
            run_form_checks(&form, &sampler, cfg.trials)?
        }
    };
    let out = Output::new(global, &cfg)?;

    let mut body = String::from("id,status,worst_slack,tolerance,trials\n");
    for item in &assumptions.items {
        body.push_str(&format!(
            "{},{},{},{:e},{}\n",
            item.id,
            csv_field(&status_text(&item.status)),
            opt(item.worst_slack),
            item.tolerance,
            item.trials
        ));
    }
    out.csv("assumptions.csv", &body)?;

    let mut body = String::from("inequality,worst_slack,worst_trial\n");
    for k in 0..4 {
        body.push_str(&format!(
            "CI{},{},{}\n",
            k + 1,
            opt(clarkson.worst[k]),
            clarkson.worst_trial[k].map_or_else(String::new, |t| t.to_string())
        ));
    }
    out.csv("clarkson.csv", &body)?;

    for item in &assumptions.items {
        println!("{:<20} {:<60} {}", item.id, status_text(&item.status), opt(item.worst_slack));
    }
    for k in 0..4 {
        println!(
            "CI{:<18} {:<60} {}",
            k + 1,
            if clarkson.worst[k].is_some() { "sampled" } else { "not applicable for this p" },
            opt(clarkson.worst[k])
        );
    }
    if assumptions.pass && clarkson.pass {
        println!("PASS");
        Ok(())
    } else {
        Err(Failure::Law)
    }
}

pub fn build_measure(global: &Global) -> Result<(), Failure> {
    let mut cfg: BuildMeasureConfig = require_config(global)?;
    let seed = config::resolve_seed(cfg.seed, global.seed)?;
    cfg.seed = Some(seed);
    cfg.schedule.validate().map_err(construct_failure)?;
    if cfg.resolution == 0 {
        return Err(Failure::Config("resolution must be positive".into()));
    }
    let form = PlIntervalForm::with_weight(cfg.p, cfg.weight.clone()).map_err(form_failure)?;
    let f = cfg.function.build(&cfg.sampler.build(seed)?)?;
    let out = Output::new(global, &cfg)?;

    let total_trace = f_value(&form, &f, &PlFunction::identity(), 1.0, &cfg.schedule).map_err(construct_failure)?;
    out.csv("trace.csv", &total_trace.to_csv())?;
    out.svg("trace.svg", || trace_chart(&total_trace.steps))?;

    let constructed = match energy_measure(&form, &f, cfg.resolution, &cfg.schedule) {
        Ok(m) => m,
        Err(ConstructError::NoConvergence { a, n_max, last_change }) => {
            let trace = f_value(&form, &f, &PlFunction::identity(), a, &cfg.schedule).map_err(construct_failure)?;
            out.csv("nonconvergent_trace.csv", &trace.to_csv())?;
            return Err(Failure::Numerical(format!(
                "F(a = {a}) did not settle by n = {n_max} (last change {last_change:e}); trace in nonconvergent_trace.csv"
            )));
        }
        Err(e) => return Err(construct_failure(e)),
    };
    let reference = reference_measure(&form, &f);
    let gap = density_gap(&constructed, &reference);
    out.csv("constructed.csv", &constructed.to_csv())?;
    out.csv("reference.csv", &reference.to_csv())?;
    let energy = form.energy(&f);
    let pass = gap.sup_rel <= cfg.gap_tolerance;
    out.json(
        "summary.json",
        &json!({
            "energy": energy,
            "constructed_mass": constructed.total_mass,
            "gap": gap,
            "gap_tolerance": cfg.gap_tolerance,
            "pass": pass,
        }),
    )?;
    out.svg("density.svg", || Chart {
        title: "energy measure density".into(),
        x_label: "x".into(),
        y_label: "density".into(),
        log_x: false,
        log_y: false,
        series: vec![
            Series {
                label: "constructed".into(),
                points: staircase(constructed.cells()),
            },
            Series {
                label: "reference".into(),
                points: staircase(reference.cells()),
            },
        ],
    })?;
    println!(
        "E(f) = {energy:e}, mu(X) = {:e}, sup relative gap = {:e} (tolerance {:e})",
        constructed.total_mass, gap.sup_rel, cfg.gap_tolerance
    );
    if pass {
        println!("PASS");
        Ok(())
    } else {
        Err(Failure::Law)
    }
}

fn trace_chart(steps: &[penergy::construct::TraceStep]) -> Chart {
    let last = steps.last().map_or(0.0, |s| s.inf_so_far);
    Chart {
        title: "cell energies E_n - inf".into(),
        x_label: "n".into(),
        y_label: "E_n - inf (log)".into(),
        log_x: false,
        log_y: true,
        series: vec![Series {
            label: "E_n - inf_m E_m".into(),
            points: steps.iter().map(|s| (s.n as f64, s.energy - last)).collect(),
        }],
    }
}

fn run_law(name: &str, ctx: &LawContext, cfg: &CheckLawsConfig) -> Result<LawReport, Failure> {
    let radius = cfg.sampler.amplitude + 1.0;
    let result = match name {
        "total_mass" => laws::law_total_mass(ctx),
        "homogeneity_shift" => laws::law_homogeneity_shift(ctx),
        "clarkson" => laws::law_measure_clarkson(ctx),
        "triangle" => laws::law_measure_triangle(ctx),
        "locality" => laws::law_locality(ctx),
        "minmax" => laws::law_minmax_bound(ctx),
        "chain_rule" => laws::law_chain_rule(ctx, &laws::chain_map_family(radius)),
        "domination" => {
            let upper = cfg.upper_weight.clone().unwrap_or_else(|| cfg.weight.scaled(2.0));
            let upper = PlIntervalForm::with_weight(cfg.p, upper).map_err(form_failure)?;
            laws::law_domination(ctx, &upper)
        }
        "minimal_dominant" => laws::law_minimal_dominant(ctx, &[PlFunction::identity()]),
        "image_density" => laws::law_image_density(ctx),
        "continuity" => laws::law_continuity(ctx),
        "two_variable" => laws::law_two_variable(ctx),
        "chain_rule_two_variable" => laws::law_chain_rule_two_variable(ctx, &laws::chain_map_family(radius)),
        "leibniz" => laws::law_leibniz(ctx, cfg.refine),
        "functional_identity" => laws::law_functional_identity(ctx, cfg.refine),
        "multivariable_chain" => laws::law_multivariable_chain(ctx, &Polynomial::default_family(), cfg.refine),
        other => return Err(Failure::Config(format!("unknown law `{other}`"))),
    };
    result.map_err(law_failure)
}

pub fn check_laws(global: &Global) -> Result<(), Failure> {
    let mut cfg: CheckLawsConfig = require_config(global)?;
    let seed = config::resolve_seed(cfg.seed, global.seed)?;
    cfg.seed = Some(seed);
    cfg.validate()?;
    if let penergy::laws::MeasureSource::Construction { schedule } = &cfg.source {
        schedule.validate().map_err(construct_failure)?;
    }
    let form = cfg.form()?;
    let sampler = cfg.sampler.build(seed)?;
    let mut ctx = LawContext::new(form, sampler, cfg.trials, cfg.source.clone());
    if let Some(tol) = cfg.tolerance {
        ctx = ctx.with_tolerance(tol);
    }
    let out = Output::new(global, &cfg)?;

    let mut reports = Vec::new();
    for name in &cfg.laws {
        reports.push(run_law(name, &ctx, &cfg)?);
    }
    let mut rows = String::from(LAW_CSV_HEADER);
    let mut summary = String::from("law,source,trials,worst_slack,tolerance,pass,worst_trial\n");
    println!("{:<26} {:>8} {:>14} {:>10}  result", "law", "trials", "worst slack", "tolerance");
    for r in &reports {
        rows.push_str(&r.csv_rows());
        summary.push_str(&format!(
            "{},{},{},{:e},{:e},{},{}\n",
            r.law,
            r.source,
            r.trials,
            r.worst_slack,
            r.tolerance,
            r.pass,
            r.worst_trial.map_or_else(String::new, |t| t.to_string())
        ));
        println!(
            "{:<26} {:>8} {:>14.3e} {:>10.1e}  {}",
            r.law,
            r.trials,
            r.worst_slack,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" }
        );
        if !r.pass {
            println!("    worst trial {:?}: {}", r.worst_trial, r.witness);
        }
    }
    out.csv("laws.csv", &rows)?;
    out.csv("summary.csv", &summary)?;
    if reports.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(Failure::Law)
    }
}

fn read_profile_file(path: &Path, len: usize) -> Result<Vec<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Failure::Config(format!("{}: `{t}`: {e}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != len {
        return Err(Failure::Config(format!(
            "{} holds {} values but the grid has {len} points",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

pub fn ks_energy(global: &Global, flags: &KsFlags) -> Result<(), Failure> {
    let mut cfg: KsConfig = match &global.config {
        Some(path) => config::load(path)?,
        None => KsConfig::default(),
    };
    cfg.seed = Some(config::resolve_seed(cfg.seed, global.seed)?);
    if let Some(s) = flags.space {
        cfg.space = s;
    }
    if let Some(n) = flags.n {
        cfg.n = n;
    }
    if let Some(p) = flags.p {
        cfg.p = p;
    }
    if let Some(rs) = &flags.r_list {
        cfg.r_list = rs.clone();
    }
    if let Some(pr) = flags.profile {
        cfg.profile = pr;
    }
    if flags.profile_file.is_some() {
        cfg.profile_file = flags.profile_file.clone();
    }
    if !(cfg.p.is_finite() && cfg.p > 1.0) {
        return Err(Failure::Config(format!("p = {} must satisfy p > 1", cfg.p)));
    }
    let space = match cfg.space {
        SpaceKind::Interval => SampledSpace::interval(cfg.n),
        SpaceKind::Torus => SampledSpace::torus(cfg.n),
    }
    .map_err(ks_failure)?;
    let values = match cfg.profile.builtin() {
        Some(profile) => space.sample(|x| profile.eval(x)),
        None => {
            let path = cfg
                .profile_file
                .as_deref()
                .ok_or_else(|| Failure::Config("profile `file` needs profile_file".into()))?;
            read_profile_file(path, space.len())?
        }
    };
    let canonical_input = cfg
        .profile
        .builtin()
        .and_then(|p| p.to_pl())
        .filter(|_| space.geometry() == Geometry::Interval);
    let out = Output::new(global, &cfg)?;

    let (scan, canonical) = match canonical_input {
        Some(u) => {
            let c = ks_vs_canonical(&space, &u, cfg.p, &cfg.r_list).map_err(ks_failure)?;
            (c.scan.clone(), Some(c))
        }
        None => (ks_limit_scan(&space, &values, cfg.p, &cfg.r_list).map_err(ks_failure)?, None),
    };
    let wm = match check_weak_monotonicity(&space, &values, cfg.p, &cfg.r_list) {
        Ok(w) => Some(w),
        Err(KsError::Degenerate) => None,
        Err(e) => return Err(ks_failure(e)),
    };
    out.csv("ks_scan.csv", &scan.to_csv())?;
    out.json(
        "summary.json",
        &json!({
            "p": scan.p,
            "liminf_estimate": scan.liminf_estimate,
            "extrapolated": scan.extrapolated,
            "linear_coefficient": scan.linear_coefficient,
            "dispersion": scan.dispersion,
            "loglog_slope": scan.loglog_slope,
            "divergent": scan.divergent,
            "weak_monotonicity": wm,
            "canonical": canonical.as_ref().map(|c| json!({
                "scaled_limit": c.scaled_limit,
                "energy": c.energy,
                "canonical_mass": c.canonical_mass,
                "energy_deviation": c.energy_deviation,
                "mass_deviation": c.mass_deviation,
            })),
        }),
    )?;
    out.svg("ks_scan.svg", || scan_chart(&scan))?;
    println!(
        "lim J ~ {:e} (dispersion {:e}), log-log slope {:.3}{}",
        scan.extrapolated,
        scan.dispersion,
        scan.loglog_slope,
        if scan.divergent { ", DIVERGENT" } else { "" }
    );
    if let Some(c) = &canonical {
        println!(
            "(p+1) lim J = {:e}; E(u) = {:e} (deviation {:.3e}); mu(X) = {:e} (deviation {:.3e})",
            c.scaled_limit, c.energy, c.energy_deviation, c.canonical_mass, c.mass_deviation
        );
    }
    Ok(())
}

fn scan_chart(scan: &KsScan) -> Chart {
    Chart {
        title: format!("Korevaar-Schoen scan, p = {}", scan.p),
        x_label: "r (log)".into(),
        y_label: "J (log)".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series {
                label: "J_{p,r}".into(),
                points: scan.r.iter().copied().zip(scan.j.iter().copied()).collect(),
            },
            Series {
                label: "sup so far".into(),
                points: scan.r.iter().copied().zip(scan.sup_so_far.iter().copied()).collect(),
            },
        ],
    }
}

pub fn sg_renorm(global: &Global) -> Result<(), Failure> {
    let mut cfg: SgConfig = require_config(global)?;
    cfg.seed = Some(config::resolve_seed(cfg.seed, global.seed)?);
    cfg.validate()?;
    let out = Output::new(global, &cfg)?;
    let results = cfg
        .p_list
        .par_iter()
        .map(|&p| sg_renormalization(p, cfg.tol))
        .collect::<Result<Vec<_>, _>>()
        .map_err(form_failure)?;
    let mut body = String::from("p,rho,residual,iterations,shape_deviation\n");
    for r in &results {
        body.push_str(&format!(
            "{},{:e},{:e},{},{:e}\n",
            r.p, r.rho, r.residual, r.iterations, r.shape_deviation
        ));
        println!(
            "p = {}: rho = {:.12}, residual {:.2e}, {} iterations, shape deviation {:.3e}",
            r.p, r.rho, r.residual, r.iterations, r.shape_deviation
        );
    }
    out.csv("rho.csv", &body)?;
    Ok(())
}
