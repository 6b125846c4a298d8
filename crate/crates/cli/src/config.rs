//! Experiment configs. Every struct rejects unknown keys, and the resolved
//! value (defaults filled in) is echoed into each output file.

use std::path::{Path, PathBuf};

use penergy::construct::FoldSchedule;
use penergy::forms::{FormDescriptor, PlIntervalForm, Weight};
use penergy::ks::Profile;
use penergy::laws::MeasureSource;
use penergy::pl::PlFunction;
use penergy::sampler::PlSampler;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Failure;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// The seed from the command line wins over the config file; one of the two
/// must be present.
pub fn resolve_seed(config: Option<u64>, flag: Option<u64>) -> Result<u64, Failure> {
    flag.or(config)
        .ok_or_else(|| Failure::Config("a seed is mandatory (config `seed` or --seed)".into()))
}

/// Sampler knobs; the seed comes from the experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub max_breakpoints: usize,
    pub amplitude: f64,
    pub min_gap: f64,
    pub min_abs_slope: Option<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        let d = PlSampler::default();
        Self {
            max_breakpoints: d.max_breakpoints,
            amplitude: d.amplitude,
            min_gap: d.min_gap,
            min_abs_slope: d.min_abs_slope,
        }
    }
}

impl SamplerConfig {
    pub fn build(&self, seed: u64) -> Result<PlSampler, Failure> {
        if self.max_breakpoints < 2 {
            return Err(Failure::Config("sampler.max_breakpoints must be at least 2".into()));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Failure::Config("sampler.amplitude must be positive".into()));
        }
        if !(self.min_gap > 0.0 && self.min_gap * (self.max_breakpoints - 1) as f64 <= 1.0) {
            return Err(Failure::Config("sampler.min_gap must be positive and fit the breakpoints in [0, 1]".into()));
        }
        Ok(PlSampler {
            seed,
            max_breakpoints: self.max_breakpoints,
            amplitude: self.amplitude,
            min_gap: self.min_gap,
            min_abs_slope: self.min_abs_slope,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateFormConfig {
    pub seed: Option<u64>,
    pub form: FormDescriptor,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

fn default_trials() -> u64 {
    200
}

/// A PL function named in a config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctionSpec {
    Identity {},
    Constant { value: f64 },
    Tent { center: f64, height: f64 },
    /// Explicit breakpoints and values.
    Pl { x: Vec<f64>, y: Vec<f64> },
    /// Trial `trial` of the seeded sampler.
    Sampled { trial: u64 },
}

impl FunctionSpec {
    pub fn build(&self, sampler: &PlSampler) -> Result<PlFunction, Failure> {
        let bad = |e: penergy::pl::PlError| Failure::Config(format!("function: {e}"));
        match self {
            Self::Identity {} => Ok(PlFunction::identity()),
            Self::Constant { value } => Ok(PlFunction::constant(*value)),
            Self::Tent { center, height } => PlFunction::tent(*center, *height).map_err(bad),
            Self::Pl { x, y } => PlFunction::new(x.clone(), y.clone()).map_err(bad),
            Self::Sampled { trial } => Ok(sampler.sample(&mut sampler.rng(*trial))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildMeasureConfig {
    pub seed: Option<u64>,
    pub p: f64,
    #[serde(default)]
    pub weight: Weight,
    pub function: FunctionSpec,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub schedule: FoldSchedule,
    /// Largest accepted sup relative gap between constructed and reference
    /// densities.
    #[serde(default = "default_gap_tolerance")]
    pub gap_tolerance: f64,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

fn default_resolution() -> usize {
    64
}

fn default_gap_tolerance() -> f64 {
    1e-4
}

pub const ALL_LAWS: &[&str] = &[
    "total_mass",
    "homogeneity_shift",
    "clarkson",
    "triangle",
    "locality",
    "minmax",
    "chain_rule",
    "domination",
    "minimal_dominant",
    "image_density",
    "continuity",
    "two_variable",
    "chain_rule_two_variable",
    "leibniz",
    "functional_identity",
    "multivariable_chain",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckLawsConfig {
    pub seed: Option<u64>,
    pub p: f64,
    #[serde(default)]
    pub weight: Weight,
    /// Weight of the comparison form for `domination`; twice `weight` when
    /// absent.
    #[serde(default)]
    pub upper_weight: Option<Weight>,
    #[serde(default = "all_laws")]
    pub laws: Vec<String>,
    #[serde(default = "default_law_trials")]
    pub trials: usize,
    #[serde(default = "oracle")]
    pub source: MeasureSource,
    /// Overrides the source's default tolerance.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Interpolation refinement for products and powers.
    #[serde(default = "default_refine")]
    pub refine: usize,
    #[serde(default = "law_sampler")]
    pub sampler: SamplerConfig,
}

fn all_laws() -> Vec<String> {
    ALL_LAWS.iter().map(|s| s.to_string()).collect()
}

fn default_law_trials() -> usize {
    20
}

fn oracle() -> MeasureSource {
    MeasureSource::Oracle
}

fn default_refine() -> usize {
    16
}

fn law_sampler() -> SamplerConfig {
    SamplerConfig {
        max_breakpoints: 10,
        amplitude: 1.0,
        min_gap: 0.05,
        min_abs_slope: None,
    }
}

impl CheckLawsConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        if self.laws.is_empty() {
            return Err(Failure::Config("laws must not be empty".into()));
        }
        if let Some(bad) = self.laws.iter().find(|l| !ALL_LAWS.contains(&l.as_str())) {
            return Err(Failure::Config(format!("unknown law `{bad}`; known: {}", ALL_LAWS.join(", "))));
        }
        if self.trials == 0 {
            return Err(Failure::Config("trials must be positive".into()));
        }
        if self.refine == 0 {
            return Err(Failure::Config("refine must be positive".into()));
        }
        Ok(())
    }

    pub fn form(&self) -> Result<PlIntervalForm, Failure> {
        PlIntervalForm::with_weight(self.p, self.weight.clone()).map_err(|e| Failure::Config(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Interval,
    Torus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Linear,
    Sine,
    Tent,
    Step,
    /// One value per grid point, read from `profile_file`.
    File,
}

impl ProfileKind {
    pub fn builtin(self) -> Option<Profile> {
        match self {
            Self::Linear => Some(Profile::Linear),
            Self::Sine => Some(Profile::Sine),
            Self::Tent => Some(Profile::Tent),
            Self::Step => Some(Profile::Step),
            Self::File => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KsConfig {
    pub seed: Option<u64>,
    #[serde(default = "interval")]
    pub space: SpaceKind,
    /// Grid points on the interval, or the side length of the torus grid.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_radii")]
    pub r_list: Vec<f64>,
    #[serde(default = "linear")]
    pub profile: ProfileKind,
    #[serde(default)]
    pub profile_file: Option<PathBuf>,
}

fn interval() -> SpaceKind {
    SpaceKind::Interval
}

fn default_n() -> usize {
    2000
}

fn default_p() -> f64 {
    2.0
}

fn default_radii() -> Vec<f64> {
    vec![0.08, 0.04, 0.02]
}

fn linear() -> ProfileKind {
    ProfileKind::Linear
}

impl Default for KsConfig {
    fn default() -> Self {
        Self {
            seed: None,
            space: interval(),
            n: default_n(),
            p: default_p(),
            r_list: default_radii(),
            profile: linear(),
            profile_file: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgConfig {
    pub seed: Option<u64>,
    pub p_list: Vec<f64>,
    #[serde(default = "default_sg_tol")]
    pub tol: f64,
}

fn default_sg_tol() -> f64 {
    1e-12
}

impl SgConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        if self.p_list.is_empty() {
            return Err(Failure::Config("p_list must not be empty".into()));
        }
        if let Some(p) = self.p_list.iter().find(|p| !(p.is_finite() && **p > 1.0)) {
            return Err(Failure::Config(format!("p = {p} must satisfy p > 1")));
        }
        if !(self.tol > 0.0) {
            return Err(Failure::Config("tol must be positive".into()));
        }
        Ok(())
    }
}
