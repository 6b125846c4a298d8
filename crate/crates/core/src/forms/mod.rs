//! Concrete p-energy forms and the checks of their structural assumptions.
//!
//! * [`PlIntervalForm`]: `E(f) = ∫ w |f'|^p dx` on piecewise-linear functions
//!   of `[0, 1]`, with a piecewise-constant weight `w`. This is the strongly
//!   local model on which the measure construction runs.
//! * [`GraphForm`]: `E(f) = Σ c_xy |f(x) − f(y)|^p` on a finite weighted graph.
//!   It is a p-energy form but not strongly local.
//! * [`SgForm`]: the level-`L` graph energy of the Sierpinski gasket scaled by
//!   `ρ_p^L`.

mod checks;
mod graph;
mod sg;

pub use checks::{
    check_assumptions, check_clarkson, check_fold_domination, check_fold_identity,
    clarkson_slacks, AssumptionReport, CheckItem, CheckStatus, ClarksonReport,
    FoldIdentityReport, CLARKSON_TOL,
};
pub use graph::{Edge, GraphForm};
pub use sg::{
    sg_harmonic_extension, sg_harmonic_extension_from, sg_renormalization, HarmonicExtension,
    Renormalization, SgForm, SgLattice,
};

use std::fmt;

use rand::Rng;
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pl::{merge_knots, PlError, PlFunction, PlMap, EPS_GEOM};
use crate::sampler::PlSampler;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormError {
    #[error("exponent p = {0} must satisfy p > 1")]
    Exponent(f64),
    #[error("dimension mismatch: expected {expected} vertex values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid weight: {0}")]
    Weight(String),
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("partition [{lo}, {hi}] does not span the function range [{min}, {max}]")]
    PartitionRange { lo: f64, hi: f64, min: f64, max: f64 },
    #[error("map is not affine on partition cell [{lo}, {hi}]")]
    NotAffine { lo: f64, hi: f64 },
    #[error("solver did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Pl(#[from] PlError),
}

pub(crate) fn check_exponent(p: f64) -> Result<(), FormError> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(FormError::Exponent(p))
    }
}

/// `|s|^p`, with the common exponents special-cased.
#[inline]
pub fn pow_abs(s: f64, p: f64) -> f64 {
    if p == 2.0 {
        s * s
    } else if p == 3.0 {
        let a = s.abs();
        a * a * a
    } else {
        s.abs().powf(p)
    }
}

/// `|s|^{p-2} s`, set to zero at `s = 0`.
#[inline]
pub fn signed_pow(s: f64, p: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else if p == 2.0 {
        s
    } else {
        s.abs().powf(p - 1.0) * s.signum()
    }
}

/// Piecewise-constant nonnegative weight on a partition of `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight {
    cuts: Vec<f64>,
    values: Vec<f64>,
}

impl Default for Weight {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl Weight {
    pub fn uniform(w: f64) -> Self {
        Self {
            cuts: vec![0.0, 1.0],
            values: vec![w],
        }
    }

    /// Builds a weight from `(lo, hi, w)` segments tiling `[0, 1]` in order.
    pub fn from_segments(segments: &[(f64, f64, f64)]) -> Result<Self, FormError> {
        if segments.is_empty() {
            return Err(FormError::Weight("no segments".into()));
        }
        let mut cuts = vec![segments[0].0];
        let mut values = Vec::with_capacity(segments.len());
        for &(lo, hi, w) in segments {
            if (lo - cuts[cuts.len() - 1]).abs() > EPS_GEOM || hi <= lo {
                return Err(FormError::Weight(format!(
                    "segment [{lo}, {hi}] does not continue the tiling"
                )));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(FormError::Weight(format!("weight {w} must be finite and nonnegative")));
            }
            cuts.push(hi);
            values.push(w);
        }
        if cuts[0].abs() > EPS_GEOM || (cuts[cuts.len() - 1] - 1.0).abs() > EPS_GEOM {
            return Err(FormError::Weight("segments must tile [0, 1]".into()));
        }
        cuts[0] = 0.0;
        *cuts.last_mut().unwrap() = 1.0;
        Ok(Self { cuts, values })
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.cuts
            .windows(2)
            .zip(self.values.iter())
            .map(|(c, &w)| (c[0], c[1], w))
    }

    /// Weight of the segment containing `x` (right-continuous).
    pub fn at(&self, x: f64) -> f64 {
        let i = self.cuts.partition_point(|&c| c <= x).clamp(1, self.values.len());
        self.values[i - 1]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            cuts: self.cuts.clone(),
            values: self.values.iter().map(|w| w * c).collect(),
        }
    }

    /// Whether `self ≤ other` everywhere.
    pub fn le(&self, other: &Weight) -> bool {
        let knots = merge_knots(&[&self.cuts, &other.cuts]);
        knots.windows(2).all(|k| {
            let mid = 0.5 * (k[0] + k[1]);
            self.at(mid) <= other.at(mid)
        })
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.values.len()))?;
        for seg in self.segments() {
            seq.serialize_element(&seg)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct WeightVisitor;
        impl<'de> Visitor<'de> for WeightVisitor {
            type Value = Weight;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of [lo, hi, w] triples tiling [0, 1]")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Weight, A::Error> {
                let mut segs = Vec::new();
                while let Some(seg) = seq.next_element::<(f64, f64, f64)>()? {
                    segs.push(seg);
                }
                Weight::from_segments(&segs).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_seq(WeightVisitor)
    }
}

/// One cell of the common refinement of several PL functions and a weight:
/// every function is affine and the weight constant on `[x0, x1]`.
#[derive(Clone, Debug)]
pub struct Cell {
    pub x0: f64,
    pub x1: f64,
    pub weight: f64,
    pub slopes: Vec<f64>,
}

impl Cell {
    pub fn len(&self) -> f64 {
        self.x1 - self.x0
    }
}

/// The p-energy `E(f) = ∫_0^1 w |f'|^p dx` on piecewise-linear functions.
#[derive(Clone, Debug, PartialEq)]
pub struct PlIntervalForm {
    p: f64,
    weight: Weight,
}

impl PlIntervalForm {
    pub fn new(p: f64) -> Result<Self, FormError> {
        Self::with_weight(p, Weight::default())
    }

    pub fn with_weight(p: f64, weight: Weight) -> Result<Self, FormError> {
        check_exponent(p)?;
        Ok(Self { p, weight })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    /// Common refinement of the given functions and the weight partition.
    pub fn cells(&self, fs: &[&PlFunction]) -> Vec<Cell> {
        let mut lists: Vec<&[f64]> = fs.iter().map(|f| f.breakpoints()).collect();
        lists.push(self.weight.cuts());
        let knots = merge_knots(&lists);
        knots
            .windows(2)
            .map(|k| {
                let mid = 0.5 * (k[0] + k[1]);
                Cell {
                    x0: k[0],
                    x1: k[1],
                    weight: self.weight.at(mid),
                    slopes: fs.iter().map(|f| f.slope_at(mid)).collect(),
                }
            })
            .collect()
    }

    pub fn energy(&self, f: &PlFunction) -> f64 {
        let mut total = 0.0;
        let (cuts, ws) = (&self.weight.cuts, &self.weight.values);
        let mut j = 0;
        for piece in f.pieces() {
            let s = pow_abs(piece.slope(), self.p);
            if s == 0.0 {
                continue;
            }
            let mut x = piece.x0;
            while x < piece.x1 {
                while cuts[j + 1] <= x {
                    j += 1;
                }
                let end = piece.x1.min(cuts[j + 1]);
                total += ws[j] * s * (end - x);
                x = end;
            }
        }
        total
    }

    /// `(1/p) d/dt E(u + t v)|_{t=0} = ∫ w |u'|^{p-2} u' v' dx`.
    pub fn energy_drv(&self, u: &PlFunction, v: &PlFunction) -> f64 {
        self.cells(&[u, v])
            .iter()
            .map(|c| c.weight * signed_pow(c.slopes[0], self.p) * c.slopes[1] * c.len())
            .sum()
    }

    pub fn descriptor(&self) -> FormDescriptor {
        FormDescriptor::Pl {
            p: self.p,
            weight: Some(self.weight.clone()),
        }
    }
}

/// Serializable description of a form, as used in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FormDescriptor {
    Pl {
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight: Option<Weight>,
    },
    Graph {
        p: f64,
        vertices: usize,
        edges: Vec<(usize, usize, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vertex_weights: Option<Vec<f64>>,
    },
    Sg {
        p: f64,
        level: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
}

impl FormDescriptor {
    pub fn p(&self) -> f64 {
        match self {
            Self::Pl { p, .. } | Self::Graph { p, .. } | Self::Sg { p, .. } => *p,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serializes")
    }
}

/// Operations the assumption and Clarkson checks need from a form.
pub trait EnergyForm: Sync {
    type Func: Clone + Send + Sync;

    fn exponent(&self) -> f64;
    fn energy_of(&self, f: &Self::Func) -> Result<f64, FormError>;
    fn combine(&self, a: f64, f: &Self::Func, b: f64, g: &Self::Func) -> Result<Self::Func, FormError>;
    fn compose_with(&self, phi: &PlMap, f: &Self::Func) -> Result<Self::Func, FormError>;
    /// `f ∨ (g − a)` and `f ∧ (g + a)`.
    fn max_min_shifted(&self, f: &Self::Func, g: &Self::Func, a: f64)
        -> Result<(Self::Func, Self::Func), FormError>;
    fn sup_norm(&self, f: &Self::Func) -> f64;
    fn sample(&self, sampler: &PlSampler, rng: &mut rand_chacha::ChaCha8Rng) -> Self::Func;
    /// A pair `f, g` with `supp f ∩ supp(g + a) = ∅` for some constant `a`,
    /// or `None` when the model is not strongly local.
    fn separated_pair(
        &self,
        sampler: &PlSampler,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Option<(Self::Func, Self::Func)>;
    fn descriptor(&self) -> FormDescriptor;
}

impl EnergyForm for PlIntervalForm {
    type Func = PlFunction;

    fn exponent(&self) -> f64 {
        self.p
    }

    fn energy_of(&self, f: &PlFunction) -> Result<f64, FormError> {
        Ok(self.energy(f))
    }

    fn combine(&self, a: f64, f: &PlFunction, b: f64, g: &PlFunction) -> Result<PlFunction, FormError> {
        Ok(PlFunction::affine_combine(a, f, b, g)?)
    }

    fn compose_with(&self, phi: &PlMap, f: &PlFunction) -> Result<PlFunction, FormError> {
        Ok(f.compose(phi)?)
    }

    fn max_min_shifted(
        &self,
        f: &PlFunction,
        g: &PlFunction,
        a: f64,
    ) -> Result<(PlFunction, PlFunction), FormError> {
        Ok((f.max(&g.shift(-a))?, f.min(&g.shift(a))?))
    }

    fn sup_norm(&self, f: &PlFunction) -> f64 {
        f.sup_norm()
    }

    fn sample(&self, sampler: &PlSampler, rng: &mut rand_chacha::ChaCha8Rng) -> PlFunction {
        sampler.sample(rng)
    }

    fn separated_pair(
        &self,
        sampler: &PlSampler,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Option<(PlFunction, PlFunction)> {
        let split: f64 = rng.gen_range(0.3..0.7);
        let gap: f64 = rng.gen_range(0.01..0.1);
        let f = sampler.sample_supported(rng, 0.0, split - gap / 2.0);
        let shift: f64 = rng.gen_range(-1.0..1.0);
        let g = sampler.sample_supported(rng, split + gap / 2.0, 1.0).shift(shift);
        Some((f, g))
    }

    fn descriptor(&self) -> FormDescriptor {
        PlIntervalForm::descriptor(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_examples() {
        for p in [1.5, 2.0, 3.0, 4.2] {
            let form = PlIntervalForm::new(p).unwrap();
            assert!((form.energy(&PlFunction::identity()) - 1.0).abs() < 1e-15);
            assert_eq!(form.energy(&PlFunction::constant(3.0)), 0.0);
        }
        let form = PlIntervalForm::new(2.0).unwrap();
        let tent = PlFunction::tent(0.5, 0.5).unwrap();
        assert!((form.energy(&tent) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_energy_splits_pieces() {
        let w = Weight::from_segments(&[(0.0, 0.3, 2.0), (0.3, 1.0, 0.5)]).unwrap();
        let form = PlIntervalForm::with_weight(2.0, w).unwrap();
        let f = PlFunction::linear(2.0, 0.0);
        assert!((form.energy(&f) - 4.0 * (2.0 * 0.3 + 0.5 * 0.7)).abs() < 1e-14);
    }

    #[test]
    fn energy_drv_examples() {
        let form = PlIntervalForm::new(2.0).unwrap();
        let id = PlFunction::identity();
        assert!((form.energy_drv(&id, &id) - 1.0).abs() < 1e-15);
        assert_eq!(form.energy_drv(&id, &PlFunction::constant(2.0)), 0.0);
        let form = PlIntervalForm::new(3.3).unwrap();
        let u = PlFunction::new(vec![0.0, 0.4, 1.0], vec![0.0, 1.0, -0.5]).unwrap();
        assert!((form.energy_drv(&u, &u) - form.energy(&u)).abs() < 1e-13);
    }

    #[test]
    fn signed_pow_removable_zero() {
        assert_eq!(signed_pow(0.0, 1.5), 0.0);
        assert_eq!(signed_pow(-2.0, 3.0), -4.0);
        assert!((signed_pow(4.0, 1.5) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(PlIntervalForm::new(1.0), Err(FormError::Exponent(1.0)));
        assert!(PlIntervalForm::new(0.5).is_err());
        assert!(Weight::from_segments(&[(0.0, 0.5, 1.0)]).is_err());
        assert!(Weight::from_segments(&[(0.0, 0.5, 1.0), (0.5, 1.0, -1.0)]).is_err());
    }

    #[test]
    fn weight_order_and_json() {
        let lo = Weight::uniform(1.0);
        let hi = Weight::from_segments(&[(0.0, 0.5, 2.0), (0.5, 1.0, 1.0)]).unwrap();
        assert!(lo.le(&hi));
        assert!(!hi.le(&lo));
        let text = serde_json::to_string(&hi).unwrap();
        assert_eq!(text, "[[0.0,0.5,2.0],[0.5,1.0,1.0]]");
        assert_eq!(serde_json::from_str::<Weight>(&text).unwrap(), hi);
    }

    #[test]
    fn descriptor_json() {
        let d: FormDescriptor = serde_json::from_str(r#"{"kind":"pl","p":2.5}"#).unwrap();
        assert_eq!(d.p(), 2.5);
        let d: FormDescriptor = serde_json::from_str(r#"{"kind":"sg","p":3,"level":2}"#).unwrap();
        assert!(matches!(d, FormDescriptor::Sg { level: 2, .. }));
        assert!(serde_json::from_str::<FormDescriptor>(r#"{"kind":"pl","p":2,"bogus":1}"#).is_err());
    }
}
