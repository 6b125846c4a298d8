//! Seeded generators of random test functions.
//!
//! Every trial gets its own ChaCha stream derived from `(seed, trial)`, so
//! batch checks can run trials in any order or in parallel and still
//! reproduce bit for bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pl::{PlFunction, PlMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlSampler {
    pub seed: u64,
    /// Total number of breakpoints, endpoints included.
    pub max_breakpoints: usize,
    /// Values are drawn uniformly from `[-amplitude, amplitude]`.
    pub amplitude: f64,
    /// Minimum spacing between breakpoints.
    pub min_gap: f64,
    /// When set, every piece has `|slope| ≥ min_abs_slope`.
    pub min_abs_slope: Option<f64>,
}

impl Default for PlSampler {
    fn default() -> Self {
        Self {
            seed: 0,
            max_breakpoints: 12,
            amplitude: 2.0,
            min_gap: 0.02,
            min_abs_slope: None,
        }
    }
}

impl PlSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn with_max_breakpoints(mut self, n: usize) -> Self {
        self.max_breakpoints = n.max(2);
        self
    }

    pub fn with_min_abs_slope(mut self, s: f64) -> Self {
        self.min_abs_slope = Some(s);
        self
    }

    /// Independent generator for one trial.
    pub fn rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        rng
    }

    /// Random sorted breakpoints `0 = x_0 < … < x_m = 1` respecting `min_gap`.
    pub fn breakpoints(&self, rng: &mut impl Rng) -> Vec<f64> {
        let max_interior = self.max_breakpoints.saturating_sub(2);
        loop {
            let k = rng.gen_range(0..=max_interior);
            let mut xs: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
            xs.push(0.0);
            xs.push(1.0);
            xs.sort_by(f64::total_cmp);
            if xs.windows(2).all(|w| w[1] - w[0] >= self.min_gap) {
                return xs;
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> PlFunction {
        loop {
            let xs = self.breakpoints(rng);
            let ys: Vec<f64> = xs
                .iter()
                .map(|_| rng.gen_range(-self.amplitude..=self.amplitude))
                .collect();
            if let Some(min) = self.min_abs_slope {
                let steep = xs
                    .windows(2)
                    .zip(ys.windows(2))
                    .all(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs() >= min);
                if !steep {
                    continue;
                }
            }
            if let Ok(f) = PlFunction::new(xs, ys) {
                return f;
            }
        }
    }

    /// Random function supported inside `[lo, hi]` (zero outside).
    pub fn sample_supported(&self, rng: &mut impl Rng, lo: f64, hi: f64) -> PlFunction {
        let inner = self.sample(rng);
        let width = hi - lo;
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        if lo > 0.0 {
            xs.push(lo);
            ys.push(0.0);
        }
        // Interior breakpoints rescaled into (lo, hi); the ends pinned to zero.
        let bx = inner.breakpoints();
        let by = inner.values();
        for i in 1..bx.len() - 1 {
            xs.push(lo + width * bx[i]);
            ys.push(by[i]);
        }
        if hi < 1.0 {
            xs.push(hi);
            ys.push(0.0);
        }
        xs.push(1.0);
        ys.push(0.0);
        PlFunction::new(xs, ys).expect("sorted breakpoints")
    }

    /// Random normal contraction: piecewise affine, 1-Lipschitz, `φ(0) = 0`,
    /// defined on `[-radius, radius]`.
    pub fn contraction(&self, rng: &mut impl Rng, radius: f64) -> PlMap {
        let k = rng.gen_range(1..=5usize);
        let mut ts: Vec<f64> = (0..k).map(|_| rng.gen_range(-radius..radius)).collect();
        ts.push(0.0);
        ts.push(-radius);
        ts.push(radius);
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let zero = ts.iter().position(|&t| t == 0.0).expect("zero knot");
        let mut vs = vec![0.0; ts.len()];
        for i in zero + 1..ts.len() {
            let s: f64 = rng.gen_range(-1.0..=1.0);
            vs[i] = vs[i - 1] + s * (ts[i] - ts[i - 1]);
        }
        for i in (0..zero).rev() {
            let s: f64 = rng.gen_range(-1.0..=1.0);
            vs[i] = vs[i + 1] - s * (ts[i + 1] - ts[i]);
        }
        PlMap::new(ts, vs).expect("increasing knots")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = PlSampler::new(7);
        let a = s.sample(&mut s.rng(3));
        let b = s.sample(&mut s.rng(3));
        let c = s.sample(&mut s.rng(4));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn samples_respect_limits() {
        let s = PlSampler::new(1).with_max_breakpoints(10).with_min_abs_slope(0.05);
        for t in 0..50 {
            let f = s.sample(&mut s.rng(t));
            assert!(f.breakpoints().len() <= 10);
            assert!(f.sup_norm() <= 2.0);
            assert!(f.slopes().all(|m| m.abs() >= 0.05 - 1e-12));
        }
    }

    #[test]
    fn supported_samples_vanish_outside() {
        let s = PlSampler::new(2);
        let mut rng = s.rng(0);
        let f = s.sample_supported(&mut rng, 0.3, 0.6);
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            if !(0.3..=0.6).contains(&x) {
                assert_eq!(f.eval(x), 0.0, "x = {x}");
            }
        }
    }

    #[test]
    fn contractions_are_normal() {
        let s = PlSampler::new(5);
        let mut rng = s.rng(0);
        for _ in 0..20 {
            let phi = s.contraction(&mut rng, 3.0);
            assert!(phi.lipschitz() <= 1.0 + 1e-12);
            use crate::pl::ScalarMap;
            assert!(phi.apply(0.0).abs() < 1e-12);
        }
    }
}
