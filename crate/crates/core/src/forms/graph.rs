use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_exponent, pow_abs, signed_pow, EnergyForm, FormDescriptor, FormError};
use crate::pl::{PlMap, ScalarMap};
use crate::sampler::PlSampler;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub conductance: f64,
}

/// `E(f) = Σ_{xy} c_xy |f(x) − f(y)|^p` on a connected weighted graph.
///
/// Not strongly local: two functions with disjoint supports still interact
/// through the edges joining the supports.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphForm {
    p: f64,
    n_vertices: usize,
    edges: Vec<Edge>,
    vertex_weights: Vec<f64>,
}

impl GraphForm {
    pub fn new(
        p: f64,
        n_vertices: usize,
        edges: Vec<Edge>,
        vertex_weights: Option<Vec<f64>>,
    ) -> Result<Self, FormError> {
        check_exponent(p)?;
        if n_vertices == 0 {
            return Err(FormError::Graph("no vertices".into()));
        }
        for e in &edges {
            if e.a >= n_vertices || e.b >= n_vertices || e.a == e.b {
                return Err(FormError::Graph(format!("bad edge ({}, {})", e.a, e.b)));
            }
            if !(e.conductance.is_finite() && e.conductance > 0.0) {
                return Err(FormError::Graph(format!(
                    "conductance {} on edge ({}, {}) must be positive",
                    e.conductance, e.a, e.b
                )));
            }
        }
        let vertex_weights = vertex_weights.unwrap_or_else(|| vec![1.0; n_vertices]);
        if vertex_weights.len() != n_vertices || vertex_weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(FormError::Graph("vertex weights must be nonnegative, one per vertex".into()));
        }
        let form = Self {
            p,
            n_vertices,
            edges,
            vertex_weights,
        };
        if !form.is_connected() {
            return Err(FormError::Graph("graph is not connected".into()));
        }
        Ok(form)
    }

    /// Path graph `0 − 1 − … − (n−1)` with unit conductances.
    pub fn path(p: f64, n: usize) -> Result<Self, FormError> {
        let edges = (1..n)
            .map(|i| Edge {
                a: i - 1,
                b: i,
                conductance: 1.0,
            })
            .collect();
        Self::new(p, n, edges, None)
    }

    fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        let mut seen = vec![false; self.n_vertices];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_weights(&self) -> &[f64] {
        &self.vertex_weights
    }

    fn check_len(&self, f: &[f64]) -> Result<(), FormError> {
        if f.len() != self.n_vertices {
            return Err(FormError::Dimension {
                expected: self.n_vertices,
                got: f.len(),
            });
        }
        Ok(())
    }

    pub fn energy(&self, f: &[f64]) -> Result<f64, FormError> {
        self.check_len(f)?;
        Ok(self
            .edges
            .iter()
            .map(|e| e.conductance * pow_abs(f[e.a] - f[e.b], self.p))
            .sum())
    }

    /// `Σ c_xy |Δu|^{p-2} Δu Δv`.
    pub fn energy_drv(&self, u: &[f64], v: &[f64]) -> Result<f64, FormError> {
        self.check_len(u)?;
        self.check_len(v)?;
        Ok(self
            .edges
            .iter()
            .map(|e| e.conductance * signed_pow(u[e.a] - u[e.b], self.p) * (v[e.a] - v[e.b]))
            .sum())
    }

    /// Energy carried by each edge; the graph analogue of an energy measure.
    pub fn edge_measure(&self, f: &[f64]) -> Result<Vec<f64>, FormError> {
        self.check_len(f)?;
        Ok(self
            .edges
            .iter()
            .map(|e| e.conductance * pow_abs(f[e.a] - f[e.b], self.p))
            .collect())
    }

    pub fn descriptor(&self) -> FormDescriptor {
        FormDescriptor::Graph {
            p: self.p,
            vertices: self.n_vertices,
            edges: self.edges.iter().map(|e| (e.a, e.b, e.conductance)).collect(),
            vertex_weights: Some(self.vertex_weights.clone()),
        }
    }
}

impl EnergyForm for GraphForm {
    type Func = Vec<f64>;

    fn exponent(&self) -> f64 {
        self.p
    }

    fn energy_of(&self, f: &Vec<f64>) -> Result<f64, FormError> {
        self.energy(f)
    }

    fn combine(&self, a: f64, f: &Vec<f64>, b: f64, g: &Vec<f64>) -> Result<Vec<f64>, FormError> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(f.iter().zip(g).map(|(x, y)| a * x + b * y).collect())
    }

    fn compose_with(&self, phi: &PlMap, f: &Vec<f64>) -> Result<Vec<f64>, FormError> {
        Ok(f.iter().map(|&t| phi.apply(t)).collect())
    }

    fn max_min_shifted(
        &self,
        f: &Vec<f64>,
        g: &Vec<f64>,
        a: f64,
    ) -> Result<(Vec<f64>, Vec<f64>), FormError> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok((
            f.iter().zip(g).map(|(x, y)| x.max(y - a)).collect(),
            f.iter().zip(g).map(|(x, y)| x.min(y + a)).collect(),
        ))
    }

    fn sup_norm(&self, f: &Vec<f64>) -> f64 {
        f.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn sample(&self, sampler: &PlSampler, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.n_vertices)
            .map(|_| rng.gen_range(-sampler.amplitude..=sampler.amplitude))
            .collect()
    }

    fn separated_pair(&self, _: &PlSampler, _: &mut ChaCha8Rng) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    fn descriptor(&self) -> FormDescriptor {
        GraphForm::descriptor(self)
    }
}
