const NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Composite five-point Gauss–Legendre rule on `panels` equal panels of `[a, b]`.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        total += NODES
            .iter()
            .zip(WEIGHTS)
            .map(|(x, w)| w * f(mid + 0.5 * h * x))
            .sum::<f64>();
    }
    0.5 * h * total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_degree_nine() {
        let v = gauss_legendre(|x| x.powi(9) + 3.0 * x.powi(4), 0.0, 2.0, 1);
        assert!((v - (102.4 + 19.2)).abs() < 1e-11);
    }

    #[test]
    fn converges_on_smooth_integrands() {
        let v = gauss_legendre(f64::sin, 0.0, std::f64::consts::PI, 8);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
