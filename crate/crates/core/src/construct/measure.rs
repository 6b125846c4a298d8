use serde::Serialize;

use super::{f_values, scale_of, witness_slope, ConstructError, FoldSchedule};
use crate::forms::{pow_abs, PlIntervalForm};
use crate::pl::{merge_knots, IntervalSet, PlFunction};

/// A measure on `[0, 1]` with piecewise-constant density.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyMeasure {
    pub partition: Vec<f64>,
    pub density: Vec<f64>,
    pub total_mass: f64,
}

impl EnergyMeasure {
    pub fn new(partition: Vec<f64>, density: Vec<f64>) -> Result<Self, ConstructError> {
        if partition.len() != density.len() + 1 || partition.len() < 2 {
            return Err(ConstructError::Argument("partition needs one more point than density".into()));
        }
        if partition[0] != 0.0 || partition[partition.len() - 1] != 1.0 {
            return Err(ConstructError::Argument("partition must span [0, 1]".into()));
        }
        if partition.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ConstructError::Argument("partition must be strictly increasing".into()));
        }
        if density.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(ConstructError::Argument("density must be finite and nonnegative".into()));
        }
        let total_mass = partition
            .windows(2)
            .zip(&density)
            .map(|(w, d)| d * (w[1] - w[0]))
            .sum();
        Ok(Self {
            partition,
            density,
            total_mass,
        })
    }

    pub fn zero() -> Self {
        Self {
            partition: vec![0.0, 1.0],
            density: vec![0.0],
            total_mass: 0.0,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.partition
            .windows(2)
            .zip(&self.density)
            .map(|(w, &d)| (w[0], w[1], d))
    }

    /// `μ(A)`; endpoints carry no mass.
    pub fn measure(&self, set: &IntervalSet) -> f64 {
        set.components()
            .iter()
            .map(|iv| self.mass_between(iv.lo, iv.hi))
            .sum()
    }

    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.cells()
            .map(|(a, b, d)| d * (b.min(hi) - a.max(lo)).max(0.0))
            .sum()
    }

    /// Average density over each cell of `partition`.
    pub fn averages_on(&self, partition: &[f64]) -> Vec<f64> {
        partition
            .windows(2)
            .map(|w| self.mass_between(w[0], w[1]) / (w[1] - w[0]))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell_lo,cell_hi,density\n");
        for (a, b, d) in self.cells() {
            out.push_str(&format!("{a},{b},{d:e}\n"));
        }
        out
    }
}

/// `μ_⟨f⟩` on the uniform grid of `resolution` cells, from
/// `μ([0, k/res]) = F_f^{Lx}(Lk/res)` with `L` from [`witness_slope`].
///
/// Differences above `−rel_tol·E(f)` are clamped to zero; anything below is
/// an error, as is a total mass off `E(f)` by more than `rel_tol·E(f)`.
pub fn energy_measure(
    form: &PlIntervalForm,
    f: &PlFunction,
    resolution: usize,
    sched: &FoldSchedule,
) -> Result<EnergyMeasure, ConstructError> {
    if resolution == 0 {
        return Err(ConstructError::Argument("resolution must be at least 1".into()));
    }
    sched.validate()?;
    let energy = form.energy(f);
    let partition: Vec<f64> = (0..=resolution).map(|k| k as f64 / resolution as f64).collect();
    if energy == 0.0 {
        let density = vec![0.0; resolution];
        return EnergyMeasure::new(partition, density);
    }
    let l = witness_slope(form, f);
    let levels: Vec<f64> = partition.iter().map(|x| x * l).collect();
    let cdf = f_values(form, f, &PlFunction::identity().scale(l), &levels, sched)?;
    let slack = sched.rel_tol * scale_of(energy);
    let mut density = Vec::with_capacity(resolution);
    let mut prev = 0.0;
    for (k, w) in partition.windows(2).enumerate() {
        let mass = cdf[k + 1] - prev;
        prev = cdf[k + 1];
        if mass < -slack {
            return Err(ConstructError::NegativeMass {
                lo: w[0],
                hi: w[1],
                value: mass,
                slack,
            });
        }
        density.push(mass.max(0.0) / (w[1] - w[0]));
    }
    let m = EnergyMeasure::new(partition, density)?;
    if (m.total_mass - energy).abs() > slack {
        return Err(ConstructError::TotalMass {
            mass: m.total_mass,
            energy,
        });
    }
    Ok(m)
}

/// The closed-form density `w |f'|^p` on the common refinement of `f` and `w`.
pub fn reference_measure(form: &PlIntervalForm, f: &PlFunction) -> EnergyMeasure {
    let partition = merge_knots(&[f.breakpoints(), form.weight().cuts()]);
    let density = partition
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            form.weight().at(mid) * pow_abs(f.slope_at(mid), form.p())
        })
        .collect();
    EnergyMeasure::new(partition, density).expect("refinement of [0, 1] with finite density")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityGap {
    /// `sup_k |d_k − r_k|` over the cells of the constructed measure, with `r`
    /// the reference averaged over each cell.
    pub sup_abs: f64,
    /// `sup_abs / sup_k r_k`, or `sup_abs` when the reference vanishes.
    pub sup_rel: f64,
    pub worst_cell: usize,
}

pub fn density_gap(constructed: &EnergyMeasure, reference: &EnergyMeasure) -> DensityGap {
    let r = reference.averages_on(&constructed.partition);
    let (worst_cell, sup_abs) = constructed
        .density
        .iter()
        .zip(&r)
        .map(|(d, r)| (d - r).abs())
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
    let scale = r.iter().fold(0.0f64, |m, v| m.max(*v));
    DensityGap {
        sup_abs,
        sup_rel: if scale > 0.0 { sup_abs / scale } else { sup_abs },
        worst_cell,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pl::Interval;

    fn sched() -> FoldSchedule {
        FoldSchedule::new(4, 40, 1e-9, 2).unwrap()
    }

    #[test]
    fn reference_examples() {
        let form = PlIntervalForm::new(2.0).unwrap();
        let m = reference_measure(&form, &PlFunction::linear(2.0, -1.0));
        assert!(m.density.iter().all(|&d| d == 4.0));
        assert_eq!(m.total_mass, 4.0);
        let z = reference_measure(&form, &PlFunction::constant(3.0));
        assert_eq!(z.total_mass, 0.0);
    }

    #[test]
    fn evaluation_is_additive() {
        let m = EnergyMeasure::new(vec![0.0, 0.5, 1.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(m.total_mass, 2.0);
        let a = IntervalSet::new(vec![Interval::closed(0.25, 0.75)]);
        assert_eq!(m.measure(&a), 1.0);
        let pt = IntervalSet::closed(0.3, 0.3);
        assert_eq!(m.measure(&pt), 0.0);
        assert!(EnergyMeasure::new(vec![0.0, 1.0], vec![-1.0]).is_err());
        assert!(m.to_csv().starts_with("cell_lo,cell_hi,density\n"));
    }

    #[test]
    fn constructed_matches_reference() {
        for p in [1.5, 3.0] {
            let form = PlIntervalForm::new(p).unwrap();
            let tent = PlFunction::tent(0.5, 0.5).unwrap();
            let m = energy_measure(&form, &tent, 16, &sched()).unwrap();
            let gap = density_gap(&m, &reference_measure(&form, &tent));
            assert!(gap.sup_rel < 1e-5, "p = {p}: {gap:?}");
            assert!((m.total_mass - 1.0).abs() < 1e-8);
        }
        let form = PlIntervalForm::new(2.0).unwrap();
        let z = energy_measure(&form, &PlFunction::constant(1.0), 8, &sched()).unwrap();
        assert_eq!(z.total_mass, 0.0);
        assert!(energy_measure(&form, &PlFunction::identity(), 0, &sched()).is_err());
    }
}
