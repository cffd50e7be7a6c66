use serde::{Deserialize, Serialize};

use super::EffectiveLagrangianTable;
use crate::model::golden_min;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfLaxOptions {
    /// Per-axis bound `|y_i - x_i| <= radius t`; `None` searches the whole table.
    pub radius: Option<f64>,
    /// Scan points per axis; `None` uses 401 in 1D and 41 otherwise.
    pub grid: Option<usize>,
    pub tol: f64,
}

impl Default for HopfLaxOptions {
    fn default() -> Self {
        Self {
            radius: None,
            grid: None,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfLaxValue {
    pub value: f64,
    pub argmin: Vec<f64>,
    /// The scan minimum sat on the edge of the search box.
    pub radius_warning: bool,
}

/// `u(x, t) = inf_y g(y) + t L_bar((x - y) / t)`, scanning a y-grid and then
/// refining the best node by golden section along each axis.
pub fn hopf_lax_effective(
    tab: &EffectiveLagrangianTable,
    g: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    t: f64,
    opts: &HopfLaxOptions,
) -> Result<HopfLaxValue> {
    let n = tab.dim();
    if !(t > 0.0) || x.len() != n {
        return Err(Error::Precondition(format!("Hopf-Lax needs t > 0 and x in dimension {n}")));
    }
    let points = opts.grid.unwrap_or(if n == 1 { 401 } else { 41 });
    if points < 3 {
        return Err(Error::Precondition("Hopf-Lax scan needs at least 3 points per axis".into()));
    }
    let (qlo, qhi) = match opts.radius {
        Some(r) => (tab.grid.lo.max(-r), tab.grid.hi.min(r)),
        None => (tab.grid.lo, tab.grid.hi),
    };
    if !(qhi > qlo) {
        return Err(Error::Precondition("search radius does not overlap the table".into()));
    }
    let box_lo: Vec<f64> = x.iter().map(|xi| xi - t * qhi).collect();
    let box_hi: Vec<f64> = x.iter().map(|xi| xi - t * qlo).collect();
    let step = t * (qhi - qlo) / (points - 1) as f64;

    let objective = |y: &[f64]| -> f64 {
        let q: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - b) / t).collect();
        match tab.eval(&q) {
            Some(l) => g(y) + t * l,
            None => f64::INFINITY,
        }
    };

    let total = points.pow(n as u32);
    let mut best_idx = vec![0usize; n];
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; n];
    let mut y = vec![0.0; n];
    for flat in 0..total {
        let mut rest = flat;
        for d in (0..n).rev() {
            idx[d] = rest % points;
            rest /= points;
            y[d] = if idx[d] + 1 == points { box_hi[d] } else { box_lo[d] + idx[d] as f64 * step };
        }
        let v = objective(&y);
        if v < best {
            best = v;
            best_idx.clone_from(&idx);
        }
    }
    if !best.is_finite() {
        return Err(Error::Internal("Hopf-Lax objective is not finite anywhere on the scan".into()));
    }
    let radius_warning = best_idx.iter().any(|&i| i == 0 || i + 1 == points);
    let mut argmin: Vec<f64> = (0..n)
        .map(|d| if best_idx[d] + 1 == points { box_hi[d] } else { box_lo[d] + best_idx[d] as f64 * step })
        .collect();
    let cycles = if n == 1 { 1 } else { 4 };
    for _ in 0..cycles {
        for d in 0..n {
            let lo = (argmin[d] - step).max(box_lo[d]);
            let hi = (argmin[d] + step).min(box_hi[d]);
            let mut probe = argmin.clone();
            let (z, v) = golden_min(
                &mut |s| {
                    probe[d] = s;
                    objective(&probe)
                },
                lo,
                hi,
                opts.tol * (1.0 + argmin[d].abs()),
            );
            if v < best {
                best = v;
                argmin[d] = z;
            }
        }
    }
    Ok(HopfLaxValue {
        value: best,
        argmin,
        radius_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::TensorGrid;

    fn quadratic(lo: f64, hi: f64, points: usize) -> EffectiveLagrangianTable {
        let grid = TensorGrid::new(1, lo, hi, points).unwrap();
        EffectiveLagrangianTable::from_fn(grid, |q| 0.5 * q[0] * q[0]).unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let tab = quadratic(-2.0, 2.0, 33);
        for x in [0.0, 0.3, -1.2] {
            let u = hopf_lax_effective(&tab, &|_| 0.0, &[x], 0.7, &HopfLaxOptions::default()).unwrap();
            assert!(u.value.abs() < 1e-12);
            assert!(!u.radius_warning);
        }
    }

    #[test]
    fn linear_data_is_transported() {
        // g(y) = y: the minimizer sits at q = 1, well inside the table
        let tab = quadratic(-3.0, 3.0, 121);
        for (x, t) in [(0.2, 0.5), (1.0, 1.0), (-0.4, 2.0)] {
            let u = hopf_lax_effective(&tab, &|y| y[0], &[x], t, &HopfLaxOptions::default()).unwrap();
            assert!((u.value - (x - t / 2.0)).abs() < 1e-9, "{x} {t}");
            assert!((u.argmin[0] - (x - t)).abs() < 1e-6);
        }
    }

    #[test]
    fn steep_data_raises_the_warning() {
        let tab = quadratic(-1.0, 1.0, 41);
        let u = hopf_lax_effective(&tab, &|y| 5.0 * y[0], &[0.0], 1.0, &HopfLaxOptions::default()).unwrap();
        assert!(u.radius_warning);
    }

    #[test]
    fn sine_data_matches_dense_scan() {
        let tab = quadratic(-2.0, 2.0, 161);
        let g = |y: &[f64]| (std::f64::consts::TAU * y[0]).sin();
        for x in [0.0, 0.25, 0.6] {
            let u = hopf_lax_effective(&tab, &g, &[x], 0.1, &HopfLaxOptions::default()).unwrap();
            let oracle = (0..=400_000)
                .map(|i| x - 0.2 + 0.4 * i as f64 / 400_000.0)
                .map(|y| g(&[y]) + (x - y) * (x - y) / 0.2)
                .fold(f64::INFINITY, f64::min);
            // linear interpolation of the table costs at most t h^2 / 8
            assert!((u.value - oracle).abs() < 1e-5, "{x}: {} vs {oracle}", u.value);
        }
    }

    #[test]
    fn computed_table_matches_brute_force() {
        use crate::effective::{effective_lagrangian, HomogenizationOptions};
        use crate::model::{HamiltonianModel, LagrangianModel};
        let l = LagrangianModel::new(HamiltonianModel::separable_quadratic(1.0));
        let grid = TensorGrid::new(1, -2.0, 2.0, 17).unwrap();
        let opts = HomogenizationOptions {
            levels: 3,
            ..Default::default()
        };
        let tab = effective_lagrangian(&l, &grid, &opts).unwrap();
        let g = |y: &[f64]| (std::f64::consts::TAU * y[0]).sin();
        for x in [0.0, 0.4] {
            let u = hopf_lax_effective(&tab, &g, &[x], 1.0, &HopfLaxOptions::default()).unwrap();
            let oracle = (0..=200_000)
                .map(|i| x - 2.0 + 4.0 * i as f64 / 200_000.0)
                .map(|y| g(&[y]) + tab.eval(&[x - y]).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!((u.value - oracle).abs() < 1e-3);
            assert!(u.value <= oracle + 1e-9);
        }
    }

    #[test]
    fn two_dimensional_linear_data() {
        let grid = TensorGrid::new(2, -2.0, 2.0, 41).unwrap();
        let tab = EffectiveLagrangianTable::from_fn(grid, |q| 0.5 * (q[0] * q[0] + q[1] * q[1])).unwrap();
        let u = hopf_lax_effective(&tab, &|y| 0.5 * y[0] - y[1], &[0.1, 0.2], 1.0, &HopfLaxOptions::default())
            .unwrap();
        // q = (0.5, -1): value = x.a - |a|^2 t / 2
        let exact = 0.05 - 0.2 - 0.5 * 1.25;
        assert!((u.value - exact).abs() < 1e-8, "{}", u.value);
    }
}
