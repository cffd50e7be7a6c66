//! Homogenized cost, effective Lagrangian/Hamiltonian tables and the
//! effective Hopf-Lax solution.
//!
//! `m_bar(t, x, y) = t L_bar((y - x) / t)` with
//! `L_bar(q) = lim_k m(2^k, 0, 2^k q) / 2^k`, and `H_bar` is the conjugate of
//! `L_bar` on the tabulated grid.

mod grid;
mod hopf_lax;

pub use grid::{ConvexityCheck, TensorGrid};
pub use hopf_lax::{hopf_lax_effective, HopfLaxOptions, HopfLaxValue};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{compute_metric_with, Curve, CurveBuilder, MetricQuery, OptimizerOptions};
use crate::model::{GrowthBounds, Lagrangian};
use crate::{Error, Result};

pub const DEFAULT_LEVELS: usize = 5;
pub const DEFAULT_Q_POINTS: usize = 33;
pub const DEFAULT_Q_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogenizationOptions {
    /// Highest doubling level `J`; windows run up to length `2^J`.
    pub levels: usize,
    pub density: f64,
    pub multistarts: usize,
    pub seed: u64,
}

impl Default for HomogenizationOptions {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS,
            density: crate::action::DEFAULT_SEGMENTS_PER_UNIT,
            multistarts: crate::action::DEFAULT_MULTISTARTS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedMetric {
    pub q: Vec<f64>,
    /// Extrapolated limit `2 a_J - a_{J-1}`.
    pub value: f64,
    /// `a_j = m(2^j, 0, 2^j q) / 2^j` for `j = 0..=J`.
    pub level_values: Vec<f64>,
    /// `a_j - a_{j-1}` for `j = 1..=J`.
    pub residuals: Vec<f64>,
    pub first_order_residual: f64,
}

impl HomogenizedMetric {
    pub fn last_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// `m_bar(1, 0, q)` by doubling the window and extrapolating the last two levels.
///
/// Each level is warm-started from the previous minimizer followed by its
/// translate, which already joins the doubled endpoints.
pub fn homogenized_metric(l: &dyn Lagrangian, q: &[f64], opts: &HomogenizationOptions) -> Result<HomogenizedMetric> {
    if opts.levels < 2 {
        return Err(Error::Precondition(format!("homogenized metric needs levels >= 2, got {}", opts.levels)));
    }
    if q.len() != l.dim() || q.iter().any(|z| !z.is_finite()) {
        return Err(Error::Precondition("velocity has the wrong dimension or is not finite".into()));
    }
    let origin = vec![0.0; q.len()];
    let mut level_values = Vec::with_capacity(opts.levels + 1);
    let mut prev: Option<Curve> = None;
    let mut first_order_residual: f64 = 0.0;
    for j in 0..=opts.levels {
        let t = (1u64 << j) as f64;
        let y: Vec<f64> = q.iter().map(|z| z * t).collect();
        let query = MetricQuery::new(0.0, t, &origin, &y)
            .with_density(opts.density)
            .with_multistarts(opts.multistarts)
            .with_seed(opts.seed);
        let warm = match &prev {
            Some(c) => vec![doubled(c)?],
            None => Vec::new(),
        };
        let r = compute_metric_with(l, &query, &OptimizerOptions::default(), &warm)?;
        level_values.push(r.value / t);
        first_order_residual = first_order_residual.max(r.first_order_residual);
        prev = Some(r.minimizer);
    }
    let residuals: Vec<f64> = level_values.windows(2).map(|w| w[1] - w[0]).collect();
    let last = level_values[opts.levels];
    let before = level_values[opts.levels - 1];
    Ok(HomogenizedMetric {
        q: q.to_vec(),
        value: 2.0 * last - before,
        level_values,
        residuals,
        first_order_residual,
    })
}

fn doubled(c: &Curve) -> Result<Curve> {
    let mut b = CurveBuilder::new(c.dim());
    b.push(c)?;
    b.push(&c.shifted(c.duration(), c.end()))?;
    Ok(b.finish()?.0)
}

/// Tabulated `L_bar` on a tensor grid of velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveLagrangianTable {
    pub grid: TensorGrid,
    pub values: Vec<f64>,
    pub levels: usize,
    /// `|a_J - a_{J-1}|` per grid point.
    pub residuals: Vec<f64>,
}

impl EffectiveLagrangianTable {
    pub fn new(grid: TensorGrid, values: Vec<f64>, levels: usize, residuals: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() || residuals.len() != grid.len() {
            return Err(Error::Precondition(format!(
                "table has {} values and {} residuals for {} grid points",
                values.len(),
                residuals.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("effective Lagrangian table contains non-finite values".into()));
        }
        Ok(Self {
            grid,
            values,
            levels,
            residuals,
        })
    }

    /// Tabulates a closed-form `L_bar`, mainly for oracles and tests.
    pub fn from_fn(grid: TensorGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        let residuals = vec![0.0; grid.len()];
        Self::new(grid, values, 0, residuals)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn eval(&self, q: &[f64]) -> Option<f64> {
        self.grid.interpolate(&self.values, q)
    }

    pub fn convexity(&self) -> ConvexityCheck {
        self.grid.convexity(&self.values)
    }

    /// Largest violation of `alpha |q|^m - K <= L_bar(q) <= beta |q|^m + K`.
    pub fn sandwich_violation(&self, g: &GrowthBounds) -> f64 {
        (0..self.grid.len())
            .map(|i| {
                let (lo, hi) = g.lagrangian_envelope(crate::model::norm(&self.grid.point(i)));
                let v = self.values[i];
                (lo - v).max(v - hi).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    /// Columns `q0, .., q{n-1}, value, residual, levels`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header: Vec<String> = (0..self.dim()).map(|d| format!("q{d}")).collect();
        header.extend(["value", "residual", "levels"].map(String::from));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for i in 0..self.grid.len() {
            let mut row: Vec<String> = self.grid.point(i).iter().map(|z| z.to_string()).collect();
            row.push(self.values[i].to_string());
            row.push(self.residuals[i].to_string());
            row.push(self.levels.to_string());
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reloads a table written by [`Self::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let dim = r.headers().map_err(|e| csv_error(path, e))?.iter().filter(|h| h.starts_with('q')).count();
        if dim == 0 {
            return Err(parse_error(path, "no q columns"));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_error(path, &e.to_string()))?;
            if nums.len() != dim + 3 {
                return Err(parse_error(path, "ragged row"));
            }
            rows.push(nums);
        }
        let points = (rows.len() as f64).powf(1.0 / dim as f64).round() as usize;
        if points < 3 || points.pow(dim as u32) != rows.len() {
            return Err(parse_error(path, "rows do not form a square tensor grid"));
        }
        let grid = TensorGrid::new(dim, rows[0][0], rows[rows.len() - 1][0], points)?;
        for (i, row) in rows.iter().enumerate() {
            let expect = grid.point(i);
            if expect.iter().zip(row).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs())) {
                return Err(parse_error(path, "grid nodes are not uniform and row-major"));
            }
        }
        let values = rows.iter().map(|r| r[dim]).collect();
        let residuals = rows.iter().map(|r| r[dim + 1]).collect();
        let levels = rows[0][dim + 2] as usize;
        Self::new(grid, values, levels, residuals)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    parse_error(path, &e.to_string())
}

fn parse_error(path: &Path, message: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Tabulates [`homogenized_metric`] over `grid`; values are recorded as
/// computed, convexity is checked separately and never enforced.
pub fn effective_lagrangian(
    l: &dyn Lagrangian,
    grid: &TensorGrid,
    opts: &HomogenizationOptions,
) -> Result<EffectiveLagrangianTable> {
    if grid.dim != l.dim() {
        return Err(Error::Precondition(format!(
            "grid dimension {} does not match the model dimension {}",
            grid.dim,
            l.dim()
        )));
    }
    let entries: Vec<HomogenizedMetric> = (0..grid.len())
        .into_par_iter()
        .map(|i| homogenized_metric(l, &grid.point(i), opts))
        .collect::<Result<_>>()?;
    let values = entries.iter().map(|e| e.value).collect();
    let residuals = entries.iter().map(|e| e.last_residual().abs()).collect();
    EffectiveLagrangianTable::new(grid.clone(), values, opts.levels, residuals)
}

/// Tabulated `H_bar(p) = max_q (p.q - L_bar(q))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveHamiltonianTable {
    pub grid: TensorGrid,
    pub values: Vec<f64>,
    /// Grid maximizer per `p`.
    pub argmax: Vec<Vec<f64>>,
    pub source_grid: TensorGrid,
    pub source_levels: usize,
}

impl EffectiveHamiltonianTable {
    pub fn eval(&self, p: &[f64]) -> Option<f64> {
        self.grid.interpolate(&self.values, p)
    }

    pub fn convexity(&self) -> ConvexityCheck {
        self.grid.convexity(&self.values)
    }

    /// `min over grid pairs of H_bar(p) + L_bar(q) - p.q`; nonnegative when
    /// Fenchel-Young holds.
    pub fn fenchel_young_gap(&self, tab: &EffectiveLagrangianTable) -> f64 {
        let qs: Vec<Vec<f64>> = (0..tab.grid.len()).map(|i| tab.grid.point(i)).collect();
        (0..self.grid.len())
            .map(|i| {
                let p = self.grid.point(i);
                qs.iter()
                    .zip(&tab.values)
                    .map(|(q, lq)| self.values[i] + lq - dot(&p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Columns `p0, .., p{n-1}, value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header: Vec<String> = (0..self.grid.dim).map(|d| format!("p{d}")).collect();
        header.push("value".into());
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for i in 0..self.grid.len() {
            let mut row: Vec<String> = self.grid.point(i).iter().map(|z| z.to_string()).collect();
            row.push(self.values[i].to_string());
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discrete conjugate of `tab` on `p_grid`: the maximum of `p.q - L_bar(q)`
/// over the q-grid nodes. Convex in `p` by construction.
///
/// A grid maximizer on the boundary of the q-grid means the true supremum may
/// lie outside it, which is reported as [`Error::GridTooNarrow`].
pub fn effective_hamiltonian(tab: &EffectiveLagrangianTable, p_grid: &TensorGrid) -> Result<EffectiveHamiltonianTable> {
    if p_grid.dim != tab.dim() {
        return Err(Error::Precondition("p-grid and q-grid dimensions differ".into()));
    }
    let q = &tab.grid;
    let qs: Vec<Vec<f64>> = (0..q.len()).map(|i| q.point(i)).collect();
    let mut values = Vec::with_capacity(p_grid.len());
    let mut argmax = Vec::with_capacity(p_grid.len());
    for i in 0..p_grid.len() {
        let p = p_grid.point(i);
        let objective = |k: usize| dot(&p, &qs[k]) - tab.values[k];
        let (best, f0) = (0..q.len())
            .map(|k| (k, objective(k)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let idx = q.multi_index(best);
        if idx.iter().any(|&j| j == 0 || j + 1 == q.points) {
            return Err(Error::GridTooNarrow { p });
        }
        values.push(f0);
        argmax.push(qs[best].clone());
    }
    Ok(EffectiveHamiltonianTable {
        grid: p_grid.clone(),
        values,
        argmax,
        source_grid: q.clone(),
        source_levels: tab.levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, HamiltonianModel, LagrangianModel};

    fn sq(amp: f64) -> LagrangianModel {
        LagrangianModel::new(HamiltonianModel::separable_quadratic(amp))
    }

    fn fast() -> HomogenizationOptions {
        HomogenizationOptions {
            levels: 3,
            ..Default::default()
        }
    }

    #[test]
    fn free_particle_is_exact_at_every_level() {
        let r = homogenized_metric(&sq(0.0), &[1.0], &HomogenizationOptions::default()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9);
        assert_eq!(r.level_values.len(), 6);
        assert!(r.residuals.iter().all(|d| d.abs() < 1e-9));
    }

    #[test]
    fn resting_curve_with_constant_floor() {
        // L >= 1 with equality at v = 0
        let h = HamiltonianModel::with_params(
            Family::PowerCoercive,
            &[("amp", 0.5), ("m0", 2.0), ("offset", -1.0)],
            1,
        )
        .unwrap();
        let r = homogenized_metric(&LagrangianModel::new(h), &[0.0], &fast()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_levels() {
        let o = HomogenizationOptions {
            levels: 1,
            ..Default::default()
        };
        assert!(matches!(homogenized_metric(&sq(0.0), &[1.0], &o), Err(Error::Precondition(_))));
    }

    #[test]
    fn level_differences_shrink() {
        let r = homogenized_metric(&sq(1.0), &[1.0], &HomogenizationOptions::default()).unwrap();
        let d: Vec<f64> = r.residuals.iter().map(|x| x.abs()).collect();
        assert!(d[4] < 0.5 * d[0].max(1e-3), "{d:?}");
        assert!(d[4] < 0.05);
    }

    #[test]
    fn free_particle_table_and_conjugate() {
        let grid = TensorGrid::new(1, -2.0, 2.0, 33).unwrap();
        let tab = effective_lagrangian(&sq(0.0), &grid, &fast()).unwrap();
        for i in 0..grid.len() {
            let q = grid.point(i)[0];
            assert!((tab.values[i] - 0.5 * q * q).abs() < 1e-4);
        }
        let p = TensorGrid::new(1, -1.5, 1.5, 13).unwrap();
        let h = effective_hamiltonian(&tab, &p).unwrap();
        for i in 0..p.len() {
            let pp = p.point(i)[0];
            assert!((h.values[i] - 0.5 * pp * pp).abs() < 1e-6, "{pp}");
        }
        assert!(h.fenchel_young_gap(&tab) >= -1e-12);
    }

    #[test]
    fn constant_reward_shifts_the_conjugate() {
        let grid = TensorGrid::new(1, -3.0, 3.0, 61).unwrap();
        let tab = EffectiveLagrangianTable::from_fn(grid, |q| 0.5 * q[0] * q[0] - 1.0).unwrap();
        let p = TensorGrid::new(1, -2.0, 2.0, 9).unwrap();
        let h = effective_hamiltonian(&tab, &p).unwrap();
        for i in 0..p.len() {
            let pp = p.point(i)[0];
            assert!((h.values[i] - (0.5 * pp * pp + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn narrow_grid_is_reported() {
        let grid = TensorGrid::new(1, -1.0, 1.0, 21).unwrap();
        let tab = EffectiveLagrangianTable::from_fn(grid, |q| 0.5 * q[0] * q[0]).unwrap();
        let p = TensorGrid::new(1, -2.0, 2.0, 5).unwrap();
        assert!(matches!(effective_hamiltonian(&tab, &p), Err(Error::GridTooNarrow { .. })));
    }

    #[test]
    fn two_dimensional_conjugate() {
        let grid = TensorGrid::new(2, -2.0, 2.0, 41).unwrap();
        let tab = EffectiveLagrangianTable::from_fn(grid, |q| 0.5 * (q[0] * q[0] + q[1] * q[1])).unwrap();
        let p = TensorGrid::new(2, -1.0, 1.0, 5).unwrap();
        let h = effective_hamiltonian(&tab, &p).unwrap();
        for i in 0..p.len() {
            let pp = p.point(i);
            assert!((h.values[i] - 0.5 * (pp[0] * pp[0] + pp[1] * pp[1])).abs() < 1e-9);
        }
        assert!(h.convexity().passes(1e-12));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lbar.csv");
        let grid = TensorGrid::new(2, -1.0, 1.0, 3).unwrap();
        let tab = EffectiveLagrangianTable::from_fn(grid, |q| q[0] + 2.0 * q[1] * q[1]).unwrap();
        tab.write_csv(&path).unwrap();
        let back = EffectiveLagrangianTable::read_csv(&path).unwrap();
        assert_eq!(back, tab);
    }

    #[test]
    fn sandwich_and_straight_line_bound() {
        let l = sq(1.0);
        let grid = TensorGrid::new(1, -2.0, 2.0, 9).unwrap();
        let tab = effective_lagrangian(&l, &grid, &fast()).unwrap();
        assert!(tab.sandwich_violation(&l.bounds()) < 1e-9);
        for i in 0..grid.len() {
            let q = grid.point(i)[0];
            assert!(tab.values[i] <= 0.5 * q * q + 1.0 + 1e-9);
        }
        assert!(tab.convexity().passes(1e-3), "{:?}", tab.convexity());
    }
}
