//! Backward value iteration on a space-time lattice, used only to validate
//! the trajectory optimizer in one dimension.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricQuery;
use crate::model::Lagrangian;
use crate::{Error, Result};

/// Coarsest admissible lattice spacing in space and time.
pub const MAX_STEP: f64 = 1.0 / 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpGrid {
    pub dx: f64,
    pub dt: f64,
    /// Largest admissible speed; defaults to `|y - x| / T + 4`.
    pub vmax: Option<f64>,
    /// How far beyond the endpoints the lattice extends.
    pub margin: f64,
}

impl DpGrid {
    pub fn new(dx: f64, dt: f64) -> Self {
        Self {
            dx,
            dt,
            vmax: None,
            margin: 2.0,
        }
    }

    pub fn with_vmax(mut self, vmax: f64) -> Self {
        self.vmax = Some(vmax);
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }
}

/// Discrete minimal cost from `q.from` to `q.to` over the query window.
///
/// Lattice paths move between space nodes once per time step with a velocity
/// from the finite set `k dx / dt`, `|k dx / dt| <= vmax`; each step costs
/// `dt * L(midpoint, mid-time, velocity)`. The spacing is shrunk so that both
/// endpoints are nodes. `q.segments`, `q.multistarts` and `q.seed` are ignored.
pub fn dp_metric_oracle(l: &dyn Lagrangian, q: &MetricQuery, grid: &DpGrid) -> Result<f64> {
    if l.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "the dynamic-programming oracle is one-dimensional, got dimension {}",
            l.dim()
        )));
    }
    if !(q.t_end > q.t_start) || q.from.len() != 1 || q.to.len() != 1 {
        return Err(Error::Precondition("invalid metric query for the oracle".into()));
    }
    if !(grid.dx > 0.0 && grid.dx <= MAX_STEP && grid.dt > 0.0 && grid.dt <= MAX_STEP) {
        return Err(Error::Precondition(format!(
            "oracle grid must resolve the unit cell (dx = {}, dt = {})",
            grid.dx, grid.dt
        )));
    }
    let (x, y) = (q.from[0], q.to[0]);
    let window = q.window();
    let dist = (y - x).abs();
    let dx = if dist > 0.0 { dist / (dist / grid.dx).ceil() } else { grid.dx };
    let steps = (window / grid.dt).ceil() as usize;
    let dt = window / steps as f64;
    let vmax = grid.vmax.unwrap_or(dist / window + 4.0);
    let reach = (vmax * dt / dx).floor() as i64;
    if reach < 1 && dist > 0.0 {
        return Err(Error::Precondition("oracle velocity set contains only rest".into()));
    }

    // Nodes x + (j - offset) dx for j in 0..nodes.
    let sign = if y >= x { 1.0 } else { -1.0 };
    let pad = (grid.margin / dx).ceil() as i64;
    let span = (dist / dx).round() as i64;
    let nodes = (span + 2 * pad + 1) as usize;
    let pos = |j: i64| x + sign * (j - pad) as f64 * dx;
    let target = (pad + span) as usize;

    let mut value = vec![f64::INFINITY; nodes];
    value[target] = 0.0;
    let mut next = vec![f64::INFINITY; nodes];
    for n in (0..steps).rev() {
        let tm = q.t_start + (n as f64 + 0.5) * dt;
        next.par_iter_mut().enumerate().for_each(|(j, out)| {
            let j = j as i64;
            let mut best = f64::INFINITY;
            for k in -reach..=reach {
                let to = j + k;
                if to < 0 || to >= nodes as i64 {
                    continue;
                }
                let tail = value[to as usize];
                if !tail.is_finite() {
                    continue;
                }
                let v = sign * k as f64 * dx / dt;
                let xm = 0.5 * (pos(j) + pos(to));
                let cost = dt * l.value(&[xm], tm, &[v]) + tail;
                if cost < best {
                    best = cost;
                }
            }
            *out = best;
        });
        std::mem::swap(&mut value, &mut next);
    }
    let start = value[pad as usize];
    if !start.is_finite() {
        return Err(Error::Precondition(
            "target unreachable with the oracle's velocity bound".into(),
        ));
    }
    Ok(start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, HamiltonianModel, LagrangianModel};

    fn quadratic(amp: f64) -> LagrangianModel {
        LagrangianModel::new(HamiltonianModel::separable_quadratic(amp))
    }

    #[test]
    fn free_particle_value() {
        let q = MetricQuery::new(0.0, 1.0, &[0.0], &[1.0]);
        let v = dp_metric_oracle(&quadratic(0.0), &q, &DpGrid::new(1.0 / 64.0, 1.0 / 64.0)).unwrap();
        assert!((v - 0.5).abs() < 0.05, "{v}");
    }

    #[test]
    fn constant_running_cost_rests() {
        // H = p^2/2 - 1 conjugates to v^2/2 + 1
        let h = HamiltonianModel::with_params(Family::SeparableQuadratic, &[("A", 0.0), ("offset", -1.0)], 1).unwrap();
        let q = MetricQuery::new(0.0, 1.0, &[0.0], &[0.0]);
        let v = dp_metric_oracle(&LagrangianModel::new(h), &q, &DpGrid::new(1.0 / 64.0, 1.0 / 64.0)).unwrap();
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn refinement_is_monotone() {
        let l = quadratic(1.0);
        let q = MetricQuery::new(0.0, 2.0, &[0.0], &[1.0]);
        let values: Vec<f64> = [16.0, 32.0, 64.0]
            .iter()
            .map(|r| dp_metric_oracle(&l, &q, &DpGrid::new(1.0 / r, 1.0 / r)).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
    }

    #[test]
    fn higher_dimensions_are_unsupported() {
        let h = HamiltonianModel::with_params(Family::SeparableQuadratic, &[("A", 1.0)], 2).unwrap();
        let q = MetricQuery::new(0.0, 1.0, &[0.0, 0.0], &[1.0, 1.0]);
        let err = dp_metric_oracle(&LagrangianModel::new(h), &q, &DpGrid::new(1.0 / 32.0, 1.0 / 32.0));
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn coarse_grids_are_rejected() {
        let q = MetricQuery::new(0.0, 1.0, &[0.0], &[1.0]);
        assert!(dp_metric_oracle(&quadratic(0.0), &q, &DpGrid::new(0.1, 1.0 / 64.0)).is_err());
    }
}
