//! Explicit competitor paths behind the sub- and super-additivity of `m`.
//!
//! Doubling glues a minimizer for `m(t, 0, y)` to a shifted copy of itself;
//! halving rebuilds a path for `m(t, 0, y)` out of the Burago pieces of a
//! minimizer for `m(2t, 0, 2y)`. Both record every intermediate quantity so
//! the inequalities can be checked numerically.

mod doubling;
mod halving;
mod window;

pub use doubling::{build_doubling_path, DoublingReport, DOUBLING_WIDTH};
pub use halving::{build_halving_path, halving_threshold, HalvingPath, ShiftSchedule, HALVING_FACTOR};
pub use window::{find_cheap_window, velocity_integral, CheapWindow};

use serde::{Deserialize, Serialize};

use crate::action::{compute_metric_with, MetricQuery, MetricResult, OptimizerOptions, DEFAULT_SEGMENTS_PER_UNIT};
use crate::burago::{burago_nd, BuragoDecomposition, DEFAULT_BUDGET, DEFAULT_TOL_ND};
use crate::model::Lagrangian;
use crate::{Error, Result};

/// Largest deviation of `c` from the prescribed window and endpoints.
pub(crate) fn endpoint_gap(c: &crate::action::Curve, t0: f64, from: &[f64], t1: f64, to: &[f64]) -> f64 {
    let far = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    far(c.start(), from)
        .max(far(c.end(), to))
        .max((c.t_start() - t0).abs())
        .max((c.t_end() - t1).abs())
}

/// Uniform segment count for a straight connector lasting `duration`.
pub(crate) fn connector_segments(duration: f64, density: f64) -> usize {
    ((duration * density).ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdditivityOptions {
    /// Only `|y| <= velocity_bound * t` is admitted.
    pub velocity_bound: f64,
    /// Curve segments per unit time.
    pub density: f64,
    pub multistarts: usize,
    pub seed: u64,
    pub burago_tol: f64,
    pub burago_budget: usize,
    /// Feed the constructed paths to the metric optimizer as extra starts.
    pub warm_start: bool,
}

impl Default for AdditivityOptions {
    fn default() -> Self {
        Self {
            velocity_bound: 2.0,
            density: DEFAULT_SEGMENTS_PER_UNIT,
            multistarts: crate::action::DEFAULT_MULTISTARTS,
            seed: 0,
            burago_tol: DEFAULT_TOL_ND,
            burago_budget: DEFAULT_BUDGET,
            warm_start: true,
        }
    }
}

impl AdditivityOptions {
    fn query(&self, t: f64, y: &[f64]) -> MetricQuery {
        let zero = vec![0.0; y.len()];
        MetricQuery::new(0.0, t, &zero, y)
            .with_density(self.density)
            .with_multistarts(self.multistarts)
            .with_seed(self.seed)
    }

    fn metric(&self, l: &dyn Lagrangian, t: f64, y: &[f64], warm: &[crate::action::Curve]) -> Result<MetricResult> {
        let warm = if self.warm_start { warm } else { &[] };
        compute_metric_with(l, &self.query(t, y), &OptimizerOptions::default(), warm)
    }

    fn check(&self, l: &dyn Lagrangian, t: f64, y: &[f64]) -> Result<()> {
        if y.len() != l.dim() {
            return Err(Error::Precondition("y has the wrong dimension".into()));
        }
        if !(t > 0.0) {
            return Err(Error::Precondition(format!("t must be positive, got {t}")));
        }
        let norm = crate::model::norm(y);
        if norm > self.velocity_bound * t {
            return Err(Error::Precondition(format!(
                "|y| = {norm} exceeds the velocity bound {} times t = {t}",
                self.velocity_bound
            )));
        }
        Ok(())
    }

    /// `C = beta M^m + K`, so that `-K t <= m(t, 0, y) <= C t` whenever `|y| <= M t`.
    pub fn growth_constant(&self, l: &dyn Lagrangian) -> f64 {
        let g = l.bounds();
        g.beta * self.velocity_bound.powf(g.m) + g.k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub t: f64,
    pub y: Vec<f64>,
    pub m_t: f64,
    pub m_2t: f64,
    /// `m(2t, 0, 2y) - 2 m(t, 0, y)`.
    pub defect: f64,
    /// Doubling construction, run when `t > 6`.
    pub doubling: Option<DoublingReport>,
    /// `4 C t`, the a-priori bound used when `t <= 6`.
    pub small_time_bound: Option<f64>,
    pub residuals: [f64; 2],
}

impl SubadditivityReport {
    /// `action(mu) - 2 m(t, 0, y)`.
    pub fn constructive_defect(&self) -> Option<f64> {
        self.doubling.as_ref().map(|d| d.total - 2.0 * self.m_t)
    }
}

/// Measures `m(2t, 0, 2y) - 2 m(t, 0, y)` and, for `t > 6`, the doubling
/// path's upper bound on it.
pub fn check_subadditivity(l: &dyn Lagrangian, t: f64, y: &[f64], opts: &AdditivityOptions) -> Result<SubadditivityReport> {
    opts.check(l, t, y)?;
    let short = opts.metric(l, t, y, &[])?;
    let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
    let (doubling, small_time_bound, warm) = if t > DOUBLING_WIDTH {
        let (mu, rep) = build_doubling_path(l, &short.minimizer, y)?;
        (Some(rep), None, vec![mu])
    } else {
        (None, Some(4.0 * opts.growth_constant(l) * t), vec![])
    };
    let long = opts.metric(l, 2.0 * t, &y2, &warm)?;
    Ok(SubadditivityReport {
        t,
        y: y.to_vec(),
        m_t: short.value,
        m_2t: long.value,
        defect: long.value - 2.0 * short.value,
        doubling,
        small_time_bound,
        residuals: [short.first_order_residual, long.first_order_residual],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalvingSummary {
    pub schedule: ShiftSchedule,
    pub upper_bound: f64,
    pub interval_action: f64,
    pub window: CheapWindow,
    pub junction_gap: f64,
    pub endpoint_gap: f64,
}

impl From<&HalvingPath> for HalvingSummary {
    fn from(h: &HalvingPath) -> Self {
        Self {
            schedule: h.schedule.clone(),
            upper_bound: h.upper_bound,
            interval_action: h.interval_action,
            window: h.window,
            junction_gap: h.junction_gap,
            endpoint_gap: h.endpoint_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperadditivityReport {
    pub t: f64,
    pub y: Vec<f64>,
    pub m_t: f64,
    pub m_2t: f64,
    /// `2 m(t, 0, y) - m(2t, 0, 2y)`.
    pub defect: f64,
    pub decomposition: Option<BuragoDecomposition>,
    /// Halving over the Burago intervals.
    pub primary: Option<HalvingSummary>,
    /// Halving over the complementary intervals.
    pub complement: Option<HalvingSummary>,
    /// `4 C t`, the a-priori bound used below the halving threshold.
    pub small_time_bound: Option<f64>,
    pub residuals: [f64; 2],
}

impl SuperadditivityReport {
    /// `action(zeta_1) + action(zeta_2) - m(2t, 0, 2y)`: the sum of the two
    /// halving inequalities, an upper bound on `2 m(t, 0, y) - m(2t, 0, 2y)`.
    pub fn constructive_defect(&self) -> Option<f64> {
        match (&self.primary, &self.complement) {
            (Some(p), Some(c)) => Some(p.upper_bound + c.upper_bound - self.m_2t),
            _ => None,
        }
    }
}

/// Measures `2 m(t, 0, y) - m(2t, 0, 2y)` and, above the halving threshold,
/// the bound obtained by halving the long minimizer along its Burago
/// intervals and along their complement.
pub fn check_superadditivity(
    l: &dyn Lagrangian,
    t: f64,
    y: &[f64],
    opts: &AdditivityOptions,
) -> Result<SuperadditivityReport> {
    opts.check(l, t, y)?;
    let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
    let long = opts.metric(l, 2.0 * t, &y2, &[])?;
    let mut decomposition = None;
    let mut primary = None;
    let mut complement = None;
    let mut small_time_bound = None;
    let mut warm = Vec::new();
    if t > halving_threshold(l.dim()) {
        let eta = &long.minimizer;
        let dec = burago_nd(&eta.space_time_lift(), opts.burago_tol, opts.burago_budget)?;
        let h1 = build_halving_path(l, eta, y, &dec)?;
        let comp = BuragoDecomposition::from_intervals(eta, dec.complement(0.0, 2.0 * t));
        let h2 = build_halving_path(l, eta, y, &comp)?;
        primary = Some(HalvingSummary::from(&h1));
        complement = Some(HalvingSummary::from(&h2));
        decomposition = Some(dec);
        warm.push(h1.zeta);
        warm.push(h2.zeta);
    } else {
        small_time_bound = Some(4.0 * opts.growth_constant(l) * t);
    }
    let short = opts.metric(l, t, y, &warm)?;
    Ok(SuperadditivityReport {
        t,
        y: y.to_vec(),
        m_t: short.value,
        m_2t: long.value,
        defect: 2.0 * short.value - long.value,
        decomposition,
        primary,
        complement,
        small_time_bound,
        residuals: [short.first_order_residual, long.first_order_residual],
    })
}
