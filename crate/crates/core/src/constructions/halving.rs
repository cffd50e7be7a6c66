use serde::{Deserialize, Serialize};

use super::connector_segments;
use super::window::{find_cheap_window, CheapWindow};
use crate::action::{action_between, action_of_curve, Curve, CurveBuilder};
use crate::burago::BuragoDecomposition;
use crate::model::Lagrangian;
use crate::{Error, Result};

/// Time-compression factor of the cheap window.
pub const HALVING_FACTOR: f64 = 3.0;

/// Displacement and duration tolerances on the incoming decomposition.
const DISPLACEMENT_TOL: f64 = 1e-5;
const DURATION_TOL: f64 = 1e-9;

/// Below this length an interval carries no path piece.
const DEGENERATE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSchedule {
    /// Source intervals `[a_i, b_i]` of the long path.
    pub intervals: Vec<(f64, f64)>,
    pub c: Vec<f64>,
    /// `d_0 = 0` followed by `d_1, ..., d_k`.
    pub d: Vec<f64>,
    /// Integer time shifts `c_i - a_i`.
    pub time_shift: Vec<f64>,
    /// Integer space shifts `w_i`.
    pub w: Vec<Vec<f64>>,
    /// Least integer strictly above the summed gaps `c_{i+1} - d_i`.
    pub connector_budget: usize,
    /// Index (zero-based) of the segment that gets compressed.
    pub j: usize,
    /// Start of the compressed window, in the shifted time of segment `j`.
    pub l: f64,
    /// Largest `|mu_i(d_i) - mu_{i+1}(c_{i+1})|`.
    pub max_landing_gap: f64,
}

impl ShiftSchedule {
    /// Checks `c_i - a_i in Z`, `1 <= c_i - d_{i-1} < 2`, `d_i - c_i = b_i - a_i`,
    /// the budget bounds and the landing gaps against `sqrt(n)`.
    pub fn is_consistent(&self, n: usize) -> bool {
        let k = self.c.len();
        let mut ok = self.d.len() == k + 1 && self.d[0] == 0.0;
        let mut gaps = 0.0;
        for i in 0..k {
            let (a, b) = self.intervals[i];
            let shift = self.c[i] - a;
            let gap = self.c[i] - self.d[i];
            gaps += gap;
            ok &= (shift - shift.round()).abs() < 1e-9;
            ok &= (1.0 - 1e-9..2.0).contains(&gap);
            ok &= ((self.d[i + 1] - self.c[i]) - (b - a)).abs() < 1e-9;
        }
        let m = self.connector_budget as f64;
        ok &= m > gaps && m <= gaps + 1.0 && self.connector_budget <= 2 * k.max(1);
        ok && self.max_landing_gap <= (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalvingPath {
    pub zeta: Curve,
    pub schedule: ShiftSchedule,
    /// Action of `zeta`: an upper bound for `m(t, 0, y)`.
    pub upper_bound: f64,
    /// `sum_i int_{a_i}^{b_i} L` along the long path.
    pub interval_action: f64,
    pub window: CheapWindow,
    pub junction_gap: f64,
    /// Deviation of `zeta` from `[0, t]`, `zeta(0) = eta(0)` and `zeta(t) = y`.
    pub endpoint_gap: f64,
}

impl HalvingPath {
    /// `upper_bound - interval_action`, the constant the construction pays.
    pub fn overhead(&self) -> f64 {
        self.upper_bound - self.interval_action
    }
}

/// Threshold on `t` above which the halving construction is guaranteed to
/// find a compressible segment: `4 (n + 4)^2`.
pub fn halving_threshold(n: usize) -> f64 {
    4.0 * ((n + 4) * (n + 4)) as f64
}

/// Reassembles the pieces of `eta` (a path from 0 to `2y` on `[0, 2t]`) over
/// the intervals of `dec` into a path from 0 to `y` on `[0, t]`.
///
/// Each piece is moved by an integer time shift so that consecutive pieces
/// are separated by gaps in `[1, 2)`, and by an integer space shift so that
/// consecutive landing points share a unit cube. The gaps are bridged by
/// straight connectors; the time they consume is recovered by running one
/// cheap window of width `3M` three times faster.
pub fn build_halving_path(
    l: &dyn Lagrangian,
    eta: &Curve,
    y: &[f64],
    dec: &BuragoDecomposition,
) -> Result<HalvingPath> {
    let n = l.dim();
    let t = eta.duration() / 2.0;
    if eta.t_start() != 0.0 || eta.dim() != n || y.len() != n {
        return Err(Error::Precondition("halving needs a path on [0, 2t] in the model's dimension".into()));
    }
    if !(t > halving_threshold(n)) {
        return Err(Error::Precondition(format!(
            "halving construction needs t > {}, got {t}",
            halving_threshold(n)
        )));
    }
    let intervals = &dec.intervals;
    if intervals.is_empty()
        || intervals.windows(2).any(|p| p[0].1 > p[1].0)
        || intervals.iter().any(|&(a, b)| a > b || a < 0.0 || b > 2.0 * t)
    {
        return Err(Error::Precondition("intervals must be ordered, disjoint and inside [0, 2t]".into()));
    }
    let duration: f64 = intervals.iter().map(|(a, b)| b - a).sum();
    if (duration - t).abs() > DURATION_TOL * t.max(1.0) {
        return Err(Error::Precondition(format!(
            "intervals last {duration} in total instead of {t}"
        )));
    }
    let mut disp = vec![0.0; n];
    for &(a, b) in intervals {
        for (d, (pb, pa)) in eta.eval(b).into_iter().zip(eta.eval(a)).enumerate() {
            disp[d] += pb - pa;
        }
    }
    if disp.iter().zip(y).any(|(s, v)| (s - v).abs() > DISPLACEMENT_TOL * v.abs().max(1.0)) {
        return Err(Error::Precondition("interval displacements do not add up to y".into()));
    }

    let schedule_base = schedule(eta, intervals)?;
    let k = intervals.len();
    let budget = schedule_base.connector_budget as f64;
    let width = HALVING_FACTOR * budget;

    // Among segments longer than 3M, take the one with the cheapest window.
    let mut choice: Option<(usize, CheapWindow)> = None;
    for (i, &(a, b)) in intervals.iter().enumerate() {
        if b - a > width {
            let win = find_cheap_window(l, &eta.restrict(a, b)?, width, None)?;
            if choice.as_ref().is_none_or(|(_, w)| win.window_action < w.window_action) {
                choice = Some((i, win));
            }
        }
    }
    let Some((j, window)) = choice else {
        return Err(Error::Internal(format!(
            "no interval is longer than 3M = {width}; the decomposition is malformed"
        )));
    };
    let mut sched = schedule_base;
    sched.j = j;
    sched.l = window.l + sched.time_shift[j];

    let density = eta.segments() as f64 / eta.duration();
    let landing_start = |i: usize| -> Vec<f64> { add(&eta.eval(intervals[i].0), &sched.w[i]) };
    let landing_end = |i: usize| -> Vec<f64> { add(&eta.eval(intervals[i].1), &sched.w[i]) };
    let piece = |i: usize, from: f64, to: f64, dt: f64| -> Result<Option<Curve>> {
        // mu_i restricted to [from, to] (mu time), moved by dt in time
        if to - from <= DEGENERATE {
            return Ok(None);
        }
        let shift = sched.time_shift[i];
        Ok(Some(eta.restrict(from - shift, to - shift)?.shifted(shift + dt, &sched.w[i])))
    };
    let connector = |t0: f64, t1: f64, from: &[f64], to: &[f64]| -> Result<Curve> {
        Curve::straight(t0, t1, from, to, connector_segments(t1 - t0, density))
    };

    let mut builder = CurveBuilder::new(n);
    builder.push(&connector(0.0, sched.c[0], &vec![0.0; n], &landing_start(0))?)?;
    for i in 0..k {
        let (ci, di) = (sched.c[i], sched.d[i + 1]);
        let dt = if i > j { -2.0 * budget } else { 0.0 };
        if i == j {
            let lj = sched.l;
            if let Some(p) = piece(i, ci, lj, 0.0)? {
                builder.push(&p)?;
            }
            let shift = sched.time_shift[i];
            let fast = eta
                .restrict(lj - shift, lj - shift + width)?
                .time_compressed(lj, HALVING_FACTOR)
                .shifted(0.0, &sched.w[i]);
            builder.push(&fast)?;
            if let Some(p) = piece(i, lj + width, di, -2.0 * budget)? {
                builder.push(&p)?;
            }
        } else if let Some(p) = piece(i, ci, di, dt)? {
            builder.push(&p)?;
        }
        let shift_after = if i >= j { -2.0 * budget } else { 0.0 };
        let start = di + shift_after;
        if i + 1 < k {
            builder.push(&connector(start, sched.c[i + 1] + shift_after, &landing_end(i), &landing_start(i + 1))?)?;
        } else {
            builder.push(&connector(start, t, &landing_end(i), y)?)?;
        }
    }
    let (zeta, junction_gap) = builder.finish()?;
    let endpoint_gap = super::endpoint_gap(&zeta, 0.0, eta.start(), t, y);
    let upper_bound = action_of_curve(l, &zeta);
    let mut interval_action = 0.0;
    for &(a, b) in intervals {
        interval_action += action_between(l, eta, a, b)?;
    }
    Ok(HalvingPath {
        zeta,
        schedule: sched,
        upper_bound,
        interval_action,
        window,
        junction_gap,
        endpoint_gap,
    })
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Time and space shifts for the intervals, without the compression choice.
fn schedule(eta: &Curve, intervals: &[(f64, f64)]) -> Result<ShiftSchedule> {
    let k = intervals.len();
    let mut c = Vec::with_capacity(k);
    let mut d = vec![0.0];
    let mut time_shift = Vec::with_capacity(k);
    let mut w: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut gaps = 0.0;
    let mut max_landing_gap: f64 = 0.0;
    for (i, &(a, b)) in intervals.iter().enumerate() {
        let prev = d[i];
        let shift = (prev + 1.0 - a).ceil();
        let ci = a + shift;
        c.push(ci);
        time_shift.push(shift);
        d.push(ci + (b - a));
        gaps += ci - prev;
        let start = eta.eval(a);
        let wi: Vec<f64> = if i == 0 {
            start.iter().map(|z| -z.floor()).collect()
        } else {
            let prev_end = add(&eta.eval(intervals[i - 1].1), &w[i - 1]);
            let wi: Vec<f64> = prev_end.iter().zip(&start).map(|(p, s)| p.floor() - s.floor()).collect();
            let landing = add(&start, &wi);
            let jump = crate::model::norm(&landing.iter().zip(&prev_end).map(|(x, y)| x - y).collect::<Vec<_>>());
            max_landing_gap = max_landing_gap.max(jump);
            wi
        };
        w.push(wi);
    }
    let connector_budget = gaps.floor() as usize + 1;
    if connector_budget > 2 * k {
        return Err(Error::Internal(format!("connector budget {connector_budget} exceeds 2k = {}", 2 * k)));
    }
    Ok(ShiftSchedule {
        intervals: intervals.to_vec(),
        c,
        d,
        time_shift,
        w,
        connector_budget,
        j: 0,
        l: 0.0,
        max_landing_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{compute_metric, MetricQuery};
    use crate::burago::burago_nd;
    use crate::model::{HamiltonianModel, LagrangianModel};

    fn model(amp: f64) -> LagrangianModel {
        LagrangianModel::new(HamiltonianModel::separable_quadratic(amp))
    }

    fn long_path(l: &LagrangianModel, t: f64, y: f64) -> Curve {
        compute_metric(l, &MetricQuery::new(0.0, 2.0 * t, &[0.0], &[2.0 * y]))
            .unwrap()
            .minimizer
    }

    #[test]
    fn halving_a_free_particle() {
        let l = model(0.0);
        let eta = Curve::straight(0.0, 240.0, &[0.0], &[100.0], 960).unwrap();
        let dec = BuragoDecomposition::from_intervals(&eta, vec![(30.0, 150.0)]);
        let h = build_halving_path(&l, &eta, &[50.0], &dec).unwrap();
        assert_eq!(h.zeta.start(), &[0.0]);
        assert!((h.zeta.end()[0] - 50.0).abs() < 1e-12);
        assert!((h.zeta.t_end() - 120.0).abs() < 1e-12);
        assert!(h.junction_gap <= 1e-12);
        assert!(h.endpoint_gap <= 1e-12);
        assert!(h.schedule.is_consistent(1), "{:?}", h.schedule);
        assert_eq!(h.schedule.c, vec![1.0]);
        assert_eq!(h.schedule.d, vec![0.0, 121.0]);
        assert_eq!(h.schedule.connector_budget, 2);
        assert!(h.overhead() < 5.0);
    }

    #[test]
    fn oscillating_model_with_burago_intervals() {
        let l = model(1.0);
        let (t, y) = (110.0, 40.3);
        let eta = long_path(&l, t, y);
        let dec = burago_nd(&eta.space_time_lift(), 1e-8, 20_000).unwrap();
        let h = build_halving_path(&l, &eta, &[y], &dec).unwrap();
        assert!((h.zeta.end()[0] - y).abs() < 1e-12);
        assert!((h.zeta.t_end() - t).abs() < 1e-9);
        assert!(h.junction_gap <= 1e-12);
        assert!(h.endpoint_gap <= 1e-12);
        assert!(h.schedule.is_consistent(1));

        let comp = BuragoDecomposition::from_intervals(&eta, dec.complement(0.0, 2.0 * t));
        let hc = build_halving_path(&l, &eta, &[y], &comp).unwrap();
        assert!(hc.junction_gap <= 1e-12);
        assert!(hc.endpoint_gap <= 1e-12);
        assert!(hc.schedule.is_consistent(1));
        let whole = action_of_curve(&l, &eta);
        assert!((h.interval_action + hc.interval_action - whole).abs() < 1e-3 * whole.abs().max(1.0));
    }

    #[test]
    fn degenerate_intervals_are_skipped() {
        let l = model(0.0);
        let eta = Curve::straight(0.0, 240.0, &[0.0], &[100.0], 960).unwrap();
        let dec = BuragoDecomposition::from_intervals(&eta, vec![(0.0, 0.0), (60.0, 180.0)]);
        let h = build_halving_path(&l, &eta, &[50.0], &dec).unwrap();
        assert!((h.zeta.end()[0] - 50.0).abs() < 1e-12);
        assert!(h.junction_gap <= 1e-12);
        assert!(h.endpoint_gap <= 1e-12);
        assert!(h.schedule.is_consistent(1));
    }

    #[test]
    fn short_time_is_rejected() {
        let l = model(0.0);
        let eta = Curve::straight(0.0, 100.0, &[0.0], &[10.0], 400).unwrap();
        let dec = BuragoDecomposition::from_intervals(&eta, vec![(0.0, 50.0)]);
        assert!(matches!(
            build_halving_path(&l, &eta, &[5.0], &dec),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn mismatched_displacement_is_rejected() {
        let l = model(0.0);
        let eta = Curve::straight(0.0, 240.0, &[0.0], &[100.0], 960).unwrap();
        let dec = BuragoDecomposition::from_intervals(&eta, vec![(0.0, 120.0)]);
        assert!(build_halving_path(&l, &eta, &[49.0], &dec).is_err());
    }
}
