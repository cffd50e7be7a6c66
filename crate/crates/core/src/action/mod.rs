//! Discretized curves, the action integral and the travel-cost metric
//!
//! ```text
//! m(t0, t1; x, y) = inf { int_{t0}^{t1} L(eta(s), s, eta'(s)) ds : eta(t0) = x, eta(t1) = y }
//! ```
//!
//! computed by direct trajectory optimization over piecewise-linear curves,
//! with a dynamic-programming oracle in one dimension.

mod curve;
mod dp;
mod optimize;

pub use curve::{Curve, CurveBuilder};
pub use dp::{dp_metric_oracle, DpGrid};
pub use optimize::OptimizerOptions;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Lagrangian;
use crate::{Error, Result};

pub const DEFAULT_MULTISTARTS: usize = 5;
pub const DEFAULT_SEGMENTS_PER_UNIT: f64 = 32.0;
pub const MIN_SEGMENTS: usize = 32;

/// `max(32, ceil(rate * window))` uniform segments.
pub fn default_segments(window: f64, per_unit: f64) -> usize {
    ((per_unit * window).ceil() as usize).max(MIN_SEGMENTS)
}

/// Midpoint-rule action: `sum_i ds_i * L(midpoint, mid-time, segment velocity)`.
pub fn action_of_curve(l: &dyn Lagrangian, c: &Curve) -> f64 {
    optimize::discrete_action(l, c)
}

/// Action of the restriction of `c` to `[a, b]`.
pub fn action_between(l: &dyn Lagrangian, c: &Curve, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    Ok(action_of_curve(l, &c.restrict(a, b)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricQuery {
    pub t_start: f64,
    pub t_end: f64,
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub segments: usize,
    pub multistarts: usize,
    /// Seeds the randomized starts.
    #[serde(default)]
    pub seed: u64,
}

impl MetricQuery {
    /// Query with the default resolution and multistart count.
    pub fn new(t_start: f64, t_end: f64, from: &[f64], to: &[f64]) -> Self {
        Self {
            t_start,
            t_end,
            from: from.to_vec(),
            to: to.to_vec(),
            segments: default_segments(t_end - t_start, DEFAULT_SEGMENTS_PER_UNIT),
            multistarts: DEFAULT_MULTISTARTS,
            seed: 0,
        }
    }

    pub fn with_segments(mut self, segments: usize) -> Self {
        self.segments = segments;
        self
    }

    /// Sets the segment count from a per-unit-time density.
    pub fn with_density(mut self, per_unit: f64) -> Self {
        self.segments = default_segments(self.window(), per_unit);
        self
    }

    pub fn with_multistarts(mut self, multistarts: usize) -> Self {
        self.multistarts = multistarts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn window(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.t_end > self.t_start) || !self.t_start.is_finite() || !self.t_end.is_finite() {
            return Err(Error::Precondition(format!(
                "metric window [{}, {}] is empty",
                self.t_start, self.t_end
            )));
        }
        if self.segments < 2 {
            return Err(Error::Precondition("metric query needs at least two segments".into()));
        }
        if self.multistarts == 0 {
            return Err(Error::Precondition("metric query needs at least one start".into()));
        }
        if self.from.len() != dim || self.to.len() != dim {
            return Err(Error::Precondition(format!(
                "endpoints must be {dim}-dimensional (got {} and {})",
                self.from.len(),
                self.to.len()
            )));
        }
        if self.from.iter().chain(&self.to).any(|z| !z.is_finite()) {
            return Err(Error::Precondition("metric endpoints must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub value: f64,
    pub minimizer: Curve,
    pub starts_tried: usize,
    pub best_start_index: usize,
    /// Gradient norm of the discrete action at the returned curve.
    pub first_order_residual: f64,
    pub iterations: usize,
}

/// Estimates `m` over the query window by multistart descent.
///
/// Start 0 is the straight line; further starts add random integer-cell
/// detours to the straight line, since the landscape is periodic rather than
/// convex in the nodes. The returned value is the action of the returned
/// curve, hence always an upper bound for the discrete infimum.
pub fn compute_metric(l: &dyn Lagrangian, q: &MetricQuery) -> Result<MetricResult> {
    compute_metric_with(l, q, &OptimizerOptions::default(), &[])
}

/// [`compute_metric`] with explicit optimizer options and extra warm starts.
///
/// Warm starts are resampled onto the query's uniform knots and must join the
/// query's endpoints over its window.
pub fn compute_metric_with(
    l: &dyn Lagrangian,
    q: &MetricQuery,
    opts: &OptimizerOptions,
    warm: &[Curve],
) -> Result<MetricResult> {
    let n = l.dim();
    q.validate(n)?;
    let straight = Curve::straight(q.t_start, q.t_end, &q.from, &q.to, q.segments)?;
    let mut starts = vec![straight.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(q.seed);
    let random_starts = if l.is_translation_invariant() { 0 } else { q.multistarts - 1 };
    for _ in 0..random_starts {
        starts.push(detour(&straight, &mut rng));
    }
    for w in warm {
        let ok = (w.t_start() - q.t_start).abs() < 1e-9 && (w.t_end() - q.t_end).abs() < 1e-9;
        if !ok || w.dim() != n {
            return Err(Error::Precondition("warm start does not span the query window".into()));
        }
        let mut c = Curve::sample(q.t_start, q.t_end, q.segments, n, |s| w.eval(s))?;
        let last = c.segments() * n;
        c.nodes_mut()[..n].copy_from_slice(&q.from);
        c.nodes_mut()[last..].copy_from_slice(&q.to);
        starts.push(c);
    }

    let mut best: Option<(usize, optimize::Descent)> = None;
    let mut failure = None;
    let mut iterations = 0;
    for (idx, start) in starts.into_iter().enumerate() {
        match optimize::descend(l, start, opts) {
            Ok(run) => {
                iterations += run.iterations;
                let better = best.as_ref().is_none_or(|(_, b)| run.value < b.value);
                if better {
                    best = Some((idx, run));
                }
            }
            Err(d) => failure = Some(d),
        }
    }
    let starts_tried = q.multistarts.min(random_starts + 1) + warm.len();
    let Some((best_start_index, run)) = best else {
        let d = failure.expect("every start either succeeds or diverges");
        return Err(Error::Divergence {
            iterations: d.iterations,
            last_action: d.last_action,
            gradient_norm: d.gradient_norm,
        });
    };
    let value = action_of_curve(l, &run.curve);
    Ok(MetricResult {
        value,
        minimizer: run.curve,
        starts_tried,
        best_start_index,
        first_order_residual: run.grad_norm,
        iterations,
    })
}

/// The straight line plus one to three box-shaped integer offsets.
fn detour(straight: &Curve, rng: &mut ChaCha8Rng) -> Curve {
    let n = straight.dim();
    let segs = straight.segments();
    let mut c = straight.clone();
    let count = rng.random_range(1..=3);
    for _ in 0..count {
        let a = rng.random_range(1..segs);
        let b = rng.random_range(a..segs);
        let offset: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let nodes = c.nodes_mut();
        for i in a..=b {
            for d in 0..n {
                nodes[i * n + d] += offset[d];
            }
        }
    }
    c
}

/// `|m(t; x, y) - m(t; x + w, y + w)|` over the window `[0, t]`.
///
/// Both runs share the query seed, so for translation-invariant `L` the two
/// optimizations follow the same landscape.
pub fn check_metric_periodicity(
    l: &dyn Lagrangian,
    t: f64,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    seed: u64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("periodicity check needs t > 0, got {t}")));
    }
    let shift = |p: &[f64]| p.iter().zip(w).map(|(a, b)| a + b).collect::<Vec<_>>();
    let base = compute_metric(l, &MetricQuery::new(0.0, t, x, y).with_seed(seed))?;
    let moved = compute_metric(l, &MetricQuery::new(0.0, t, &shift(x), &shift(y)).with_seed(seed))?;
    Ok((base.value - moved.value).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, HamiltonianModel, LagrangianModel};

    fn free() -> LagrangianModel {
        LagrangianModel::new(HamiltonianModel::separable_quadratic(0.0))
    }

    fn oscillating() -> LagrangianModel {
        LagrangianModel::new(HamiltonianModel::separable_quadratic(1.0))
    }

    #[test]
    fn action_of_simple_curves() {
        let l = free();
        for n in [1, 2, 7, 64] {
            let c = Curve::straight(0.0, 1.0, &[0.0], &[1.0], n).unwrap();
            assert!((action_of_curve(&l, &c) - 0.5).abs() < 1e-14);
        }
        let tent = Curve::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.0], 1).unwrap();
        assert!((action_of_curve(&l, &tent) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn action_against_fine_quadrature() {
        // L = v^2/2 - cos(2 pi x): mechanical family with A = 2 and offset
        // gives v^2/2 - 2 sin^2(pi x) = v^2/2 - 1 + cos(2 pi x); flip the sign
        // by hand with a dedicated Lagrangian instead.
        struct CosPotential;
        impl Lagrangian for CosPotential {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &[f64], _t: f64, v: &[f64]) -> f64 {
                0.5 * v[0] * v[0] - (2.0 * std::f64::consts::PI * x[0]).cos()
            }
            fn bounds(&self) -> crate::model::GrowthBounds {
                crate::model::GrowthBounds::new(0.5, 0.5, 1.0, 2.0).unwrap()
            }
        }
        let c = Curve::straight(0.0, 1.0, &[0.0], &[1.0], 64).unwrap();
        let got = action_of_curve(&CosPotential, &c);
        let fine: f64 = (0..1_000_000)
            .map(|i| (i as f64 + 0.5) / 1e6)
            .map(|s| 0.5 - (2.0 * std::f64::consts::PI * s).cos())
            .sum::<f64>()
            / 1e6;
        assert!((got - fine).abs() < 1e-10, "{got} vs {fine}");
        assert!((got - 0.5).abs() < 1e-10);
    }

    #[test]
    fn free_metric_matches_hopf_lax() {
        let l = free();
        let r = compute_metric(&l, &MetricQuery::new(0.0, 1.0, &[0.0], &[1.0])).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
        assert!((r.value - action_of_curve(&l, &r.minimizer)).abs() < 1e-12);
        let r2 = compute_metric(&l, &MetricQuery::new(0.0, 2.0, &[0.0], &[2.0])).unwrap();
        assert!((r2.value - 2.0 * r.value).abs() < 1e-12);
    }

    #[test]
    fn minimizer_endpoints_are_exact() {
        let l = oscillating();
        let q = MetricQuery::new(0.25, 3.75, &[0.3], &[-1.7]).with_seed(4);
        let r = compute_metric(&l, &q).unwrap();
        assert_eq!(r.minimizer.start(), &[0.3]);
        assert_eq!(r.minimizer.end(), &[-1.7]);
        assert_eq!(r.minimizer.t_start(), 0.25);
        assert_eq!(r.minimizer.t_end(), 3.75);
        assert!(r.first_order_residual <= 1e-7);
        assert_eq!(r.starts_tried, 5);
    }

    #[test]
    fn never_worse_than_straight_line() {
        let l = oscillating();
        for (t, y) in [(1.0, 0.5), (3.0, -2.0), (6.0, 4.5)] {
            let q = MetricQuery::new(0.0, t, &[0.1], &[y]);
            let r = compute_metric(&l, &q).unwrap();
            let line = Curve::straight(0.0, t, &[0.1], &[y], q.segments).unwrap();
            assert!(r.value <= action_of_curve(&l, &line) + 1e-9);
        }
    }

    #[test]
    fn integer_shift_leaves_metric_unchanged() {
        let l = oscillating();
        let defect = check_metric_periodicity(&l, 2.0, &[0.3], &[0.7], &[1.0], 9).unwrap();
        assert!(defect <= 2e-7, "defect {defect}");
        let defect = check_metric_periodicity(&free(), 2.0, &[0.3], &[0.7], &[3.0], 9).unwrap();
        assert!(defect < 1e-12);
    }

    #[test]
    fn half_shift_changes_metric() {
        let l = oscillating();
        let defect = check_metric_periodicity(&l, 2.0, &[0.3], &[0.7], &[0.5], 9).unwrap();
        assert!(defect > 1e-2, "defect {defect}");
    }

    #[test]
    fn two_dimensional_metric() {
        let h = HamiltonianModel::with_params(Family::SeparableQuadratic, &[("A", 1.0)], 2).unwrap();
        let l = LagrangianModel::new(h);
        let q = MetricQuery::new(0.0, 4.0, &[0.0, 0.0], &[1.0, -2.0]);
        let r = compute_metric(&l, &q).unwrap();
        let line = Curve::straight(0.0, 4.0, &[0.0, 0.0], &[1.0, -2.0], q.segments).unwrap();
        assert!(r.value <= action_of_curve(&l, &line));
        assert!(r.first_order_residual <= 1e-7);
    }

    #[test]
    fn invalid_queries_are_rejected() {
        let l = free();
        assert!(compute_metric(&l, &MetricQuery::new(1.0, 1.0, &[0.0], &[1.0])).is_err());
        assert!(compute_metric(&l, &MetricQuery::new(0.0, 1.0, &[0.0, 1.0], &[1.0])).is_err());
        let q = MetricQuery::new(0.0, 1.0, &[0.0], &[1.0]).with_segments(1);
        assert!(compute_metric(&l, &q).is_err());
    }

    #[test]
    fn refinement_does_not_increase_value_much() {
        let l = oscillating();
        let coarse = compute_metric(&l, &MetricQuery::new(0.0, 4.0, &[0.0], &[2.0]).with_segments(32)).unwrap();
        let fine = compute_metric(&l, &MetricQuery::new(0.0, 4.0, &[0.0], &[2.0]).with_segments(64)).unwrap();
        println!("coarse {} fine {}", coarse.value, fine.value);
        assert!(fine.value <= coarse.value + 5e-2);
    }
}
