use serde::{Deserialize, Serialize};

use super::InitialDatum;
use crate::model::HamiltonianModel;
use crate::{Error, Result};

pub const MAX_CFL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeOptions {
    /// Target `dt theta / dx`, at most 1/2.
    pub cfl: f64,
    /// Fixed time step; must satisfy the CFL bound for the initial `theta`.
    pub dt: Option<f64>,
    /// Keep every `k`-th time level; 0 keeps only the first and last.
    pub record_every: usize,
    /// Lower bound for `theta`; runs sharing it and never exceeding it share time levels.
    pub theta_min: Option<f64>,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            cfl: MAX_CFL,
            dt: None,
            record_every: 0,
            theta_min: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub epsilon: f64,
    pub dx: f64,
    pub x: Vec<f64>,
    pub horizon: f64,
    /// Last time step used.
    pub dt: f64,
    pub steps: usize,
    /// Final dissipation coefficient.
    pub theta: f64,
    /// Largest `dt theta / dx` over the run.
    pub cfl_ratio: f64,
    pub times: Vec<f64>,
    /// `values[k][j] = u(x_j, times[k])`.
    pub values: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl GridSolution {
    pub fn final_values(&self) -> &[f64] {
        self.values.last().expect("at least the initial level is recorded")
    }

    /// Periodic linear interpolation of the final level.
    pub fn interpolate_final(&self, x: f64) -> f64 {
        let n = self.x.len();
        let s = (x - x.floor()) / self.dx;
        let i = (s.floor() as usize) % n;
        let w = s - s.floor();
        let u = self.final_values();
        (1.0 - w) * u[i] + w * u[(i + 1) % n]
    }

    /// Rows `(x, t, u)` for plotting.
    pub fn rows(&self) -> Vec<[f64; 3]> {
        self.times
            .iter()
            .zip(&self.values)
            .flat_map(|(t, level)| self.x.iter().zip(level).map(move |(x, u)| [*x, *t, *u]))
            .collect()
    }
}

fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let k = r.round();
    ((r - k).abs() < 1e-9 * r.max(1.0) && k >= 1.0).then_some(k as usize)
}

/// Explicit Lax-Friedrichs for `u_t + H(x/eps, t/eps, u_x) = 0` on the unit circle:
///
/// ```text
/// u_j' = u_j - dt [H(x_j/eps, t/eps, D0 u_j) - theta (u_{j+1} - 2 u_j + u_{j-1}) / (2 dx)]
/// ```
///
/// `theta = beta0 m0 P^{m0-1}` tracks the largest central difference `P`
/// seen so far (at least 1); whenever the current gradients exceed it,
/// `theta` is raised before the step and `dt` shrunk to keep the CFL ratio.
pub fn solve_scheme(
    h: &HamiltonianModel,
    g: &InitialDatum,
    eps: f64,
    horizon: f64,
    dx: f64,
    opts: &SchemeOptions,
) -> Result<GridSolution> {
    if h.dim() != 1 {
        return Err(Error::Unsupported("the finite-difference route is one-dimensional".into()));
    }
    if !g.is_periodic() {
        return Err(Error::Precondition("the scheme needs 1-periodic initial data".into()));
    }
    let n = match integer_ratio(1.0, dx) {
        Some(n) if dx > 0.0 => n,
        _ => return Err(Error::Precondition(format!("dx = {dx} does not divide 1"))),
    };
    let u0: Vec<f64> = (0..n).map(|j| g.eval(&[j as f64 / n as f64])).collect();
    solve_scheme_values(h, u0, eps, horizon, opts)
}

/// [`solve_scheme`] from initial grid values `u0[j] = g(j / u0.len())`.
pub fn solve_scheme_values(
    h: &HamiltonianModel,
    u0: Vec<f64>,
    eps: f64,
    horizon: f64,
    opts: &SchemeOptions,
) -> Result<GridSolution> {
    if h.dim() != 1 {
        return Err(Error::Unsupported("the finite-difference route is one-dimensional".into()));
    }
    let n = u0.len();
    if n < 3 || u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("initial values need at least 3 finite entries".into()));
    }
    let dx = 1.0 / n as f64;
    if !(eps > 0.0 && eps <= 1.0) || integer_ratio(1.0, eps).is_none() {
        return Err(Error::Precondition(format!("eps must be 1/k for an integer k, got {eps}")));
    }
    if integer_ratio(eps, dx).is_none() {
        return Err(Error::Precondition(format!("dx = {dx} does not divide eps = {eps}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::Precondition(format!("horizon must be positive, got {horizon}")));
    }
    if !(opts.cfl > 0.0 && opts.cfl <= MAX_CFL) {
        return Err(Error::Config(format!("CFL target {} outside (0, 1/2]", opts.cfl)));
    }
    let x: Vec<f64> = (0..n).map(|j| j as f64 * dx).collect();
    let mut u = u0;
    let growth = h.growth();
    let floor = opts.theta_min.unwrap_or(0.0);
    let theta_of = |p: f64| (growth.beta0 * growth.m0 * p.max(1.0).powf(growth.m0 - 1.0)).max(floor);
    let gradient = |u: &[f64]| -> f64 {
        (0..n)
            .map(|j| ((u[(j + 1) % n] - u[(j + n - 1) % n]) / (2.0 * dx)).abs())
            .fold(0.0, f64::max)
    };

    let mut p_max = gradient(&u).max(1.0);
    let mut theta = theta_of(p_max);
    let mut dt = match opts.dt {
        Some(dt) => {
            if !(dt > 0.0) || dt * theta / dx > MAX_CFL * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "dt = {dt} violates the CFL bound: dt theta / dx = {} > 1/2",
                    dt * theta / dx
                )));
            }
            dt
        }
        None => opts.cfl * dx / theta,
    };
    let mut warnings = Vec::new();
    let mut times = vec![0.0];
    let mut values = vec![u.clone()];
    let mut next = vec![0.0; n];
    let mut time = 0.0;
    let mut steps = 0usize;
    let mut cfl_ratio: f64 = 0.0;

    while time < horizon * (1.0 - 1e-14) {
        let p_now = gradient(&u);
        if p_now > p_max {
            p_max = p_now;
            let needed = theta_of(p_max);
            if needed > theta {
                warnings.push(format!(
                    "t = {time:.6}: gradient {p_now:.4} raised theta from {theta:.4} to {needed:.4}"
                ));
                theta = needed;
                dt = dt.min(opts.cfl * dx / theta);
            }
        }
        // land exactly on the horizon
        let remaining = horizon - time;
        let step = remaining / (remaining / dt).ceil();
        let tau = time / eps;
        let mut h0: f64 = 0.0;
        for j in 0..n {
            let (left, mid, right) = (u[(j + n - 1) % n], u[j], u[(j + 1) % n]);
            let xs = [x[j] / eps];
            let ham = h.hamiltonian(&xs, tau, &[(right - left) / (2.0 * dx)]);
            h0 = h0.max(h.hamiltonian(&xs, tau, &[0.0]).abs());
            next[j] = mid - step * (ham - theta * (right - 2.0 * mid + left) / (2.0 * dx));
        }
        let before = u.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let after = next.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if after > before + step * h0 + 1e-12 * before.max(1.0) {
            return Err(Error::Internal(format!(
                "scheme barrier violated at t = {time}: max|u| went from {before} to {after}"
            )));
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Internal(format!("non-finite scheme values at t = {time}")));
        }
        std::mem::swap(&mut u, &mut next);
        time += step;
        steps += 1;
        cfl_ratio = cfl_ratio.max(step * theta / dx);
        let last = time >= horizon * (1.0 - 1e-14);
        if last || (opts.record_every > 0 && steps.is_multiple_of(opts.record_every)) {
            times.push(if last { horizon } else { time });
            values.push(u.clone());
        }
    }

    Ok(GridSolution {
        epsilon: eps,
        dx,
        x,
        horizon,
        dt,
        steps,
        theta,
        cfl_ratio,
        times,
        values,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_data_stays_zero() {
        let h = HamiltonianModel::separable_quadratic(0.0);
        let s = solve_scheme(&h, &InitialDatum::Zero, 1.0, 0.5, 1.0 / 64.0, &SchemeOptions::default()).unwrap();
        assert!(s.final_values().iter().all(|&v| v == 0.0));
        assert!(s.cfl_ratio <= 0.5 + 1e-12);
    }

    #[test]
    fn free_particle_matches_hopf_lax() {
        let h = HamiltonianModel::separable_quadratic(0.0);
        let g = InitialDatum::default();
        let t = 0.1;
        let s = solve_scheme(&h, &g, 1.0, t, 1.0 / 512.0, &SchemeOptions::default()).unwrap();
        let mut worst: f64 = 0.0;
        for (j, &xj) in s.x.iter().enumerate().step_by(8) {
            let oracle = (0..=20_000)
                .map(|i| xj - 0.5 + i as f64 / 20_000.0)
                .map(|y| g.eval(&[y]) + (xj - y) * (xj - y) / (2.0 * t))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((s.final_values()[j] - oracle).abs());
        }
        assert!(worst <= 5e-2, "{worst}");
        assert!((s.times.last().unwrap() - t).abs() < 1e-15);
    }

    #[test]
    fn comparison_holds_at_every_level() {
        let h = HamiltonianModel::separable_quadratic(1.0);
        let n = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let opts = SchemeOptions {
            record_every: 1,
            theta_min: Some(20.0),
            ..Default::default()
        };
        for _ in 0..10 {
            let low: Vec<f64> = (0..n)
                .map(|j| (std::f64::consts::TAU * j as f64 / n as f64).sin() + rng.random_range(-0.05..0.05))
                .collect();
            let high: Vec<f64> = low.iter().map(|v| v + rng.random_range(0.0..0.05)).collect();
            let a = solve_scheme_values(&h, low, 0.5, 0.2, &opts).unwrap();
            let b = solve_scheme_values(&h, high, 0.5, 0.2, &opts).unwrap();
            assert_eq!(a.times, b.times);
            assert!(a.warnings.is_empty() && b.warnings.is_empty());
            for (la, lb) in a.values.iter().zip(&b.values) {
                assert!(la.iter().zip(lb).all(|(u, v)| u <= v));
            }
        }
    }

    #[test]
    fn rejects_non_dividing_dx() {
        let h = HamiltonianModel::separable_quadratic(1.0);
        let g = InitialDatum::default();
        assert!(solve_scheme(&h, &g, 0.25, 1.0, 0.1, &SchemeOptions::default()).is_err());
        assert!(solve_scheme(&h, &g, 0.3, 1.0, 0.01, &SchemeOptions::default()).is_err());
    }

    #[test]
    fn cfl_violation_is_a_configuration_error() {
        let h = HamiltonianModel::separable_quadratic(1.0);
        let opts = SchemeOptions {
            dt: Some(0.1),
            ..Default::default()
        };
        let r = solve_scheme(&h, &InitialDatum::default(), 0.5, 1.0, 1.0 / 64.0, &opts);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn theta_grows_with_steep_data() {
        let h = HamiltonianModel::separable_quadratic(0.0);
        let g = InitialDatum::Sine { amplitude: 3.0 };
        let s = solve_scheme(&h, &g, 1.0, 0.05, 1.0 / 128.0, &SchemeOptions::default()).unwrap();
        assert!(s.theta >= 3.0 * std::f64::consts::TAU * 0.99);
    }
}
