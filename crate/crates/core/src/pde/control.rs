use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::InitialDatum;
use crate::action::{compute_metric, MetricQuery};
use crate::model::{golden_min, Lagrangian};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOptions {
    /// Per-axis bound on `|y - x| / t`; `None` derives it from the datum and growth bounds.
    pub radius: Option<f64>,
    /// Fine lattice step for `y`; `None` uses `min(eps / 8, 1 / 32)`.
    pub scan_step: Option<f64>,
    pub coarse_step: f64,
    /// Coarse local minima refined on the fine lattice.
    pub candidates: usize,
    pub density: f64,
    pub multistarts: usize,
    pub seed: u64,
    /// Integer shift of the time window `[0, t / eps]`.
    pub time_shift: i64,
    pub tol: f64,
}

impl Default for ControlOptions {
    fn default() -> Self {
        Self {
            radius: None,
            scan_step: None,
            coarse_step: 1.0 / 16.0,
            candidates: 3,
            density: crate::action::DEFAULT_SEGMENTS_PER_UNIT,
            multistarts: crate::action::DEFAULT_MULTISTARTS,
            seed: 0,
            time_shift: 0,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlValue {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub radius_warning: bool,
}

type Key = (Vec<u64>, Vec<i64>);

struct Solver<'a> {
    l: &'a dyn Lagrangian,
    g: &'a InitialDatum,
    eps: f64,
    window: (f64, f64),
    opts: &'a ControlOptions,
    step: f64,
    radius: f64,
    cache: Mutex<HashMap<Key, f64>>,
}

impl<'a> Solver<'a> {
    fn new(l: &'a dyn Lagrangian, g: &'a InitialDatum, eps: f64, t: f64, opts: &'a ControlOptions) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) || !(t > 0.0) {
            return Err(Error::Precondition(format!("control route needs eps in (0, 1] and t > 0 (eps {eps}, t {t})")));
        }
        let step = opts.scan_step.unwrap_or((eps / 8.0).min(1.0 / 32.0));
        if !(step > 0.0) || !(opts.coarse_step > 0.0) || opts.candidates == 0 {
            return Err(Error::Precondition("control scan steps must be positive".into()));
        }
        let len = t / eps;
        let shift = opts.time_shift as f64;
        let radius = opts.radius.unwrap_or_else(|| g.search_radius(&l.bounds(), t)) * t;
        Ok(Self {
            l,
            g,
            eps,
            window: (shift, shift + len),
            opts,
            step,
            radius,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// `eps m(window; (x - d) / eps -> x / eps)` after removing `floor(x / eps)`.
    fn cost(&self, frac: &[f64], d: &[f64]) -> Result<f64> {
        let from: Vec<f64> = frac.iter().zip(d).map(|(a, b)| a - b / self.eps).collect();
        let q = MetricQuery::new(self.window.0, self.window.1, &from, frac)
            .with_density(self.opts.density)
            .with_multistarts(self.opts.multistarts)
            .with_seed(self.opts.seed);
        Ok(self.eps * compute_metric(self.l, &q)?.value)
    }

    fn lattice_cost(&self, frac: &[f64], j: &[i64]) -> Result<f64> {
        let key = (frac.iter().map(|z| z.to_bits()).collect(), j.to_vec());
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let d: Vec<f64> = j.iter().map(|&i| i as f64 * self.step).collect();
        let v = self.cost(frac, &d)?;
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    fn solve(&self, x: &[f64]) -> Result<ControlValue> {
        let n = self.l.dim();
        if x.len() != n {
            return Err(Error::Precondition(format!("x has dimension {}, model {n}", x.len())));
        }
        let frac: Vec<f64> = x.iter().map(|z| z / self.eps - (z / self.eps).floor()).collect();
        let value_at = |j: &[i64]| -> Result<f64> {
            let y: Vec<f64> = x.iter().zip(j).map(|(a, &i)| a - i as f64 * self.step).collect();
            Ok(self.g.eval(&y) + self.lattice_cost(&frac, j)?)
        };

        let stride = ((self.opts.coarse_step / self.step).round() as i64).max(1);
        let half = ((self.radius / (stride as f64 * self.step)).ceil() as i64).max(1);
        let side = (2 * half + 1) as usize;
        let coarse_len = side.pow(n as u32);
        let coarse_index = |flat: usize| -> Vec<i64> {
            let mut rest = flat;
            let mut j = vec![0i64; n];
            for d in (0..n).rev() {
                j[d] = ((rest % side) as i64 - half) * stride;
                rest /= side;
            }
            j
        };
        let mut coarse = Vec::with_capacity(coarse_len);
        for flat in 0..coarse_len {
            coarse.push(value_at(&coarse_index(flat))?);
        }
        let is_local_min = |flat: usize| -> bool {
            let mut rest = flat;
            let mut pow = 1usize;
            for _ in 0..n {
                let i = rest % side;
                rest /= side;
                if i > 0 && coarse[flat - pow] < coarse[flat] {
                    return false;
                }
                if i + 1 < side && coarse[flat + pow] < coarse[flat] {
                    return false;
                }
                pow *= side;
            }
            true
        };
        let mut minima: Vec<usize> = (0..coarse_len).filter(|&f| is_local_min(f)).collect();
        minima.sort_by(|a, b| coarse[*a].total_cmp(&coarse[*b]).then(a.cmp(b)));
        minima.truncate(self.opts.candidates);

        let span = (2 * stride + 1) as usize;
        let mut best: Option<(Vec<i64>, f64)> = None;
        for &m in &minima {
            let center = coarse_index(m);
            for flat in 0..span.pow(n as u32) {
                let mut rest = flat;
                let mut j = center.clone();
                for d in (0..n).rev() {
                    j[d] += (rest % span) as i64 - stride;
                    rest /= span;
                }
                let v = value_at(&j)?;
                if best.as_ref().is_none_or(|(_, b)| v < *b) {
                    best = Some((j, v));
                }
            }
        }
        let (j, mut value) = best.expect("at least one coarse minimum");
        let edge = half * stride;
        let radius_warning = j.iter().any(|&i| i.abs() >= edge);

        let mut d: Vec<f64> = j.iter().map(|&i| i as f64 * self.step).collect();
        let mut failure = None;
        let cycles = if n == 1 { 1 } else { 3 };
        for _ in 0..cycles {
            for axis in 0..n {
                let mut probe = d.clone();
                let (z, v) = golden_min(
                    &mut |s| {
                        probe[axis] = s;
                        let y: Vec<f64> = x.iter().zip(&probe).map(|(a, b)| a - b).collect();
                        match self.cost(&frac, &probe) {
                            Ok(c) => self.g.eval(&y) + c,
                            Err(e) => {
                                failure.get_or_insert(e);
                                f64::INFINITY
                            }
                        }
                    },
                    d[axis] - self.step,
                    d[axis] + self.step,
                    self.opts.tol,
                );
                if v < value {
                    value = v;
                    d[axis] = z;
                }
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(ControlValue {
            value,
            argmin: x.iter().zip(&d).map(|(a, b)| a - b).collect(),
            radius_warning,
        })
    }
}

/// `u^eps(x, t) = inf_y g(y) + eps m(0, t/eps; y/eps, x/eps)`.
///
/// The endpoints are moved by the integer `floor(x / eps)`, which leaves `m`
/// unchanged; so does the optional integer `time_shift` of the window. `y` is scanned on
/// a coarse lattice, the best coarse minima are rescanned on a fine lattice,
/// and the winner is polished by golden section.
pub fn solve_control(
    l: &dyn Lagrangian,
    g: &InitialDatum,
    eps: f64,
    x: &[f64],
    t: f64,
    opts: &ControlOptions,
) -> Result<ControlValue> {
    Solver::new(l, g, eps, t, opts)?.solve(x)
}

/// [`solve_control`] over many points, sharing lattice metric values between
/// points with the same `x / eps mod 1`.
pub fn solve_control_grid(
    l: &dyn Lagrangian,
    g: &InitialDatum,
    eps: f64,
    xs: &[Vec<f64>],
    t: f64,
    opts: &ControlOptions,
) -> Result<Vec<ControlValue>> {
    let solver = Solver::new(l, g, eps, t, opts)?;
    xs.par_iter().map(|x| solver.solve(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HamiltonianModel, LagrangianModel};

    fn sq(amp: f64) -> LagrangianModel {
        LagrangianModel::new(HamiltonianModel::separable_quadratic(amp))
    }

    #[test]
    fn zero_data_free_particle() {
        let l = sq(0.0);
        for eps in [1.0, 0.5, 0.25] {
            for x in [0.0, 0.37] {
                let u = solve_control(&l, &InitialDatum::Zero, eps, &[x], 0.8, &ControlOptions::default()).unwrap();
                assert!(u.value.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn free_particle_is_independent_of_eps() {
        let l = sq(0.0);
        let g = InitialDatum::default();
        let x = 0.3;
        let oracle = (0..=400_000)
            .map(|i| x - 1.0 + 2.0 * i as f64 / 400_000.0)
            .map(|y| g.eval(&[y]) + (x - y) * (x - y) / 2.0)
            .fold(f64::INFINITY, f64::min);
        for eps in [0.5, 0.25] {
            let u = solve_control(&l, &g, eps, &[x], 1.0, &ControlOptions::default()).unwrap();
            assert!((u.value - oracle).abs() < 1e-8, "{eps}: {} vs {oracle}", u.value);
            assert!(!u.radius_warning);
        }
    }

    #[test]
    fn integer_window_shift_is_invisible() {
        let l = sq(1.0);
        let g = InitialDatum::default();
        let base = solve_control(&l, &g, 0.5, &[0.2], 1.0, &ControlOptions::default()).unwrap();
        let shifted = ControlOptions {
            time_shift: 3,
            ..Default::default()
        };
        let moved = solve_control(&l, &g, 0.5, &[0.2], 1.0, &shifted).unwrap();
        assert!((base.value - moved.value).abs() < 1e-7);
    }

    #[test]
    fn grid_matches_pointwise() {
        let l = sq(1.0);
        let g = InitialDatum::default();
        let xs = vec![vec![0.0], vec![0.25], vec![0.5]];
        let opts = ControlOptions::default();
        let batch = solve_control_grid(&l, &g, 0.25, &xs, 1.0, &opts).unwrap();
        for (x, b) in xs.iter().zip(&batch) {
            let single = solve_control(&l, &g, 0.25, x, 1.0, &opts).unwrap();
            assert_eq!(single.value, b.value);
        }
    }

    #[test]
    fn rejects_bad_eps() {
        let l = sq(0.0);
        let g = InitialDatum::Zero;
        assert!(solve_control(&l, &g, 0.0, &[0.0], 1.0, &ControlOptions::default()).is_err());
        assert!(solve_control(&l, &g, 1.5, &[0.0], 1.0, &ControlOptions::default()).is_err());
    }
}
