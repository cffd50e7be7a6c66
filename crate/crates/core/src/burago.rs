//! Disjoint subintervals of a path whose displacements add up to half of
//! the total displacement.
//!
//! In one dimension a single window of half the domain length always works
//! (intermediate value theorem). For `d >= 2` no constructive proof is
//! available, so decompositions are searched for and then certified.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::Curve;
use crate::{Error, Result};

pub const DEFAULT_TOL_1D: f64 = 1e-8;
pub const DEFAULT_TOL_ND: f64 = 1e-6;
pub const DEFAULT_BUDGET: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuragoDecomposition {
    pub intervals: Vec<(f64, f64)>,
    pub k: usize,
    pub residual: f64,
    pub duration_sum: f64,
}

impl BuragoDecomposition {
    /// Wraps arbitrary ordered intervals, computing residual and duration.
    pub fn from_intervals(xi: &Curve, intervals: Vec<(f64, f64)>) -> Self {
        let residual = residual_norm(xi, &intervals);
        let duration_sum = intervals.iter().map(|(a, b)| b - a).sum();
        Self {
            k: intervals.len(),
            intervals,
            residual,
            duration_sum,
        }
    }

    /// The closures of the gaps between consecutive intervals, including the
    /// stretches before the first and after the last one.
    pub fn complement(&self, t_start: f64, t_end: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.k + 1);
        let mut cursor = t_start;
        for &(a, b) in &self.intervals {
            out.push((cursor, a));
            cursor = b;
        }
        out.push((cursor, t_end));
        out
    }
}

/// Largest number of intervals allowed for a path in `R^d`: `ceil((d + 1) / 2)`.
pub fn max_intervals(d: usize) -> usize {
    d / 2 + 1
}

/// `sum_i (xi(b_i) - xi(a_i)) - (xi(end) - xi(start)) / 2`.
fn residual_vector(xi: &Curve, intervals: &[(f64, f64)]) -> Vec<f64> {
    let (start, end) = (xi.start(), xi.end());
    let mut r: Vec<f64> = end.iter().zip(start).map(|(e, s)| -(e - s) / 2.0).collect();
    for &(a, b) in intervals {
        let (pa, pb) = (xi.eval(a), xi.eval(b));
        for d in 0..r.len() {
            r[d] += pb[d] - pa[d];
        }
    }
    r
}

fn residual_norm(xi: &Curve, intervals: &[(f64, f64)]) -> f64 {
    residual_vector(xi, intervals).iter().map(|z| z * z).sum::<f64>().sqrt()
}

/// Scalar paths: a window of length `T / 2` found by bisection on
/// `h(s) = xi(s + T/2) - xi(s) - Delta/2`, which satisfies `h(s0) + h(s0 + T/2) = 0`.
pub fn burago_1d(xi: &Curve, tol: f64) -> Result<BuragoDecomposition> {
    if xi.dim() != 1 {
        return Err(Error::Precondition(format!(
            "burago_1d needs a scalar path, got dimension {}",
            xi.dim()
        )));
    }
    let (s0, half) = (xi.t_start(), xi.duration() / 2.0);
    let delta = xi.end()[0] - xi.start()[0];
    let h = |s: f64| xi.eval(s + half)[0] - xi.eval(s)[0] - delta / 2.0;
    let window = |s: f64| BuragoDecomposition::from_intervals(xi, vec![(s, s + half)]);

    let (mut lo, mut hi) = (s0, s0 + half);
    let (mut hlo, hhi) = (h(lo), h(hi));
    if hlo.abs() <= tol {
        return Ok(window(lo));
    }
    if hhi.abs() <= tol {
        return Ok(window(hi));
    }
    // h is piecewise linear: bisect until the bracket is tiny, then finish
    // with one secant step inside the last linear piece.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let hm = h(mid);
        if hm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if (hm > 0.0) == (hlo > 0.0) {
            lo = mid;
            hlo = hm;
        } else {
            hi = mid;
        }
    }
    let hh = h(hi);
    let s = if hi > lo && hh != hlo {
        (lo - hlo * (hi - lo) / (hh - hlo)).clamp(lo, hi)
    } else {
        lo
    };
    let mut best = window(s);
    for cand in [lo, hi] {
        let w = window(cand);
        if w.residual < best.residual {
            best = w;
        }
    }
    if best.residual > tol {
        return Err(Error::SearchFailure { best: Box::new(best) });
    }
    Ok(best)
}

/// Searches `k = 1, 2, ...` intervals for paths in `R^d`, returning the first
/// decomposition whose residual is within `tol`.
///
/// Each `k` gets an equal share of `budget` coarse residual evaluations;
/// the best coarse candidates are refined by damped least-norm Gauss-Newton
/// steps with a pattern search as fallback. One-dimensional paths are
/// delegated to [`burago_1d`].
pub fn burago_nd(xi: &Curve, tol: f64, budget: usize) -> Result<BuragoDecomposition> {
    if xi.dim() == 1 {
        return burago_1d(xi, tol);
    }
    let kmax = max_intervals(xi.dim());
    let share = (budget / kmax).max(16);
    let mut best: Option<BuragoDecomposition> = None;
    for k in 1..=kmax {
        let found = search_k(xi, k, tol, share);
        if found.residual <= tol {
            return Ok(found);
        }
        if best.as_ref().is_none_or(|b| found.residual < b.residual) {
            best = Some(found);
        }
    }
    Err(Error::SearchFailure {
        best: Box::new(best.expect("at least one k searched")),
    })
}

const REFINED_CANDIDATES: usize = 8;

fn search_k(xi: &Curve, k: usize, tol: f64, evaluations: usize) -> BuragoDecomposition {
    let (t0, t1) = (xi.t_start(), xi.t_end());
    let mut pool: Vec<(f64, Vec<f64>)> = Vec::new();
    let push = |pool: &mut Vec<(f64, Vec<f64>)>, z: Vec<f64>| {
        let r = residual_norm(xi, &pairs(&z));
        pool.push((r, z));
    };
    if k == 1 {
        let g = ((evaluations as f64).sqrt() as usize).max(4);
        for i in 0..=g {
            for j in i..=g {
                let a = t0 + (t1 - t0) * i as f64 / g as f64;
                let b = t0 + (t1 - t0) * j as f64 / g as f64;
                push(&mut pool, vec![a, b]);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6275_7261_676f ^ k as u64);
        for _ in 0..evaluations {
            let mut z: Vec<f64> = (0..2 * k).map(|_| rng.random_range(t0..=t1)).collect();
            z.sort_by(f64::total_cmp);
            push(&mut pool, z);
        }
    }
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<BuragoDecomposition> = None;
    for (_, z) in pool.into_iter().take(REFINED_CANDIDATES) {
        let z = refine(xi, z, tol);
        let dec = BuragoDecomposition::from_intervals(xi, pairs(&z));
        let done = dec.residual <= tol;
        if best.as_ref().is_none_or(|b| dec.residual < b.residual) {
            best = Some(dec);
        }
        if done {
            break;
        }
    }
    best.expect("candidate pool is never empty")
}

fn pairs(z: &[f64]) -> Vec<(f64, f64)> {
    z.chunks(2).map(|c| (c[0], c[1])).collect()
}

/// Clamps endpoints into the domain and into non-decreasing order.
fn project(z: &mut [f64], t0: f64, t1: f64) {
    let mut floor = t0;
    for v in z.iter_mut() {
        *v = v.clamp(floor, t1);
        floor = *v;
    }
}

/// Derivative of the path at `s`, from the segment to the right of `s`
/// (from the left at the final knot).
fn tangent(xi: &Curve, s: f64) -> Vec<f64> {
    xi.velocity(xi.segment_at(s))
}

fn refine(xi: &Curve, mut z: Vec<f64>, tol: f64) -> Vec<f64> {
    let (t0, t1) = (xi.t_start(), xi.t_end());
    let d = xi.dim();
    let m = z.len();
    let target = (tol * 1e-4).max(1e-14);
    let eval = |z: &[f64]| residual_norm(xi, &pairs(z));
    let mut r = eval(&z);
    for _ in 0..200 {
        if r <= target {
            return z;
        }
        let f = residual_vector(xi, &pairs(&z));
        let mut jac = DMatrix::zeros(d, m);
        for (i, &s) in z.iter().enumerate() {
            let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
            for (row, g) in tangent(xi, s).into_iter().enumerate() {
                jac[(row, i)] = sign * g;
            }
        }
        let jjt = &jac * jac.transpose();
        let scale = jjt.diagonal().max().max(1e-300);
        let mut improved = false;
        for damping in [1e-12, 1e-8, 1e-4, 1e-1] {
            let sys = &jjt + DMatrix::identity(d, d) * (damping * scale);
            let Some(chol) = sys.cholesky() else { continue };
            let rhs = DVector::from_vec(f.iter().map(|v| -v).collect());
            let step = jac.transpose() * chol.solve(&rhs);
            let mut lambda = 1.0;
            while lambda > 1e-6 {
                let mut trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a + lambda * b).collect();
                project(&mut trial, t0, t1);
                let rt = eval(&trial);
                if rt < r {
                    z = trial;
                    r = rt;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if improved {
                break;
            }
        }
        if !improved && !pattern_step(&mut z, &mut r, (t1 - t0) / 64.0, t0, t1, &eval) {
            break;
        }
    }
    z
}

/// Compass search over single coordinates; returns whether anything improved.
fn pattern_step(z: &mut Vec<f64>, r: &mut f64, mut step: f64, t0: f64, t1: f64, eval: &dyn Fn(&[f64]) -> f64) -> bool {
    let mut improved = false;
    while step > 1e-13 * (t1 - t0).max(1.0) {
        let mut moved = false;
        for i in 0..z.len() {
            for dir in [1.0, -1.0] {
                let mut trial = z.clone();
                trial[i] += dir * step;
                project(&mut trial, t0, t1);
                let rt = eval(&trial);
                if rt < *r {
                    *z = trial;
                    *r = rt;
                    moved = true;
                }
            }
        }
        if moved {
            improved = true;
        } else {
            step *= 0.5;
        }
    }
    improved
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub pass: bool,
    pub residual: f64,
    pub disjoint: bool,
    pub within_domain: bool,
    pub k_within_bound: bool,
}

/// Rechecks a decomposition: endpoints ordered and inside the domain,
/// intervals pairwise disjoint up to shared endpoints, `k` within
/// `ceil((d + 1) / 2)`, and the displacement residual within `tol`.
pub fn verify_decomposition(xi: &Curve, dec: &BuragoDecomposition, tol: f64) -> Certificate {
    let (t0, t1) = (xi.t_start(), xi.t_end());
    let within_domain = dec.intervals.iter().all(|&(a, b)| a >= t0 && b <= t1 && a <= b);
    let mut sorted = dec.intervals.clone();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let disjoint = sorted.windows(2).all(|w| w[0].1 <= w[1].0);
    let k_within_bound = dec.intervals.len() == dec.k && dec.k <= max_intervals(xi.dim());

    let mut sum = vec![0.0; xi.dim()];
    for &(a, b) in &dec.intervals {
        for (d, (pb, pa)) in xi.eval(b).into_iter().zip(xi.eval(a)).enumerate() {
            sum[d] += pb - pa;
        }
    }
    let residual = sum
        .iter()
        .zip(xi.end().iter().zip(xi.start()))
        .map(|(s, (e, b))| (s - 0.5 * (e - b)).powi(2))
        .sum::<f64>()
        .sqrt();
    Certificate {
        pass: within_domain && disjoint && k_within_bound && residual <= tol,
        residual,
        disjoint,
        within_domain,
        k_within_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn path(f: impl Fn(f64) -> Vec<f64>, dim: usize) -> Curve {
        Curve::sample(0.0, 1.0, 256, dim, f).unwrap()
    }

    #[test]
    fn linear_path_half_window() {
        let dec = burago_1d(&path(|s| vec![s], 1), 1e-8).unwrap();
        let (a, b) = dec.intervals[0];
        assert!((b - a - 0.5).abs() < 1e-15);
        assert!(dec.residual <= 1e-12);
        assert_eq!(dec.k, 1);
    }

    #[test]
    fn sinusoidal_perturbation_forces_zero_start() {
        // h(s) = (sin(2 pi s + pi) - sin(2 pi s)) / (4 pi) vanishes only at 0 and 1/2
        let xi = path(|s| vec![s + (2.0 * PI * s).sin() / (4.0 * PI)], 1);
        let dec = burago_1d(&xi, 1e-8).unwrap();
        assert_eq!(dec.intervals, vec![(0.0, 0.5)]);
    }

    #[test]
    fn constant_path() {
        let dec = burago_1d(&path(|_| vec![3.0], 1), 1e-8).unwrap();
        assert_eq!(dec.intervals, vec![(0.0, 0.5)]);
        assert_eq!(dec.residual, 0.0);
    }

    #[test]
    fn bisection_finds_interior_root() {
        // h(0) = -1/2 + something nonzero, so the root is strictly inside
        let xi = path(|s| vec![(3.0 * s).sin() + s * s], 1);
        let dec = burago_1d(&xi, 1e-8).unwrap();
        assert!(dec.residual <= 1e-8);
        assert!(verify_decomposition(&xi, &dec, 1e-8).pass);
    }

    #[test]
    fn diagonal_path_in_the_plane() {
        let xi = path(|s| vec![s, s], 2);
        let dec = burago_nd(&xi, 1e-6, DEFAULT_BUDGET).unwrap();
        assert_eq!(dec.k, 1);
        assert!(dec.residual <= 1e-6);
        assert!((dec.duration_sum - 0.5).abs() < 1e-6);
    }

    #[test]
    fn closed_loop() {
        let xi = path(|s| vec![(2.0 * PI * s).cos() - 1.0, (2.0 * PI * s).sin()], 2);
        let dec = burago_nd(&xi, 1e-6, DEFAULT_BUDGET).unwrap();
        assert!(dec.k <= 2);
        let cert = verify_decomposition(&xi, &dec, 1e-6);
        assert!(cert.pass, "{cert:?}");
    }

    #[test]
    fn helix_in_three_dimensions() {
        let xi = Curve::sample(0.0, 3.0, 300, 3, |s| {
            vec![(2.0 * PI * s).cos(), (2.0 * PI * s).sin() + 0.3 * s * s, s]
        })
        .unwrap();
        let dec = burago_nd(&xi, 1e-6, DEFAULT_BUDGET).unwrap();
        assert!(dec.k <= 2);
        assert!(verify_decomposition(&xi, &dec, 1e-6).pass);
    }

    #[test]
    fn space_time_lift_halves_the_duration() {
        let eta = Curve::sample(0.0, 8.0, 64, 1, |s| vec![s + 0.7 * (2.0 * PI * s / 3.0).sin()]).unwrap();
        let lift = eta.space_time_lift();
        let dec = burago_nd(&lift, 1e-6, DEFAULT_BUDGET).unwrap();
        assert!((dec.duration_sum - 4.0).abs() < 1e-9, "{}", dec.duration_sum);
    }

    #[test]
    fn overlapping_intervals_fail_certification() {
        let xi = path(|s| vec![s, s], 2);
        let dec = BuragoDecomposition::from_intervals(&xi, vec![(0.0, 0.3), (0.1, 0.3)]);
        let cert = verify_decomposition(&xi, &dec, 1e-6);
        assert!(!cert.disjoint);
        assert!(!cert.pass);
    }

    #[test]
    fn large_residual_fails_certification() {
        let xi = path(|s| vec![s], 1);
        let dec = BuragoDecomposition::from_intervals(&xi, vec![(0.0, 0.8)]);
        let cert = verify_decomposition(&xi, &dec, 1e-6);
        assert!((cert.residual - 0.3).abs() < 1e-12);
        assert!(!cert.pass);
    }

    #[test]
    fn complement_covers_the_gaps() {
        let xi = path(|s| vec![s, 0.0], 2);
        let dec = BuragoDecomposition::from_intervals(&xi, vec![(0.1, 0.3), (0.5, 0.8)]);
        assert_eq!(dec.complement(0.0, 1.0), vec![(0.0, 0.1), (0.3, 0.5), (0.8, 1.0)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn burago_1d_always_certifies(nodes in proptest::collection::vec(-5.0f64..5.0, 2..40), t in 0.1f64..20.0) {
            let n = nodes.len() - 1;
            let knots = (0..=n).map(|i| t * i as f64 / n as f64).collect();
            let xi = Curve::new(knots, nodes, 1).unwrap();
            let dec = burago_1d(&xi, 1e-8).unwrap();
            prop_assert_eq!(dec.k, 1);
            prop_assert!(verify_decomposition(&xi, &dec, 1e-8).pass);
        }
    }
}
