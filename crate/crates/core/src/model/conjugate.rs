//! Numeric Legendre-Fenchel conjugation: per-axis grid scan followed by
//! golden-section refinement, cycled over the axes until the maximizer
//! stops moving.

use crate::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;
const MAX_CYCLES: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateMax {
    pub value: f64,
    pub argmax: Vec<f64>,
}

/// Maximizes a concave `f` over the box `[-radius, radius]^dim`.
///
/// Fails with [`Error::RadiusTooSmall`] when the grid maximum along some axis
/// sits on the box boundary, since the true supremum may then lie outside.
pub fn maximize_concave<F>(f: F, dim: usize, radius: f64, grid: usize) -> Result<ConjugateMax>
where
    F: Fn(&[f64]) -> f64,
{
    if !(radius > 0.0 && radius.is_finite()) || grid < 3 || dim == 0 {
        return Err(Error::Precondition(format!(
            "conjugation needs radius > 0 and grid >= 3 (radius {radius}, grid {grid})"
        )));
    }
    let step = 2.0 * radius / (grid - 1) as f64;
    let mut p = vec![0.0; dim];
    let mut best = f(&p);
    for _ in 0..MAX_CYCLES {
        let mut moved = 0.0_f64;
        for axis in 0..dim {
            let old = p[axis];
            let mut eval = |z: f64| {
                p[axis] = z;
                f(&p)
            };
            let (mut bi, mut bv) = (0usize, f64::NEG_INFINITY);
            for i in 0..grid {
                let val = eval(-radius + i as f64 * step);
                if val > bv {
                    bi = i;
                    bv = val;
                }
            }
            if bi == 0 || bi == grid - 1 {
                return Err(Error::RadiusTooSmall {
                    radius,
                    argmax: -radius + bi as f64 * step,
                });
            }
            let lo = -radius + (bi - 1) as f64 * step;
            let hi = lo + 2.0 * step;
            let (z, val) = golden_max(&mut eval, lo, hi, 1e-13 * radius.max(1.0));
            let (z, val) = if val >= bv { (z, val) } else { (-radius + bi as f64 * step, bv) };
            p[axis] = z;
            moved = moved.max((z - old).abs());
            best = val;
        }
        if dim == 1 || moved < 1e-12 * radius.max(1.0) {
            break;
        }
    }
    Ok(ConjugateMax {
        value: best,
        argmax: p,
    })
}

/// `sup_p (p . v - h(p))` for a convex `h`.
pub fn numeric_conjugate<H>(h: H, v: &[f64], radius: f64, grid: usize) -> Result<ConjugateMax>
where
    H: Fn(&[f64]) -> f64,
{
    maximize_concave(
        |p| p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - h(p),
        v.len(),
        radius,
        grid,
    )
}

pub(crate) fn golden_max<F: FnMut(f64) -> f64>(f: &mut F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Golden-section minimization of `f` on `[lo, hi]`.
pub(crate) fn golden_min<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (x, v) = golden_max(&mut |z| -f(z), lo, hi, tol);
    (x, -v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_self_conjugate() {
        let r = numeric_conjugate(|p| 0.5 * p[0] * p[0], &[1.0], 3.0, 64).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
        assert!((r.argmax[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quartic_against_dense_grid() {
        // independent oracle: brute-force maximization on 10^6 points in [-2, 2]
        let oracle = (0..=1_000_000)
            .map(|i| -2.0 + 4.0 * i as f64 / 1e6)
            .map(|p: f64| p - p.powi(4))
            .fold(f64::NEG_INFINITY, f64::max);
        let r = numeric_conjugate(|p| p[0].powi(4), &[1.0], 2.0, 64).unwrap();
        assert!((r.value - oracle).abs() < 1e-9, "{} vs {oracle}", r.value);
        assert!((r.value - 0.472_470_393_5).abs() < 1e-8);
    }

    #[test]
    fn boundary_argmax_is_reported() {
        let r = numeric_conjugate(|p| 0.5 * p[0] * p[0], &[5.0], 2.0, 32);
        assert!(matches!(r, Err(Error::RadiusTooSmall { .. })));
    }

    #[test]
    fn two_dimensional_coordinate_cycles() {
        let h = |p: &[f64]| 0.5 * (p[0] * p[0] + p[1] * p[1]) + 0.3 * p[0] * p[1];
        // conjugate of 1/2 p^T Q p is 1/2 v^T Q^{-1} v
        let v = [0.7, -0.4];
        let det = 1.0 - 0.09;
        let expect = 0.5 * (v[0] * v[0] - 0.6 * v[0] * v[1] + v[1] * v[1]) / det;
        let r = numeric_conjugate(h, &v, 4.0, 64).unwrap();
        assert!((r.value - expect).abs() < 1e-10, "{} vs {expect}", r.value);
    }
}
