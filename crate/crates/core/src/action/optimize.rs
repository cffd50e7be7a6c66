//! Descent on the discrete action over the interior nodes of a curve.
//!
//! The discrete action couples only neighbouring nodes, so its Hessian is
//! block tridiagonal. Each step solves `(H + mu I) d = -g` by a block LDL^T
//! sweep, raising `mu` until the shifted matrix is positive definite, then
//! backtracks along `d` until the Armijo condition holds.

use nalgebra::DMatrix;

use super::Curve;
use crate::model::Lagrangian;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Stop once the Euclidean norm of the action gradient drops below this.
    pub grad_tol: f64,
    pub max_iterations: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-7,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Descent {
    pub curve: Curve,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Reasons a descent run had to stop before converging.
#[derive(Debug, Clone)]
pub(crate) struct Diverged {
    pub iterations: usize,
    pub last_action: f64,
    pub gradient_norm: f64,
}

struct Workspace {
    n: usize,
    gx: Vec<f64>,
    gv: Vec<f64>,
    hxx: Vec<f64>,
    hxv: Vec<f64>,
    hvv: Vec<f64>,
    mid: Vec<f64>,
    vel: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            n,
            gx: vec![0.0; n],
            gv: vec![0.0; n],
            hxx: vec![0.0; n * n],
            hxv: vec![0.0; n * n],
            hvv: vec![0.0; n * n],
            mid: vec![0.0; n],
            vel: vec![0.0; n],
        }
    }

    fn load_segment(&mut self, c: &Curve, i: usize) -> (f64, f64) {
        let (s0, s1) = (c.knots()[i], c.knots()[i + 1]);
        let dt = s1 - s0;
        let (a, b) = (c.point(i), c.point(i + 1));
        for d in 0..self.n {
            self.mid[d] = 0.5 * (a[d] + b[d]);
            self.vel[d] = (b[d] - a[d]) / dt;
        }
        (dt, 0.5 * (s0 + s1))
    }
}

/// Midpoint-rule action of `c`.
pub(crate) fn discrete_action(l: &dyn Lagrangian, c: &Curve) -> f64 {
    let mut ws = Workspace::new(c.dim());
    let mut total = 0.0;
    for i in 0..c.segments() {
        let (dt, tm) = ws.load_segment(c, i);
        total += dt * l.value(&ws.mid, tm, &ws.vel);
    }
    total
}

/// Gradient with respect to every node (endpoints included) and, optionally,
/// the block tridiagonal Hessian over the interior nodes.
///
/// `diag[k]` and `upper[k]` are the blocks of interior node `k + 1`: its
/// self-coupling and its coupling to interior node `k + 2`.
fn derivatives(
    l: &dyn Lagrangian,
    c: &Curve,
    ws: &mut Workspace,
    grad: &mut [f64],
    mut hess: Option<(&mut [f64], &mut [f64])>,
) -> f64 {
    let n = ws.n;
    let nn = n * n;
    let segs = c.segments();
    grad.iter_mut().for_each(|z| *z = 0.0);
    if let Some((diag, upper)) = hess.as_mut() {
        diag.iter_mut().for_each(|z| *z = 0.0);
        upper.iter_mut().for_each(|z| *z = 0.0);
    }
    let mut total = 0.0;
    for i in 0..segs {
        let (dt, tm) = ws.load_segment(c, i);
        total += dt * l.value(&ws.mid, tm, &ws.vel);
        let (mid, vel) = (std::mem::take(&mut ws.mid), std::mem::take(&mut ws.vel));
        l.gradient(&mid, tm, &vel, &mut ws.gx, &mut ws.gv);
        for d in 0..n {
            grad[i * n + d] += 0.5 * dt * ws.gx[d] - ws.gv[d];
            grad[(i + 1) * n + d] += 0.5 * dt * ws.gx[d] + ws.gv[d];
        }
        let Some((diag, upper)) = hess.as_mut() else {
            ws.mid = mid;
            ws.vel = vel;
            continue;
        };
        l.hessian(&mid, tm, &vel, &mut ws.hxx, &mut ws.hxv, &mut ws.hvv);
        ws.mid = mid;
        ws.vel = vel;
        let inv = 1.0 / dt;
        for r in 0..n {
            for col in 0..n {
                let xx = 0.25 * dt * ws.hxx[r * n + col];
                let xv = 0.5 * ws.hxv[r * n + col];
                let vx = 0.5 * ws.hxv[col * n + r];
                let vv = inv * ws.hvv[r * n + col];
                // left node a = i, right node b = i + 1
                if i >= 1 {
                    diag[(i - 1) * nn + r * n + col] += xx - xv - vx + vv;
                }
                if i + 1 < segs {
                    diag[i * nn + r * n + col] += xx + xv + vx + vv;
                }
                if i >= 1 && i + 1 < segs {
                    upper[(i - 1) * nn + r * n + col] += xx + xv - vx - vv;
                }
            }
        }
    }
    total
}

/// Solves the shifted block tridiagonal system, or `None` if it is not
/// positive definite.
fn solve_tridiagonal(n: usize, diag: &[f64], upper: &[f64], shift: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let blocks = rhs.len() / n;
    if n == 1 {
        return solve_scalar(diag, upper, shift, rhs);
    }
    let nn = n * n;
    let block = |src: &[f64], k: usize| DMatrix::from_row_slice(n, n, &src[k * nn..(k + 1) * nn]);
    let mut factors = Vec::with_capacity(blocks);
    let mut z: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(blocks);
    for k in 0..blocks {
        let mut s = block(diag, k) + DMatrix::identity(n, n) * shift;
        let mut r = nalgebra::DVector::from_column_slice(&rhs[k * n..(k + 1) * n]);
        if k > 0 {
            let b = block(upper, k - 1);
            let prev: &nalgebra::linalg::Cholesky<f64, nalgebra::Dyn> = &factors[k - 1];
            s -= b.transpose() * prev.solve(&b);
            r -= b.transpose() * prev.solve(&z[k - 1]);
        }
        let chol = s.cholesky()?;
        factors.push(chol);
        z.push(r);
    }
    let mut d = vec![nalgebra::DVector::zeros(n); blocks];
    for k in (0..blocks).rev() {
        let mut r = z[k].clone();
        if k + 1 < blocks {
            r -= block(upper, k) * &d[k + 1];
        }
        d[k] = factors[k].solve(&r);
    }
    Some(d.iter().flat_map(|v| v.iter().copied()).collect())
}

fn solve_scalar(diag: &[f64], upper: &[f64], shift: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let m = rhs.len();
    let mut piv = vec![0.0; m];
    let mut z = vec![0.0; m];
    for k in 0..m {
        let mut s = diag[k] + shift;
        let mut r = rhs[k];
        if k > 0 {
            s -= upper[k - 1] * upper[k - 1] / piv[k - 1];
            r -= upper[k - 1] * z[k - 1] / piv[k - 1];
        }
        if !(s > 0.0) {
            return None;
        }
        piv[k] = s;
        z[k] = r;
    }
    let mut d = vec![0.0; m];
    for k in (0..m).rev() {
        let mut r = z[k];
        if k + 1 < m {
            r -= upper[k] * d[k + 1];
        }
        d[k] = r / piv[k];
    }
    Some(d)
}

/// Runs the descent from `start`, keeping its endpoints fixed.
pub(crate) fn descend(l: &dyn Lagrangian, start: Curve, opts: &OptimizerOptions) -> Result<Descent, Diverged> {
    let n = start.dim();
    let segs = start.segments();
    let interior = segs.saturating_sub(1);
    let mut ws = Workspace::new(n);
    let mut curve = start;
    let mut grad = vec![0.0; (segs + 1) * n];
    let mut diag = vec![0.0; interior * n * n];
    let mut upper = vec![0.0; interior.saturating_sub(1) * n * n];
    let (mut grad_trial, mut diag_trial, mut upper_trial) = (grad.clone(), diag.clone(), upper.clone());

    let mut value = derivatives(l, &curve, &mut ws, &mut grad, Some((&mut diag, &mut upper)));
    if !value.is_finite() {
        return Err(Diverged {
            iterations: 0,
            last_action: value,
            gradient_norm: f64::NAN,
        });
    }
    if interior == 0 {
        return Ok(Descent {
            curve,
            value,
            grad_norm: 0.0,
            iterations: 0,
        });
    }
    let interior_grad = |g: &[f64]| g[n..segs * n].to_vec();
    let mut g = interior_grad(&grad);
    let mut grad_norm = norm(&g);
    let scale = diag
        .chunks(n * n)
        .map(|b| (0..n).map(|d| b[d * n + d].abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut shift = 0.0_f64;
    let mut iterations = 0;
    let mut trial = curve.clone();

    while grad_norm > opts.grad_tol && iterations < opts.max_iterations {
        iterations += 1;
        let rhs: Vec<f64> = g.iter().map(|z| -z).collect();
        let mut step = None;
        for _ in 0..60 {
            if let Some(d) = solve_tridiagonal(n, &diag, &upper, shift, &rhs) {
                step = Some(d);
                break;
            }
            shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
        }
        let Some(dir) = step else { break };
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
            continue;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut evaluated = false;
        let noise = 1e-12 * value.abs().max(1.0);
        for _ in 0..60 {
            {
                let nodes = trial.nodes_mut();
                let base = curve.nodes();
                for (k, d) in dir.iter().enumerate() {
                    nodes[n + k] = base[n + k] + alpha * d;
                }
            }
            let v = discrete_action(l, &trial);
            if v.is_finite() && v <= value + 1e-4 * alpha * slope {
                accepted = Some(v);
                break;
            }
            // Near convergence the predicted decrease drops below the
            // resolution of the action; judge the full step by the gradient.
            if alpha == 1.0 && v.is_finite() && v <= value + noise {
                derivatives(l, &trial, &mut ws, &mut grad_trial, Some((&mut diag_trial, &mut upper_trial)));
                if norm(&grad_trial[n..segs * n]) < 0.5 * grad_norm {
                    accepted = Some(v);
                    evaluated = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if accepted.is_none() {
            // no decrease representable along the direction
            if shift > 1e6 * scale {
                break;
            }
            shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
            continue;
        }
        std::mem::swap(&mut curve, &mut trial);
        trial.nodes_mut().copy_from_slice(curve.nodes());
        if evaluated {
            std::mem::swap(&mut grad, &mut grad_trial);
            std::mem::swap(&mut diag, &mut diag_trial);
            std::mem::swap(&mut upper, &mut upper_trial);
            value = accepted.expect("accepted step");
        } else {
            value = derivatives(l, &curve, &mut ws, &mut grad, Some((&mut diag, &mut upper)));
        }
        if !value.is_finite() {
            return Err(Diverged {
                iterations,
                last_action: value,
                gradient_norm: grad_norm,
            });
        }
        g = interior_grad(&grad);
        grad_norm = norm(&g);
        if alpha == 1.0 {
            shift *= 0.1;
            if shift < 1e-14 * scale {
                shift = 0.0;
            }
        }
    }
    Ok(Descent {
        curve,
        value,
        grad_norm,
        iterations,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|z| z * z).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, HamiltonianModel, LagrangianModel};

    fn hessian_fd_check(l: &dyn Lagrangian, c: &Curve) {
        let n = c.dim();
        let segs = c.segments();
        let interior = segs - 1;
        let mut ws = Workspace::new(n);
        let mut grad = vec![0.0; (segs + 1) * n];
        let mut diag = vec![0.0; interior * n * n];
        let mut upper = vec![0.0; (interior - 1) * n * n];
        derivatives(l, c, &mut ws, &mut grad, Some((&mut diag, &mut upper)));
        let h = 1e-6;
        for node in 1..segs {
            for d in 0..n {
                let idx = node * n + d;
                let mut cp = c.clone();
                cp.nodes_mut()[idx] += h;
                let mut cm = c.clone();
                cm.nodes_mut()[idx] -= h;
                let fd = (discrete_action(l, &cp) - discrete_action(l, &cm)) / (2.0 * h);
                assert!((fd - grad[idx]).abs() < 1e-6, "gradient {fd} vs {}", grad[idx]);
                let (mut gp, mut gm) = (vec![0.0; grad.len()], vec![0.0; grad.len()]);
                derivatives(l, &cp, &mut ws, &mut gp, None);
                derivatives(l, &cm, &mut ws, &mut gm, None);
                let k = node - 1;
                for e in 0..n {
                    let same = (gp[node * n + e] - gm[node * n + e]) / (2.0 * h);
                    assert!((same - diag[k * n * n + e * n + d]).abs() < 1e-4);
                    if node + 1 < segs {
                        let next = (gp[(node + 1) * n + e] - gm[(node + 1) * n + e]) / (2.0 * h);
                        assert!((next - upper[k * n * n + d * n + e]).abs() < 1e-4);
                    }
                }
            }
        }
    }

    #[test]
    fn hessian_blocks_match_finite_differences() {
        let h = HamiltonianModel::with_params(Family::SeparableQuadratic, &[("A", 1.0)], 2).unwrap();
        let l = LagrangianModel::new(h);
        let c = Curve::sample(0.0, 1.3, 7, 2, |s| vec![s.sin(), 0.4 * s * s]).unwrap();
        hessian_fd_check(&l, &c);

        let h = HamiltonianModel::with_params(Family::PowerCoercive, &[("amp", 0.4)], 1).unwrap();
        let l = LagrangianModel::new(h);
        let c = Curve::sample(0.2, 2.0, 9, 1, |s| vec![s + 0.3 * (3.0 * s).cos()]).unwrap();
        hessian_fd_check(&l, &c);
    }

    #[test]
    fn block_and_scalar_solvers_agree() {
        let diag = [4.0, 5.0, 6.0];
        let upper = [1.0, -2.0];
        let rhs = [1.0, 2.0, 3.0];
        let a = solve_scalar(&diag, &upper, 0.0, &rhs).unwrap();
        // n = 2 with a decoupled second coordinate duplicating the scalar system
        let mut d2 = vec![0.0; 12];
        let mut u2 = vec![0.0; 8];
        for k in 0..3 {
            d2[k * 4] = diag[k];
            d2[k * 4 + 3] = diag[k];
        }
        for k in 0..2 {
            u2[k * 4] = upper[k];
            u2[k * 4 + 3] = upper[k];
        }
        let rhs2 = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let b = solve_tridiagonal(2, &d2, &u2, 0.0, &rhs2).unwrap();
        for k in 0..3 {
            assert!((a[k] - b[2 * k]).abs() < 1e-12);
            assert!((a[k] - b[2 * k + 1]).abs() < 1e-12);
        }
        // residual check of the scalar solve
        let r0 = diag[0] * a[0] + upper[0] * a[1] - rhs[0];
        let r1 = upper[0] * a[0] + diag[1] * a[1] + upper[1] * a[2] - rhs[1];
        assert!(r0.abs() < 1e-12 && r1.abs() < 1e-12);
    }

    #[test]
    fn indefinite_system_is_refused() {
        assert!(solve_scalar(&[1.0, -1.0], &[0.0], 0.0, &[1.0, 1.0]).is_none());
    }
}
