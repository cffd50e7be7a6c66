use serde::{Deserialize, Serialize};

use super::window::{find_cheap_window, CheapWindow};
use super::connector_segments;
use crate::action::{action_of_curve, Curve, CurveBuilder};
use crate::model::Lagrangian;
use crate::{Error, Result};

/// Width of the compressed window and its speed-up factor.
pub const DOUBLING_WIDTH: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    /// Costs of the six pieces, in time order.
    pub costs: [f64; 6],
    pub total: f64,
    pub eta_action: f64,
    /// `total - 2 action(eta)`.
    pub defect: f64,
    /// Offset in `[0, 1)^n` with `y - w` integral.
    pub w: Vec<f64>,
    pub window: CheapWindow,
    pub junction_gap: f64,
    /// Deviation of `mu` from `[0, 2t]`, `mu(0) = eta(0)` and `mu(2t) = 2y`.
    pub endpoint_gap: f64,
}

/// Concatenates `eta` with a periodically shifted copy of itself, compressing
/// one cheap window six-fold to make room for two straight connectors.
///
/// With `T = ceil(t)` the pieces are, on `[0, 2t]`:
///
/// ```text
/// [0, t]              eta
/// [t, T+2]            straight, y -> y - w
/// [T+2, T+l+2]        eta(s - T - 2) + y - w
/// [T+l+2, T+l+3]      eta(6 (s - T - l - 2) + l) + y - w
/// [T+l+3, T+t-3]      eta(s - T + 3) + y - w
/// [T+t-3, 2t]         straight, 2y - w -> 2y
/// ```
pub fn build_doubling_path(l: &dyn Lagrangian, eta: &Curve, y: &[f64]) -> Result<(Curve, DoublingReport)> {
    let n = l.dim();
    let t = eta.duration();
    if eta.t_start() != 0.0 || eta.dim() != n || y.len() != n {
        return Err(Error::Precondition("doubling needs a path on [0, t] in the model's dimension".into()));
    }
    if !(t > DOUBLING_WIDTH) {
        return Err(Error::Precondition(format!("doubling construction needs t > 6, got {t}")));
    }
    let window = find_cheap_window(l, eta, DOUBLING_WIDTH, None)?;
    let lw = window.l;
    let ct = t.ceil();
    let w: Vec<f64> = y.iter().map(|v| v - v.floor()).collect();
    let base: Vec<f64> = y.iter().zip(&w).map(|(a, b)| a - b).collect();
    let end: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
    let far: Vec<f64> = end.iter().zip(&w).map(|(a, b)| a - b).collect();
    let density = eta.segments() as f64 / t;

    let mut pieces: Vec<Option<Curve>> = Vec::with_capacity(6);
    pieces.push(Some(eta.clone()));
    pieces.push(Some(Curve::straight(t, ct + 2.0, y, &base, connector_segments(ct + 2.0 - t, density))?));
    pieces.push(if lw > 0.0 { Some(eta.restrict(0.0, lw)?.shifted(ct + 2.0, &base)) } else { None });
    pieces.push(Some(
        eta.restrict(lw, lw + DOUBLING_WIDTH)?
            .time_compressed(ct + lw + 2.0, DOUBLING_WIDTH)
            .shifted(0.0, &base),
    ));
    pieces.push(if lw + DOUBLING_WIDTH < t {
        Some(eta.restrict(lw + DOUBLING_WIDTH, t)?.shifted(ct - 3.0, &base))
    } else {
        None
    });
    pieces.push(Some(Curve::straight(
        ct + t - 3.0,
        2.0 * t,
        &far,
        &end,
        connector_segments(t - ct + 3.0, density),
    )?));

    let mut builder = CurveBuilder::new(n);
    let mut costs = [0.0; 6];
    for (cost, piece) in costs.iter_mut().zip(&pieces) {
        if let Some(p) = piece {
            builder.push(p)?;
            *cost = action_of_curve(l, p);
        }
    }
    let (mu, junction_gap) = builder.finish()?;
    let endpoint_gap = super::endpoint_gap(&mu, 0.0, eta.start(), 2.0 * t, &end);
    let total = costs.iter().sum();
    let eta_action = costs[0];
    Ok((
        mu,
        DoublingReport {
            costs,
            total,
            eta_action,
            defect: total - 2.0 * eta_action,
            w,
            window,
            junction_gap,
            endpoint_gap,
        },
    ))
}
