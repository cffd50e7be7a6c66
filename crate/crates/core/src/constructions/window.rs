use serde::{Deserialize, Serialize};

use crate::action::{action_between, Curve};
use crate::model::Lagrangian;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheapWindow {
    pub l: f64,
    pub width: f64,
    pub window_action: f64,
    /// `int |eta'|^m` over the window, `m` being the Lagrangian's growth exponent.
    pub velocity_integral: f64,
    pub budget: f64,
}

/// Cheapest of the consecutive windows `[s0 + i w, s0 + (i + 1) w]` tiling the
/// curve's domain; a leftover tail shorter than `w` is ignored.
///
/// The default budget is the averaging bound `(total + K T) / floor(T / w)`,
/// which the minimum can never exceed since `L >= -K` on the tail.
pub fn find_cheap_window(l: &dyn Lagrangian, eta: &Curve, width: f64, budget: Option<f64>) -> Result<CheapWindow> {
    let domain = eta.duration();
    if !(width > 0.0) || domain < width * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "cannot fit a window of width {width} into a domain of length {domain}"
        )));
    }
    let count = ((domain / width) * (1.0 + 1e-12)).floor().max(1.0) as usize;
    let s0 = eta.t_start();
    let g = l.bounds();
    let budget = match budget {
        Some(b) => b,
        None => (crate::action::action_of_curve(l, eta) + g.k * domain) / count as f64,
    };
    let mut best: Option<CheapWindow> = None;
    for i in 0..count {
        let a = s0 + i as f64 * width;
        let b = (a + width).min(eta.t_end());
        let window_action = action_between(l, eta, a, b)?;
        if best.as_ref().is_none_or(|w| window_action < w.window_action) {
            best = Some(CheapWindow {
                l: a,
                width,
                window_action,
                velocity_integral: velocity_integral(&eta.restrict(a, b)?, g.m),
                budget,
            });
        }
    }
    Ok(best.expect("at least one window"))
}

/// `sum_i ds_i |v_i|^m` over the segments of `c`.
pub fn velocity_integral(c: &Curve, m: f64) -> f64 {
    (0..c.segments())
        .map(|i| {
            let ds = c.knots()[i + 1] - c.knots()[i];
            ds * crate::model::norm(&c.velocity(i)).powf(m)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HamiltonianModel, LagrangianModel};

    fn free() -> LagrangianModel {
        LagrangianModel::new(HamiltonianModel::separable_quadratic(0.0))
    }

    #[test]
    fn uniform_line_has_equal_windows() {
        let eta = Curve::straight(0.0, 12.0, &[0.0], &[12.0], 96).unwrap();
        let w = find_cheap_window(&free(), &eta, 6.0, None).unwrap();
        assert!((w.window_action - 3.0).abs() < 1e-12);
        assert!((w.velocity_integral - 6.0).abs() < 1e-12);
        assert!(w.window_action <= w.budget);
    }

    #[test]
    fn burst_in_first_half_is_avoided() {
        let eta = Curve::sample(0.0, 12.0, 96, 1, |s| {
            let burst = if s < 6.0 { (std::f64::consts::PI * s).sin() } else { 0.0 };
            vec![s + burst]
        })
        .unwrap();
        let w = find_cheap_window(&free(), &eta, 6.0, None).unwrap();
        assert_eq!(w.l, 6.0);
        assert!((w.window_action - 3.0).abs() < 1e-12);
    }

    #[test]
    fn short_domain_is_rejected() {
        let eta = Curve::straight(0.0, 5.0, &[0.0], &[1.0], 8).unwrap();
        assert!(matches!(
            find_cheap_window(&free(), &eta, 6.0, None),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn tail_is_ignored() {
        let eta = Curve::straight(0.0, 13.5, &[0.0], &[13.5], 108).unwrap();
        let w = find_cheap_window(&free(), &eta, 6.0, None).unwrap();
        assert!(w.l == 0.0 || w.l == 6.0);
        // budget = (13.5/2 + 0) / 2
        assert!((w.budget - 3.375).abs() < 1e-12);
    }
}
