//! `u^eps` by the optimal-control formula and by a monotone Lax-Friedrichs
//! scheme, and sup-norm comparison against the effective solution.

mod control;
mod scheme;

pub use control::{solve_control, solve_control_grid, ControlOptions, ControlValue};
pub use scheme::{solve_scheme, solve_scheme_values, GridSolution, SchemeOptions, MAX_CFL};

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::model::{GrowthBounds, HamiltonianModel, LagrangianModel};
use crate::{Error, Result};

/// Initial data `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialDatum {
    Zero,
    /// `amplitude * mean_i sin(2 pi x_i)`.
    Sine { amplitude: f64 },
    /// `slope * clamp(x_1, -clip, clip)`.
    ClippedLinear { slope: f64, clip: f64 },
}

impl Default for InitialDatum {
    fn default() -> Self {
        InitialDatum::Sine { amplitude: 1.0 }
    }
}

impl InitialDatum {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            InitialDatum::Zero => 0.0,
            InitialDatum::Sine { amplitude } => {
                amplitude * x.iter().map(|z| (TAU * z).sin()).sum::<f64>() / x.len() as f64
            }
            InitialDatum::ClippedLinear { slope, clip } => slope * x[0].clamp(-clip, clip),
        }
    }

    /// `sup g - inf g`.
    pub fn oscillation(&self) -> f64 {
        match *self {
            InitialDatum::Zero => 0.0,
            InitialDatum::Sine { amplitude } => 2.0 * amplitude.abs(),
            InitialDatum::ClippedLinear { slope, clip } => 2.0 * (slope * clip).abs(),
        }
    }

    pub fn is_periodic(&self) -> bool {
        !matches!(self, InitialDatum::ClippedLinear { .. })
    }

    /// Per-axis bound on `|x - y| / t` for minimizers of the control formula.
    ///
    /// Jensen gives `cost >= t (alpha |q|^m - K)`, while staying put costs at
    /// most `K t`, so `alpha |q|^m <= osc(g) / t + 2 K`.
    pub fn search_radius(&self, g: &GrowthBounds, t: f64) -> f64 {
        ((self.oscillation() / t + 2.0 * g.k) / g.alpha).powf(1.0 / g.m)
    }
}

/// Values of a solution on a list of evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl Evaluation {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Precondition(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        Ok(Self { points, values })
    }
}

/// `n` evenly spaced points of `[0, 1)`.
pub fn unit_grid(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![i as f64 / n as f64]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Control,
    Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub epsilon: f64,
    pub sup_error: f64,
    pub argmax: Vec<f64>,
    pub route: Route,
    pub resolution: BTreeMap<String, f64>,
}

/// `max |u^eps - u|` over a shared evaluation grid.
pub fn sup_error(
    ueps: &Evaluation,
    ueff: &Evaluation,
    epsilon: f64,
    route: Route,
    resolution: BTreeMap<String, f64>,
) -> Result<ErrorReport> {
    let same = ueps.points.len() == ueff.points.len()
        && ueps
            .points
            .iter()
            .zip(&ueff.points)
            .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12));
    if !same {
        return Err(Error::Precondition("solutions are evaluated on different grids".into()));
    }
    if ueps.points.is_empty() {
        return Err(Error::Precondition("empty evaluation grid".into()));
    }
    let (idx, err) = ueps
        .values
        .iter()
        .zip(&ueff.values)
        .map(|(a, b)| (a - b).abs())
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if !err.is_finite() {
        return Err(Error::Precondition("non-finite solution values".into()));
    }
    Ok(ErrorReport {
        epsilon,
        sup_error: err,
        argmax: ueps.points[idx].clone(),
        route,
        resolution,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteAgreement {
    pub epsilon: f64,
    pub x: f64,
    pub t: f64,
    pub control: f64,
    /// Scheme values at `dx` and `dx / 2`.
    pub scheme: [f64; 2],
    pub dx: f64,
    /// First-order extrapolation `2 u(dx/2) - u(dx)`.
    pub scheme_extrapolated: f64,
    /// `|u(dx/2) - u(dx)|`, the scheme's own error estimate at `dx / 2`.
    pub scheme_error_estimate: f64,
    /// `|control - scheme_extrapolated|`.
    pub difference: f64,
}

/// Cross-checks the control route against the scheme run at `dx` and `dx / 2`
/// and extrapolated to `dx -> 0` at first order.
#[allow(clippy::too_many_arguments)]
pub fn route_agreement(
    h: &HamiltonianModel,
    g: &InitialDatum,
    eps: f64,
    x: f64,
    t: f64,
    dx: f64,
    control: &ControlOptions,
    scheme: &SchemeOptions,
) -> Result<RouteAgreement> {
    let l = LagrangianModel::new(h.clone());
    let c = solve_control(&l, g, eps, &[x], t, control)?;
    let coarse = solve_scheme(h, g, eps, t, dx, scheme)?.interpolate_final(x);
    let fine = solve_scheme(h, g, eps, t, dx / 2.0, scheme)?.interpolate_final(x);
    let extrapolated = 2.0 * fine - coarse;
    Ok(RouteAgreement {
        epsilon: eps,
        x,
        t,
        control: c.value,
        scheme: [coarse, fine],
        dx,
        scheme_extrapolated: extrapolated,
        scheme_error_estimate: (fine - coarse).abs(),
        difference: (c.value - extrapolated).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(values: &[f64]) -> Evaluation {
        Evaluation::new(unit_grid(values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn identical_inputs_have_zero_error() {
        let a = eval(&[0.1, -0.3, 2.0]);
        let r = sup_error(&a, &a, 0.5, Route::Control, BTreeMap::new()).unwrap();
        assert_eq!(r.sup_error, 0.0);
    }

    #[test]
    fn constant_offset() {
        let a = eval(&[0.1, -0.3, 2.0, 0.0]);
        let b = eval(&[0.1 - 0.25, -0.3 - 0.25, 2.0 - 0.25, -0.25]);
        let r = sup_error(&a, &b, 0.5, Route::Scheme, BTreeMap::new()).unwrap();
        assert!((r.sup_error - 0.25).abs() < 1e-15);
    }

    #[test]
    fn location_of_the_maximum() {
        let r = sup_error(&eval(&[0.0, 1.0, 0.0, 0.0]), &eval(&[0.0; 4]), 0.1, Route::Control, BTreeMap::new())
            .unwrap();
        assert_eq!(r.argmax, vec![0.25]);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = eval(&[0.0; 4]);
        let b = eval(&[0.0; 5]);
        assert!(matches!(
            sup_error(&a, &b, 0.1, Route::Control, BTreeMap::new()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn datum_radius() {
        let g = GrowthBounds::new(0.5, 0.5, 1.0, 2.0).unwrap();
        let r = InitialDatum::default().search_radius(&g, 1.0);
        assert!((r - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(InitialDatum::Zero.eval(&[0.3]), 0.0);
        let lin = InitialDatum::ClippedLinear { slope: 1.0, clip: 2.0 };
        assert_eq!(lin.eval(&[3.0]), 2.0);
        assert!(!lin.is_periodic());
    }

    #[test]
    fn routes_agree_at_coarse_eps() {
        let h = HamiltonianModel::separable_quadratic(1.0);
        let r = route_agreement(
            &h,
            &InitialDatum::default(),
            0.5,
            0.0,
            1.0,
            0.5 / 256.0,
            &ControlOptions::default(),
            &SchemeOptions::default(),
        )
        .unwrap();
        assert!(r.difference < 2e-2, "{r:?}");
        // the extrapolation has to be doing real work here
        assert!(r.scheme_error_estimate > r.difference);
    }
}
