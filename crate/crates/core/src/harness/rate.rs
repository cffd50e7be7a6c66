use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::effective::{hopf_lax_effective, EffectiveLagrangianTable, HopfLaxOptions};
use crate::model::Lagrangian;
use crate::pde::{solve_control_grid, sup_error, unit_grid, ErrorReport, Evaluation, Route};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Slope of `log error` against `log eps`.
    pub exponent: f64,
    /// `log C` in `error ~ C eps^exponent`.
    pub intercept: f64,
    /// Root mean square of the log residuals.
    pub residual: f64,
    pub used: usize,
    pub notes: Vec<String>,
}

/// Ordinary least squares on `(log eps, log error)`.
///
/// Pairs with a nonpositive or non-finite error are left out with a note.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    let mut notes = Vec::new();
    let mut pts = Vec::with_capacity(pairs.len());
    for &(eps, err) in pairs {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Fit(format!("epsilon {eps} is not positive")));
        }
        if err > 0.0 && err.is_finite() {
            pts.push((eps.ln(), err.ln()));
        } else {
            notes.push(format!("excluded eps = {eps}: error {err} is not positive"));
        }
    }
    if pts.len() < 2 {
        return Err(Error::Fit(format!("{} usable pairs, need at least 2", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("all epsilons coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - exponent * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit {
        exponent,
        intercept,
        residual,
        used: pts.len(),
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub horizon: f64,
    pub points: usize,
    pub errors: Vec<ErrorReport>,
    pub fit: RateFit,
    /// `max error / eps`.
    pub c_emp: f64,
    /// `|r_1 - r_2| / max(r_1, r_2)` for `r = error / eps` at the two finest `eps`.
    pub c_variation: f64,
    pub table: EffectiveLagrangianTable,
    /// The Hopf-Lax minimizer touched the edge of the table somewhere.
    pub table_edge_warning: bool,
    /// Points where the control route's minimizer touched its search box.
    pub control_edge_warnings: usize,
}

fn abort(stage: &str, partial: &[ErrorReport], source: Error) -> Error {
    Error::Aborted {
        stage: stage.to_string(),
        partial: Box::new(serde_json::to_value(partial).unwrap_or(serde_json::Value::Null)),
        source: Box::new(source),
    }
}

/// Sup-norm distance between `u^eps` (control route) and the effective
/// solution on `resolution.x_points` points of `[0, 1)` at `t = horizon`, for
/// every configured `eps`, followed by a log-log fit.
///
/// The effective Lagrangian table is built once and shared by all `eps`.
pub fn run_rate_experiment(cfg: &RunConfig) -> Result<RateReport> {
    if cfg.epsilons.len() < 3 {
        return Err(Error::Config(format!("the rate experiment needs at least 3 epsilons, got {}", cfg.epsilons.len())));
    }
    let l = cfg.lagrangian()?;
    if l.dim() != 1 {
        return Err(Error::Config("the rate experiment is one-dimensional".into()));
    }
    let t = cfg.horizon;
    let g = cfg.datum;
    let table = cfg.effective_table(&l).map_err(|e| abort("table", &[], e))?;
    let xs = unit_grid(cfg.resolution.x_points);
    let mut effective = Vec::with_capacity(xs.len());
    let mut table_edge_warning = false;
    for x in &xs {
        let u = hopf_lax_effective(&table, &|y| g.eval(y), x, t, &HopfLaxOptions::default())
            .map_err(|e| abort("effective solution", &[], e))?;
        table_edge_warning |= u.radius_warning;
        effective.push(u.value);
    }
    let ueff = Evaluation::new(xs.clone(), effective)?;

    let control = cfg.control();
    let mut errors: Vec<ErrorReport> = Vec::with_capacity(cfg.epsilons.len());
    let mut control_edge_warnings = 0;
    for &eps in &cfg.epsilons {
        let values = match solve_control_grid(&l, &g, eps, &xs, t, &control) {
            Ok(v) => v,
            Err(e) => return Err(abort(&format!("control route at eps = {eps}"), &errors, e)),
        };
        control_edge_warnings += values.iter().filter(|v| v.radius_warning).count();
        let ueps = Evaluation::new(xs.clone(), values.into_iter().map(|v| v.value).collect())?;
        let resolution = BTreeMap::from([
            ("density".to_string(), control.density),
            ("levels".to_string(), cfg.resolution.levels as f64),
            ("q_points".to_string(), cfg.resolution.q_points as f64),
            ("scan_step".to_string(), control.scan_step.unwrap_or((eps / 8.0).min(1.0 / 32.0))),
        ]);
        match sup_error(&ueps, &ueff, eps, Route::Control, resolution) {
            Ok(r) => errors.push(r),
            Err(e) => return Err(abort(&format!("error at eps = {eps}"), &errors, e)),
        }
    }

    let pairs: Vec<(f64, f64)> = errors.iter().map(|r| (r.epsilon, r.sup_error)).collect();
    let fit = fit_rate(&pairs).map_err(|e| abort("fit", &errors, e))?;
    let c_emp = pairs.iter().map(|(e, err)| err / e).fold(0.0, f64::max);
    let mut finest = pairs.clone();
    finest.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (r1, r2) = (finest[0].1 / finest[0].0, finest[1].1 / finest[1].0);
    let c_variation = (r1 - r2).abs() / r1.max(r2);
    Ok(RateReport {
        horizon: t,
        points: xs.len(),
        errors,
        fit,
        c_emp,
        c_variation,
        table,
        table_edge_warning,
        control_edge_warnings,
    })
}
