use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{cell, CustomTable, GrowthBounds};
use crate::{Error, Result};

const TAU: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `|p|^2/2 + A sin(2 pi t) mean_i sin(2 pi x_i) + c`
    SeparableQuadratic,
    /// `(1 + a mean_i sin(2 pi x_i) cos(2 pi t)) |p|^m0 + c`
    PowerCoercive,
    /// Time-independent `|p|^2/2 + A mean_i sin^2(pi x_i)`.
    Mechanical,
    /// Periodic trilinear interpolation of tabulated `(x, t, p, H)` samples.
    CustomTable,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::SeparableQuadratic => "separable-quadratic",
            Family::PowerCoercive => "power-coercive",
            Family::Mechanical => "mechanical",
            Family::CustomTable => "custom-table",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable-quadratic" => Ok(Family::SeparableQuadratic),
            "power-coercive" => Ok(Family::PowerCoercive),
            "mechanical" => Ok(Family::Mechanical),
            "custom-table" => Ok(Family::CustomTable),
            other => Err(Error::Config(format!("unknown model family `{other}`"))),
        }
    }
}

/// The model block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    /// CSV of `(x, t, p, H)` samples, custom-table only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

fn default_dimension() -> usize {
    1
}

impl ModelSpec {
    pub fn new(family: Family, params: &[(&str, f64)]) -> Self {
        Self {
            family: family.as_str().to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            dimension: 1,
            table: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    SeparableQuadratic { amp: f64, offset: f64 },
    PowerCoercive { amp: f64, m0: f64, offset: f64 },
    Mechanical { amp: f64 },
    CustomTable(Arc<CustomTable>),
}

/// A parametric Hamiltonian `H(x, t, p)`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    family: Family,
    params: BTreeMap<String, f64>,
    dim: usize,
    growth: GrowthBounds,
    kind: Kind,
}

impl HamiltonianModel {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let family: Family = spec.family.parse()?;
        let table = match (family, &spec.table) {
            (Family::CustomTable, Some(path)) => Some(Arc::new(CustomTable::from_csv(path)?)),
            (Family::CustomTable, None) => {
                return Err(Error::Config("custom-table model needs a `table` path".into()))
            }
            _ => None,
        };
        Self::build(family, spec.params.clone(), spec.dimension, table)
    }

    /// `|p|^2/2 + A sin(2 pi x) sin(2 pi t)` in dimension one.
    pub fn separable_quadratic(amp: f64) -> Self {
        Self::build(
            Family::SeparableQuadratic,
            BTreeMap::from([("A".to_string(), amp)]),
            1,
            None,
        )
        .expect("valid separable-quadratic parameters")
    }

    pub fn with_params(family: Family, params: &[(&str, f64)], dim: usize) -> Result<Self> {
        let params = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Self::build(family, params, dim, None)
    }

    pub fn custom_table(table: CustomTable, params: &[(&str, f64)]) -> Result<Self> {
        let params = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Self::build(Family::CustomTable, params, 1, Some(Arc::new(table)))
    }

    fn build(
        family: Family,
        params: BTreeMap<String, f64>,
        dim: usize,
        table: Option<Arc<CustomTable>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        let allowed: &[&str] = match family {
            Family::SeparableQuadratic => &["A", "offset", "k0"],
            Family::PowerCoercive => &["amp", "m0", "offset", "k0"],
            Family::Mechanical => &["A", "k0"],
            Family::CustomTable => &["alpha0", "beta0", "k0", "m0"],
        };
        if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "unknown parameter `{bad}` for family {family} (expected one of {allowed:?})"
            )));
        }
        if let Some((k, v)) = params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("parameter `{k}` is not finite: {v}")));
        }
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);

        let (kind, growth) = match family {
            Family::SeparableQuadratic => {
                let amp = get("A", 1.0);
                let offset = get("offset", 0.0);
                let k0 = get("k0", amp.abs() + offset.abs());
                (
                    Kind::SeparableQuadratic { amp, offset },
                    GrowthBounds::new(0.5, 0.5, k0, 2.0)?,
                )
            }
            Family::PowerCoercive => {
                let amp = get("amp", 0.5);
                let m0 = get("m0", 1.5);
                let offset = get("offset", 0.0);
                let k0 = get("k0", offset.abs());
                if amp.abs() >= 1.0 {
                    return Err(Error::Config(format!(
                        "power-coercive amplitude must satisfy |amp| < 1, got {amp}"
                    )));
                }
                (
                    Kind::PowerCoercive { amp, m0, offset },
                    GrowthBounds::new(1.0 - amp.abs(), 1.0 + amp.abs(), k0, m0)?,
                )
            }
            Family::Mechanical => {
                let amp = get("A", 1.0);
                let k0 = get("k0", amp.abs());
                (Kind::Mechanical { amp }, GrowthBounds::new(0.5, 0.5, k0, 2.0)?)
            }
            Family::CustomTable => {
                if dim != 1 {
                    return Err(Error::Unsupported("custom-table models are one-dimensional".into()));
                }
                let table = table.ok_or_else(|| Error::Config("custom-table needs samples".into()))?;
                let need = |k: &str| {
                    params
                        .get(k)
                        .copied()
                        .ok_or_else(|| Error::Config(format!("custom-table needs parameter `{k}`")))
                };
                let growth = GrowthBounds::new(need("alpha0")?, need("beta0")?, need("k0")?, need("m0")?)?;
                (Kind::CustomTable(table), growth)
            }
        };
        Ok(Self {
            family,
            params,
            dim,
            growth,
            kind,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth(&self) -> &GrowthBounds {
        &self.growth
    }

    pub fn has_analytic_conjugate(&self) -> bool {
        !matches!(self.kind, Kind::CustomTable(_))
    }

    /// True when `H` does not depend on `(x, t)`.
    pub fn is_translation_invariant(&self) -> bool {
        match &self.kind {
            Kind::SeparableQuadratic { amp, .. } | Kind::Mechanical { amp } => *amp == 0.0,
            Kind::PowerCoercive { amp, .. } => *amp == 0.0,
            Kind::CustomTable(_) => false,
        }
    }

    /// Evaluates `H(x, t, p)`, reducing `(x, t)` to the unit cell first.
    pub fn hamiltonian(&self, x: &[f64], t: f64, p: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(p.len(), self.dim);
        let t = cell(t);
        let p2: f64 = p.iter().map(|z| z * z).sum();
        match &self.kind {
            Kind::SeparableQuadratic { amp, offset } => {
                0.5 * p2 + amp * (TAU * t).sin() * mean_sin(x) + offset
            }
            Kind::PowerCoercive { amp, m0, offset } => {
                let a = 1.0 + amp * mean_sin(x) * (TAU * t).cos();
                a * p2.sqrt().powf(*m0) + offset
            }
            Kind::Mechanical { amp } => 0.5 * p2 + amp * mean_sin2_half(x),
            Kind::CustomTable(table) => table.eval(cell(x[0]), t, p[0]),
        }
    }

    /// Closed-form conjugate and its derivatives, when the family has one.
    ///
    /// Writes `(L, dL/dx, dL/dv)` and, if `hess` is given, the blocks
    /// `(L_xx, L_xv, L_vv)` as row-major `n x n` matrices.
    pub(crate) fn analytic_lagrangian(
        &self,
        x: &[f64],
        t: f64,
        v: &[f64],
        grad: Option<(&mut [f64], &mut [f64])>,
        hess: Option<(&mut [f64], &mut [f64], &mut [f64])>,
    ) -> Option<f64> {
        let n = self.dim;
        let t = cell(t);
        let inv_n = 1.0 / n as f64;
        match &self.kind {
            Kind::SeparableQuadratic { amp, offset } => {
                let st = (TAU * t).sin();
                let v2: f64 = v.iter().map(|z| z * z).sum();
                let value = 0.5 * v2 - amp * st * mean_sin(x) - offset;
                if let Some((gx, gv)) = grad {
                    for i in 0..n {
                        gx[i] = -amp * st * inv_n * TAU * (TAU * x[i]).cos();
                        gv[i] = v[i];
                    }
                }
                if let Some((hxx, hxv, hvv)) = hess {
                    zero(hxx);
                    zero(hxv);
                    zero(hvv);
                    for i in 0..n {
                        hxx[i * n + i] = amp * st * inv_n * TAU * TAU * (TAU * x[i]).sin();
                        hvv[i * n + i] = 1.0;
                    }
                }
                Some(value)
            }
            Kind::Mechanical { amp } => {
                let v2: f64 = v.iter().map(|z| z * z).sum();
                let value = 0.5 * v2 - amp * mean_sin2_half(x);
                if let Some((gx, gv)) = grad {
                    for i in 0..n {
                        gx[i] = -amp * inv_n * PI * (TAU * x[i]).sin();
                        gv[i] = v[i];
                    }
                }
                if let Some((hxx, hxv, hvv)) = hess {
                    zero(hxx);
                    zero(hxv);
                    zero(hvv);
                    for i in 0..n {
                        hxx[i * n + i] = -amp * inv_n * TAU * PI * (TAU * x[i]).cos();
                        hvv[i * n + i] = 1.0;
                    }
                }
                Some(value)
            }
            Kind::PowerCoercive { amp, m0, offset } => {
                // L = kappa * a^{-(m-1)} |v|^m - c with kappa = 1 / (m m0^{m-1})
                let m = self.growth.m;
                let kappa = 1.0 / (m * m0.powf(m - 1.0));
                let ct = (TAU * t).cos();
                let a = 1.0 + amp * mean_sin(x) * ct;
                let b = a.powf(-(m - 1.0));
                let speed = v.iter().map(|z| z * z).sum::<f64>().sqrt();
                let phi = speed.powf(m);
                let value = kappa * b * phi - offset;
                if grad.is_none() && hess.is_none() {
                    return Some(value);
                }
                let mut da = vec![0.0; n];
                for i in 0..n {
                    da[i] = amp * ct * inv_n * TAU * (TAU * x[i]).cos();
                }
                let db: Vec<f64> = da.iter().map(|d| -(m - 1.0) * a.powf(-m) * d).collect();
                // grad |v|^m = m |v|^{m-2} v, regularized at rest
                let s = speed.max(1e-12);
                let dphi: Vec<f64> = v.iter().map(|z| m * s.powf(m - 2.0) * z).collect();
                if let Some((gx, gv)) = grad {
                    for i in 0..n {
                        gx[i] = kappa * phi * db[i];
                        gv[i] = kappa * b * dphi[i];
                    }
                }
                if let Some((hxx, hxv, hvv)) = hess {
                    for i in 0..n {
                        for j in 0..n {
                            let daa = if i == j {
                                -amp * ct * inv_n * TAU * TAU * (TAU * x[i]).sin()
                            } else {
                                0.0
                            };
                            let dbb = (m - 1.0) * m * a.powf(-m - 1.0) * da[i] * da[j]
                                - (m - 1.0) * a.powf(-m) * daa;
                            hxx[i * n + j] = kappa * phi * dbb;
                            hxv[i * n + j] = kappa * db[i] * dphi[j];
                            let delta = if i == j { 1.0 } else { 0.0 };
                            hvv[i * n + j] = kappa
                                * b
                                * m
                                * s.powf(m - 2.0)
                                * (delta + (m - 2.0) * v[i] * v[j] / (s * s));
                        }
                    }
                }
                Some(value)
            }
            Kind::CustomTable(_) => None,
        }
    }
}

fn mean_sin(x: &[f64]) -> f64 {
    x.iter().map(|&z| (TAU * cell(z)).sin()).sum::<f64>() / x.len() as f64
}

fn mean_sin2_half(x: &[f64]) -> f64 {
    x.iter().map(|&z| (PI * cell(z)).sin().powi(2)).sum::<f64>() / x.len() as f64
}

fn zero(a: &mut [f64]) {
    a.iter_mut().for_each(|z| *z = 0.0);
}
