use serde::{Deserialize, Serialize};

use super::{norm, numeric_conjugate, GrowthBounds, HamiltonianModel};
use crate::{Error, Result};

/// A running cost `L(x, t, v)`, `Z^{n+1}`-periodic in `(x, t)`.
///
/// Derivatives default to central finite differences; implementors with
/// closed forms override them. Matrices are row-major `n x n`, and
/// `hxv[i * n + j] = d^2 L / dx_i dv_j`.
pub trait Lagrangian: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64], t: f64, v: &[f64]) -> f64;

    fn bounds(&self) -> GrowthBounds;

    /// `true` if `L` does not depend on `(x, t)`.
    fn is_translation_invariant(&self) -> bool {
        false
    }

    fn gradient(&self, x: &[f64], t: f64, v: &[f64], gx: &mut [f64], gv: &mut [f64]) {
        let n = self.dim();
        let mut xs = x.to_vec();
        let mut vs = v.to_vec();
        for i in 0..n {
            let h = 1e-6 * x[i].abs().max(1.0);
            xs[i] = x[i] + h;
            let fp = self.value(&xs, t, v);
            xs[i] = x[i] - h;
            let fm = self.value(&xs, t, v);
            xs[i] = x[i];
            gx[i] = (fp - fm) / (2.0 * h);

            let h = 1e-6 * v[i].abs().max(1.0);
            vs[i] = v[i] + h;
            let fp = self.value(x, t, &vs);
            vs[i] = v[i] - h;
            let fm = self.value(x, t, &vs);
            vs[i] = v[i];
            gv[i] = (fp - fm) / (2.0 * h);
        }
    }

    fn hessian(&self, x: &[f64], t: f64, v: &[f64], hxx: &mut [f64], hxv: &mut [f64], hvv: &mut [f64]) {
        let n = self.dim();
        let (mut gxp, mut gvp, mut gxm, mut gvm) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut xs = x.to_vec();
        let mut vs = v.to_vec();
        for i in 0..n {
            let h = 1e-4 * x[i].abs().max(1.0);
            xs[i] = x[i] + h;
            self.gradient(&xs, t, v, &mut gxp, &mut gvp);
            xs[i] = x[i] - h;
            self.gradient(&xs, t, v, &mut gxm, &mut gvm);
            xs[i] = x[i];
            for j in 0..n {
                hxx[i * n + j] = (gxp[j] - gxm[j]) / (2.0 * h);
                hxv[i * n + j] = (gvp[j] - gvm[j]) / (2.0 * h);
            }
            let h = 1e-4 * v[i].abs().max(1.0);
            vs[i] = v[i] + h;
            self.gradient(x, t, &vs, &mut gxp, &mut gvp);
            vs[i] = v[i] - h;
            self.gradient(x, t, &vs, &mut gxm, &mut gvm);
            vs[i] = v[i];
            for j in 0..n {
                hvv[i * n + j] = (gvp[j] - gvm[j]) / (2.0 * h);
            }
        }
        symmetrize(hxx, n);
        symmetrize(hvv, n);
    }
}

fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConjugationMode {
    Analytic,
    NumericConjugate,
}

/// The Legendre transform of a [`HamiltonianModel`].
#[derive(Debug, Clone)]
pub struct LagrangianModel {
    source: HamiltonianModel,
    mode: ConjugationMode,
    /// Fixed conjugation radius; `None` uses the growth-based default.
    radius: Option<f64>,
    grid: usize,
}

pub const DEFAULT_CONJUGATION_GRID: usize = 64;

impl LagrangianModel {
    /// Closed-form conjugate when the family has one, numeric otherwise.
    pub fn new(source: HamiltonianModel) -> Self {
        let mode = if source.has_analytic_conjugate() {
            ConjugationMode::Analytic
        } else {
            ConjugationMode::NumericConjugate
        };
        Self {
            source,
            mode,
            radius: None,
            grid: DEFAULT_CONJUGATION_GRID,
        }
    }

    pub fn analytic(source: HamiltonianModel) -> Result<Self> {
        if !source.has_analytic_conjugate() {
            return Err(Error::Config(format!(
                "family {} has no closed-form conjugate",
                source.family()
            )));
        }
        Ok(Self::new(source))
    }

    pub fn numeric(source: HamiltonianModel) -> Self {
        Self {
            mode: ConjugationMode::NumericConjugate,
            ..Self::new(source)
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = Some(radius);
        self
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }

    pub fn source(&self) -> &HamiltonianModel {
        &self.source
    }

    pub fn mode(&self) -> ConjugationMode {
        self.mode
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// `(2|v| / (alpha0 m0))^{1/(m0-1)} + 1`: beyond this radius the growth
    /// bound makes `p.v - H` decrease.
    pub fn default_radius(&self, v: &[f64]) -> f64 {
        let g = self.source.growth();
        (2.0 * norm(v) / (g.alpha0 * g.m0)).powf(1.0 / (g.m0 - 1.0)) + 1.0
    }

    /// `L(x, t, v) = sup_p (p.v - H(x, t, p))`.
    ///
    /// In numeric mode the supremum is searched on `|p_i| <= R`; a maximizer on
    /// the edge of that box is an error and the caller has to enlarge `R`.
    pub fn legendre_transform(&self, x: &[f64], t: f64, v: &[f64]) -> Result<f64> {
        match self.mode {
            ConjugationMode::Analytic => Ok(self
                .source
                .analytic_lagrangian(x, t, v, None, None)
                .expect("analytic mode requires a closed-form family")),
            ConjugationMode::NumericConjugate => {
                let radius = self.radius.unwrap_or_else(|| self.default_radius(v));
                self.numeric_at(x, t, v, radius).map(|(value, _)| value)
            }
        }
    }

    fn numeric_at(&self, x: &[f64], t: f64, v: &[f64], radius: f64) -> Result<(f64, Vec<f64>)> {
        let r = numeric_conjugate(|p| self.source.hamiltonian(x, t, p), v, radius, self.grid)?;
        Ok((r.value, r.argmax))
    }

    /// Numeric conjugate with the maximizer, enlarging the radius on boundary hits.
    fn numeric_enlarging(&self, x: &[f64], t: f64, v: &[f64]) -> (f64, Vec<f64>) {
        let mut radius = self.radius.unwrap_or_else(|| self.default_radius(v));
        for _ in 0..40 {
            match self.numeric_at(x, t, v, radius) {
                Ok(r) => return r,
                Err(Error::RadiusTooSmall { .. }) => radius *= 2.0,
                Err(_) => break,
            }
        }
        (f64::NAN, vec![f64::NAN; v.len()])
    }
}

impl Lagrangian for LagrangianModel {
    fn dim(&self) -> usize {
        self.source.dim()
    }

    fn bounds(&self) -> GrowthBounds {
        *self.source.growth()
    }

    fn is_translation_invariant(&self) -> bool {
        self.source.is_translation_invariant()
    }

    fn value(&self, x: &[f64], t: f64, v: &[f64]) -> f64 {
        match self.mode {
            ConjugationMode::Analytic => self
                .source
                .analytic_lagrangian(x, t, v, None, None)
                .unwrap_or(f64::NAN),
            ConjugationMode::NumericConjugate => self.numeric_enlarging(x, t, v).0,
        }
    }

    fn gradient(&self, x: &[f64], t: f64, v: &[f64], gx: &mut [f64], gv: &mut [f64]) {
        match self.mode {
            ConjugationMode::Analytic => {
                self.source.analytic_lagrangian(x, t, v, Some((gx, gv)), None);
            }
            ConjugationMode::NumericConjugate => {
                // envelope theorem: dL/dv = p*, dL/dx = -dH/dx at p*
                let (_, p) = self.numeric_enlarging(x, t, v);
                let mut xs = x.to_vec();
                for i in 0..x.len() {
                    gv[i] = p[i];
                    let h = 1e-6;
                    xs[i] = x[i] + h;
                    let fp = self.source.hamiltonian(&xs, t, &p);
                    xs[i] = x[i] - h;
                    let fm = self.source.hamiltonian(&xs, t, &p);
                    xs[i] = x[i];
                    gx[i] = -(fp - fm) / (2.0 * h);
                }
            }
        }
    }

    fn hessian(&self, x: &[f64], t: f64, v: &[f64], hxx: &mut [f64], hxv: &mut [f64], hvv: &mut [f64]) {
        match self.mode {
            ConjugationMode::Analytic => {
                let n = self.dim();
                let (mut gx, mut gv) = (vec![0.0; n], vec![0.0; n]);
                self.source
                    .analytic_lagrangian(x, t, v, Some((&mut gx, &mut gv)), Some((hxx, hxv, hvv)));
            }
            ConjugationMode::NumericConjugate => {
                // default finite differences of the envelope gradient
                struct Fd<'a>(&'a LagrangianModel);
                impl Lagrangian for Fd<'_> {
                    fn dim(&self) -> usize {
                        self.0.dim()
                    }
                    fn value(&self, x: &[f64], t: f64, v: &[f64]) -> f64 {
                        self.0.value(x, t, v)
                    }
                    fn bounds(&self) -> GrowthBounds {
                        self.0.bounds()
                    }
                    fn gradient(&self, x: &[f64], t: f64, v: &[f64], gx: &mut [f64], gv: &mut [f64]) {
                        self.0.gradient(x, t, v, gx, gv)
                    }
                }
                Fd(self).hessian(x, t, v, hxx, hxv, hvv)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;

    #[test]
    fn quadratic_without_potential() {
        let l = LagrangianModel::numeric(HamiltonianModel::separable_quadratic(0.0));
        let value = l.legendre_transform(&[0.3], 0.1, &[1.0]).unwrap();
        assert!((value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn additive_potential_shifts_conjugate() {
        let h = HamiltonianModel::separable_quadratic(1.0);
        let l = LagrangianModel::numeric(h.clone());
        for (x, t, v) in [(0.1, 0.2, 0.3), (0.77, 0.4, -1.6), (0.5, 0.9, 2.2)] {
            let potential = h.hamiltonian(&[x], t, &[0.0]);
            let got = l.legendre_transform(&[x], t, &[v]).unwrap();
            assert!((got - (0.5 * v * v - potential)).abs() < 1e-10);
        }
    }

    #[test]
    fn quartic_power_law() {
        let h = HamiltonianModel::with_params(Family::PowerCoercive, &[("amp", 0.0), ("m0", 4.0)], 1)
            .unwrap();
        let numeric = LagrangianModel::numeric(h.clone());
        let analytic = LagrangianModel::analytic(h).unwrap();
        let a = analytic.legendre_transform(&[0.0], 0.0, &[1.0]).unwrap();
        let b = numeric.legendre_transform(&[0.0], 0.0, &[1.0]).unwrap();
        assert!((a - 0.472_470_393_5).abs() < 1e-9);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn too_small_radius_is_an_error() {
        let l = LagrangianModel::numeric(HamiltonianModel::separable_quadratic(0.0)).with_radius(0.5);
        let r = l.legendre_transform(&[0.0], 0.0, &[2.0]);
        assert!(matches!(r, Err(Error::RadiusTooSmall { .. })));
        // the trait evaluation enlarges instead of failing
        assert!((l.value(&[0.0], 0.0, &[2.0]) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn envelope_gradient_matches_analytic() {
        let h = HamiltonianModel::with_params(Family::PowerCoercive, &[("amp", 0.5), ("m0", 1.5)], 1)
            .unwrap();
        let numeric = LagrangianModel::numeric(h.clone());
        let analytic = LagrangianModel::analytic(h).unwrap();
        let (x, t, v) = ([0.21], 0.64, [0.8]);
        let (mut a, mut b, mut c, mut d) = ([0.0], [0.0], [0.0], [0.0]);
        numeric.gradient(&x, t, &v, &mut a, &mut b);
        analytic.gradient(&x, t, &v, &mut c, &mut d);
        assert!((a[0] - c[0]).abs() < 1e-6);
        assert!((b[0] - d[0]).abs() < 1e-6);
    }
}
