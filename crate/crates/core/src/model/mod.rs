//! Hamiltonian families, their Legendre-transformed Lagrangians and the
//! growth/periodicity metadata every other module leans on.
//!
//! All Hamiltonians here are `Z^{n+1}`-periodic in `(x, t)`, convex and
//! coercive in `p`:
//!
//! ```text
//! alpha0 |p|^m0 - K0 <= H(x,t,p) <= beta0 |p|^m0 + K0
//! ```
//!
//! The conjugate Lagrangian then satisfies the same kind of sandwich with
//! exponent `m = m0 / (m0 - 1)` and constants derived in [`GrowthBounds`].

mod conjugate;
mod family;
mod lagrangian;
mod table;
mod verify;

pub use conjugate::{maximize_concave, numeric_conjugate, ConjugateMax};
pub(crate) use conjugate::golden_min;
pub use family::{Family, HamiltonianModel, ModelSpec};
pub use lagrangian::{ConjugationMode, Lagrangian, LagrangianModel};
pub use table::CustomTable;
pub use verify::{
    legendre_round_trip, verify_lagrangian, verify_model, LagrangianReport, LegendreCheck, ModelReport, PropertyCheck,
};

use serde::{Deserialize, Serialize};

/// Polynomial growth constants of a Hamiltonian and of its conjugate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthBounds {
    pub alpha0: f64,
    pub beta0: f64,
    pub k0: f64,
    pub m0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub m: f64,
}

impl GrowthBounds {
    /// Derives the Lagrangian constants by conjugating the two power bounds.
    ///
    /// The conjugate of `c |p|^m0` is `(c m0)^{-1/(m0-1)} |v|^m / m`; the lower
    /// bound on `H` turns into the upper bound on `L` and vice versa, while the
    /// additive constant carries over unchanged.
    pub fn new(alpha0: f64, beta0: f64, k0: f64, m0: f64) -> crate::Result<Self> {
        if !(alpha0 > 0.0 && beta0 >= alpha0 && k0 >= 0.0 && m0 > 1.0) {
            return Err(crate::Error::Config(format!(
                "invalid growth constants alpha0={alpha0} beta0={beta0} K0={k0} m0={m0}"
            )));
        }
        let m = m0 / (m0 - 1.0);
        let conj = |c: f64| (c * m0).powf(-1.0 / (m0 - 1.0)) / m;
        Ok(Self {
            alpha0,
            beta0,
            k0,
            m0,
            alpha: conj(beta0),
            beta: conj(alpha0),
            k: k0,
            m,
        })
    }

    /// Lower/upper sandwich for `H` at `|p|`.
    pub fn hamiltonian_envelope(&self, p_norm: f64) -> (f64, f64) {
        let pm = p_norm.powf(self.m0);
        (self.alpha0 * pm - self.k0, self.beta0 * pm + self.k0)
    }

    /// Lower/upper sandwich for `L` at `|v|`.
    pub fn lagrangian_envelope(&self, v_norm: f64) -> (f64, f64) {
        let vm = v_norm.powf(self.m);
        (self.alpha * vm - self.k, self.beta * vm + self.k)
    }
}

/// Reduces a coordinate to the unit cell `[0, 1)`.
#[inline]
pub(crate) fn cell(z: f64) -> f64 {
    let r = z - z.floor();
    // z slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|z| z * z).sum::<f64>().sqrt()
}
