use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{norm, HamiltonianModel, Lagrangian, LagrangianModel};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub pass: bool,
    /// Largest violation seen; zero when the property held everywhere.
    pub worst: f64,
}

impl PropertyCheck {
    fn new() -> Self {
        Self { pass: true, worst: 0.0 }
    }

    fn record(&mut self, violation: f64, tol: f64) {
        if violation > self.worst || violation.is_nan() {
            self.worst = violation;
        }
        if !(violation <= tol) {
            self.pass = false;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub samples: usize,
    pub periodicity: PropertyCheck,
    pub convexity: PropertyCheck,
    pub growth: PropertyCheck,
}

impl ModelReport {
    pub fn all_pass(&self) -> bool {
        self.periodicity.pass && self.convexity.pass && self.growth.pass
    }
}

const P_RANGE: f64 = 3.0;

/// Samples the periodicity, convexity and growth properties of `H`.
pub fn verify_model(model: &HamiltonianModel, samples: usize, tol: f64, seed: u64) -> ModelReport {
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut periodicity = PropertyCheck::new();
    let mut convexity = PropertyCheck::new();
    let mut growth = PropertyCheck::new();
    let g = model.growth();
    for _ in 0..samples.max(1) {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let t: f64 = rng.random();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-P_RANGE..P_RANGE)).collect();
        let h = model.hamiltonian(&x, t, &p);

        let shift_t = rng.random_range(-3i32..=3) as f64;
        let xs: Vec<f64> = x.iter().map(|z| z + rng.random_range(-3i32..=3) as f64).collect();
        periodicity.record((model.hamiltonian(&xs, t + shift_t, &p) - h).abs(), tol);

        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-P_RANGE..P_RANGE)).collect();
        let mid: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        let chord = 0.5 * (h + model.hamiltonian(&x, t, &q));
        convexity.record(model.hamiltonian(&x, t, &mid) - chord, tol);

        let (lo, hi) = g.hamiltonian_envelope(norm(&p));
        growth.record((lo - h).max(h - hi), tol);
    }
    ModelReport {
        samples: samples.max(1),
        periodicity,
        convexity,
        growth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianReport {
    pub samples: usize,
    pub fenchel_young: PropertyCheck,
    pub periodicity: PropertyCheck,
    pub growth: PropertyCheck,
}

/// Fenchel-Young, periodicity and the derived growth sandwich for `L`.
pub fn verify_lagrangian(
    lagrangian: &dyn Lagrangian,
    hamiltonian: &HamiltonianModel,
    samples: usize,
    tol: f64,
    seed: u64,
) -> LagrangianReport {
    let n = lagrangian.dim();
    let g = lagrangian.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fy = PropertyCheck::new();
    let mut periodicity = PropertyCheck::new();
    let mut growth = PropertyCheck::new();
    for _ in 0..samples.max(1) {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let t: f64 = rng.random();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-P_RANGE..P_RANGE)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-P_RANGE..P_RANGE)).collect();
        let l = lagrangian.value(&x, t, &v);
        let pv: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
        fy.record(pv - l - hamiltonian.hamiltonian(&x, t, &p), tol);

        let xs: Vec<f64> = x.iter().map(|z| z + rng.random_range(-3i32..=3) as f64).collect();
        let ts = t + rng.random_range(-3i32..=3) as f64;
        periodicity.record((lagrangian.value(&xs, ts, &v) - l).abs(), tol);

        let (lo, hi) = g.lagrangian_envelope(norm(&v));
        growth.record((lo - l).max(l - hi), tol);
    }
    LagrangianReport {
        samples: samples.max(1),
        fenchel_young: fy,
        periodicity,
        growth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendreCheck {
    pub samples: usize,
    pub max_error: f64,
    pub mean_error: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Numeric conjugation against the closed form on random `(x, t, v)`,
/// `|v_i| <= 3`.
pub fn legendre_round_trip(model: &HamiltonianModel, samples: usize, tol: f64, seed: u64) -> Result<LegendreCheck> {
    let analytic = LagrangianModel::analytic(model.clone())?;
    let numeric = LagrangianModel::numeric(model.clone());
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_error, mut total) = (0.0_f64, 0.0);
    let samples = samples.max(1);
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let t: f64 = rng.random();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-P_RANGE..P_RANGE)).collect();
        let err = (numeric.legendre_transform(&x, t, &v)? - analytic.legendre_transform(&x, t, &v)?).abs();
        max_error = max_error.max(err);
        total += err;
    }
    Ok(LegendreCheck {
        samples,
        max_error,
        mean_error: total / samples as f64,
        tol,
        pass: max_error <= tol,
    })
}
