//! Run configuration, experiment orchestration and report emission.
//!
//! A run is described by one JSON document ([`RunConfig`]); every field has a
//! default, so `{}` is a valid configuration for the full `paper-check`
//! preset. All randomness is derived from `seed`, and reports carry no
//! timings, so a fixed configuration always produces the same bytes.

mod rate;
mod report;
mod suite;

pub use rate::{fit_rate, run_rate_experiment, RateFit, RateReport};
pub use report::{emit_report, render_report, Check, Format, Report, Sections};
pub use suite::{
    run_burago_suite, run_effective_tables, run_model_checks, run_periodicity, run_sweep, Additivity,
    BuragoSuiteReport, DefectGrowth, DefectRow, EffectiveSection, ModelSection, PeriodicityRow, SweepReport,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::effective::{
    effective_lagrangian, EffectiveLagrangianTable, HomogenizationOptions, TensorGrid, DEFAULT_LEVELS, DEFAULT_Q_POINTS,
    DEFAULT_Q_RADIUS,
};
use crate::model::{Family, HamiltonianModel, Lagrangian, LagrangianModel, ModelSpec};
use crate::pde::{ControlOptions, InitialDatum};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Rate,
    Subadd,
    Superadd,
    BuragoSuite,
    EffectiveTables,
    PaperCheck,
}

/// `y = q t` for every pair of `ts` and `qs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub ts: Vec<f64>,
    pub qs: Vec<f64>,
}

const DEFAULT_QS: [f64; 4] = [0.33, 0.77, 1.31, 0.50625];

impl SweepSpec {
    pub fn subadd() -> Self {
        Self {
            ts: vec![10.0, 20.0, 40.0, 80.0],
            qs: DEFAULT_QS.to_vec(),
        }
    }

    pub fn superadd() -> Self {
        Self {
            ts: vec![200.0, 400.0, 800.0],
            qs: DEFAULT_QS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuragoSuiteSpec {
    pub random_paths: usize,
    pub path_segments: usize,
    pub optimizer_curves: usize,
    /// Window lengths of the optimizer curves are drawn from `[t_min, t_max]`.
    pub t_min: f64,
    pub t_max: f64,
    /// Mean velocities are drawn from `[-q_max, q_max]` per axis.
    pub q_max: f64,
    pub budget: usize,
}

impl Default for BuragoSuiteSpec {
    fn default() -> Self {
        Self {
            random_paths: 1000,
            path_segments: 64,
            optimizer_curves: 100,
            t_min: 1.0,
            t_max: 8.0,
            q_max: 2.0,
            budget: crate::burago::DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    /// Curve segments per unit time, shared by tables and the control route.
    pub density: f64,
    pub multistarts: usize,
    pub levels: usize,
    pub q_points: usize,
    pub q_radius: f64,
    pub p_points: usize,
    pub p_radius: f64,
    /// Evaluation points on `[0, 1)`.
    pub x_points: usize,
    /// Samples for the model property checks.
    pub model_samples: usize,
    pub legendre_samples: usize,
    pub periodicity_samples: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            density: crate::action::DEFAULT_SEGMENTS_PER_UNIT,
            multistarts: crate::action::DEFAULT_MULTISTARTS,
            levels: DEFAULT_LEVELS,
            q_points: DEFAULT_Q_POINTS,
            q_radius: DEFAULT_Q_RADIUS,
            p_points: 31,
            p_radius: 1.5,
            x_points: 64,
            model_samples: 1000,
            legendre_samples: 1000,
            periodicity_samples: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub model: f64,
    pub legendre: f64,
    pub periodicity: f64,
    pub burago_1d: f64,
    pub burago_nd: f64,
    pub duration: f64,
    /// Endpoint and junction gaps of constructed curves.
    pub junction: f64,
    /// Allowed excess of a metric estimate over a constructed competitor's action.
    pub upper_bound: f64,
    /// Allowed growth of the running defect maximum per doubling of `t`.
    pub defect_growth: f64,
    /// Defect maxima below this are treated as this value when forming growth ratios.
    pub defect_floor: f64,
    pub convexity: f64,
    pub fenchel_young: f64,
    pub exponent_min: f64,
    pub exponent_max: f64,
    /// Allowed relative spread of `error / eps` over the two finest `eps`.
    pub constant_variation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            model: 1e-9,
            legendre: 1e-6,
            periodicity: 1e-6,
            burago_1d: crate::burago::DEFAULT_TOL_1D,
            burago_nd: crate::burago::DEFAULT_TOL_ND,
            duration: 1e-9,
            junction: 1e-12,
            upper_bound: 1e-6,
            defect_growth: 0.10,
            defect_floor: 1e-3,
            convexity: 1e-4,
            fenchel_young: 1e-12,
            exponent_min: 0.75,
            exponent_max: 1.25,
            constant_variation: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub experiment: Experiment,
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    pub datum: InitialDatum,
    pub subadd: SweepSpec,
    pub superadd: SweepSpec,
    pub burago: BuragoSuiteSpec,
    pub resolution: Resolution,
    pub tolerances: Tolerances,
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub format: Format,
    /// Effective Lagrangian CSV (as written by `effective`), used in place of
    /// building the table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::new(Family::SeparableQuadratic, &[("A", 1.0)]),
            experiment: Experiment::PaperCheck,
            epsilons: vec![0.5, 0.25, 0.125, 0.0625],
            horizon: 1.0,
            datum: InitialDatum::default(),
            subadd: SweepSpec::subadd(),
            superadd: SweepSpec::superadd(),
            burago: BuragoSuiteSpec::default(),
            resolution: Resolution::default(),
            tolerances: Tolerances::default(),
            seed: 0,
            workers: 0,
            output: None,
            format: Format::Json,
            table: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for &e in &self.epsilons {
            if !(e > 0.0 && e <= 1.0) {
                return bad(format!("epsilon {e} is outside (0, 1]"));
            }
        }
        let needs_rate = matches!(self.experiment, Experiment::Rate | Experiment::PaperCheck);
        if needs_rate && self.epsilons.len() < 3 {
            return bad(format!("the rate experiment needs at least 3 epsilons, got {}", self.epsilons.len()));
        }
        if !(self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        let r = &self.resolution;
        if !(r.density > 0.0) || r.multistarts == 0 || r.x_points == 0 {
            return bad("density, multistarts and x_points must be positive".into());
        }
        if r.levels < 2 {
            return bad(format!("levels must be at least 2, got {}", r.levels));
        }
        if r.q_points < 3 || r.p_points < 2 || !(r.q_radius > 0.0) || !(r.p_radius > 0.0) {
            return bad("q/p grids need a positive radius and at least 3 (q) or 2 (p) points".into());
        }
        for (name, s) in [("subadd", &self.subadd), ("superadd", &self.superadd)] {
            if s.ts.iter().any(|t| !(*t > 0.0)) || s.qs.iter().any(|q| !q.is_finite()) {
                return bad(format!("{name} sweep needs positive ts and finite qs"));
            }
        }
        let b = &self.burago;
        if b.path_segments == 0 || !(b.t_min > 0.0 && b.t_max >= b.t_min) || !(b.q_max >= 0.0) {
            return bad("burago suite needs path_segments > 0 and 0 < t_min <= t_max".into());
        }
        let t = &self.tolerances;
        if !(t.exponent_min < t.exponent_max) {
            return bad("exponent_min must be below exponent_max".into());
        }
        Ok(())
    }

    pub fn hamiltonian(&self) -> Result<HamiltonianModel> {
        HamiltonianModel::from_spec(&self.model)
    }

    pub fn lagrangian(&self) -> Result<LagrangianModel> {
        Ok(LagrangianModel::new(self.hamiltonian()?))
    }

    pub fn homogenization(&self) -> HomogenizationOptions {
        HomogenizationOptions {
            levels: self.resolution.levels,
            density: self.resolution.density,
            multistarts: self.resolution.multistarts,
            seed: self.seed,
        }
    }

    /// Loads `table` when set, otherwise builds the table on the configured q-grid.
    pub fn effective_table(&self, l: &LagrangianModel) -> Result<EffectiveLagrangianTable> {
        let tab = match &self.table {
            Some(p) => EffectiveLagrangianTable::read_csv(p)?,
            None => return effective_lagrangian(l, &self.q_grid(l.dim())?, &self.homogenization()),
        };
        if tab.dim() != l.dim() {
            return Err(Error::Config(format!(
                "table has dimension {}, the model has dimension {}",
                tab.dim(),
                l.dim()
            )));
        }
        Ok(tab)
    }

    pub fn q_grid(&self, dim: usize) -> Result<TensorGrid> {
        let r = &self.resolution;
        TensorGrid::new(dim, -r.q_radius, r.q_radius, r.q_points)
    }

    pub fn p_grid(&self, dim: usize) -> Result<TensorGrid> {
        let r = &self.resolution;
        TensorGrid::new(dim, -r.p_radius, r.p_radius, r.p_points)
    }

    pub fn control(&self) -> ControlOptions {
        ControlOptions {
            density: self.resolution.density,
            multistarts: self.resolution.multistarts,
            seed: self.seed,
            ..Default::default()
        }
    }

    pub fn additivity(&self) -> crate::constructions::AdditivityOptions {
        crate::constructions::AdditivityOptions {
            density: self.resolution.density,
            multistarts: self.resolution.multistarts,
            seed: self.seed,
            burago_tol: self.tolerances.burago_nd,
            burago_budget: self.burago.budget,
            ..Default::default()
        }
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool for 0.
fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Validates `cfg` and runs its experiment.
pub fn run(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    with_workers(cfg.workers, || run_inner(cfg))?
}

fn run_inner(cfg: &RunConfig) -> Result<Report> {
    let mut report = Report::new(cfg);
    match cfg.experiment {
        Experiment::Rate => report.add_rate(run_rate_experiment(cfg)?),
        Experiment::Subadd => report.add_sweep(run_sweep(cfg, Additivity::Sub)?),
        Experiment::Superadd => report.add_sweep(run_sweep(cfg, Additivity::Super)?),
        Experiment::BuragoSuite => report.add_burago(run_burago_suite(cfg)?),
        Experiment::EffectiveTables => report.add_effective(run_effective_tables(cfg)?),
        Experiment::PaperCheck => {
            report.add_model(run_model_checks(cfg)?);
            report.add_periodicity(run_periodicity(cfg)?);
            report.add_sweep(run_sweep(cfg, Additivity::Sub)?);
            report.add_sweep(run_sweep(cfg, Additivity::Super)?);
            report.add_burago(run_burago_suite(cfg)?);
            report.add_rate(run_rate_experiment(cfg)?);
        }
    }
    Ok(report)
}
