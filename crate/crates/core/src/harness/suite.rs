use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::action::{check_metric_periodicity, compute_metric, Curve, MetricQuery};
use crate::burago::{burago_1d, burago_nd, max_intervals, verify_decomposition};
use crate::constructions::{check_subadditivity, check_superadditivity};
use crate::effective::{
    effective_hamiltonian, ConvexityCheck, EffectiveHamiltonianTable, EffectiveLagrangianTable,
};
use crate::model::{legendre_round_trip, verify_lagrangian, verify_model, Lagrangian, LagrangianReport, LegendreCheck, ModelReport};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub family: String,
    pub hamiltonian: ModelReport,
    pub lagrangian: LagrangianReport,
    /// Present when the family has a closed-form conjugate.
    pub legendre: Option<LegendreCheck>,
}

/// Property checks of `H`, of its conjugate, and the Legendre round trip.
pub fn run_model_checks(cfg: &RunConfig) -> Result<ModelSection> {
    let h = cfg.hamiltonian()?;
    let l = cfg.lagrangian()?;
    let (r, tol) = (&cfg.resolution, &cfg.tolerances);
    let legendre = if h.has_analytic_conjugate() {
        Some(legendre_round_trip(&h, r.legendre_samples, tol.legendre, cfg.seed)?)
    } else {
        None
    };
    Ok(ModelSection {
        family: h.family().to_string(),
        hamiltonian: verify_model(&h, r.model_samples, tol.model, cfg.seed),
        lagrangian: verify_lagrangian(&l, &h, r.model_samples, tol.legendre, cfg.seed),
        legendre,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    /// `|m(t; x, y) - m(t; x + w, y + w)|`.
    pub difference: f64,
}

/// Integer translations of random metric queries.
pub fn run_periodicity(cfg: &RunConfig) -> Result<Vec<PeriodicityRow>> {
    let l = cfg.lagrangian()?;
    let n = l.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    type Query = (f64, Vec<f64>, Vec<f64>, Vec<f64>);
    let queries: Vec<Query> = (0..cfg.resolution.periodicity_samples)
        .map(|_| {
            let t = rng.random_range(1.0..4.0);
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = x.iter().map(|z| z + t * rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..n)
                .map(|_| {
                    let k = rng.random_range(1..=3) as f64;
                    if rng.random::<bool>() { k } else { -k }
                })
                .collect();
            (t, x, y, w)
        })
        .collect();
    queries
        .into_par_iter()
        .enumerate()
        .map(|(i, (t, x, y, w))| {
            let difference = check_metric_periodicity(&l, t, &x, &y, &w, cfg.seed.wrapping_add(i as u64))?;
            Ok(PeriodicityRow { t, x, y, w, difference })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Additivity {
    Sub,
    Super,
}

impl Additivity {
    pub fn as_str(self) -> &'static str {
        match self {
            Additivity::Sub => "subadd",
            Additivity::Super => "superadd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub t: f64,
    pub q: f64,
    pub y: Vec<f64>,
    pub m_t: f64,
    pub m_2t: f64,
    /// `m(2t, 0, 2y) - 2 m(t, 0, y)` (sub) or `2 m(t, 0, y) - m(2t, 0, 2y)` (super).
    pub defect: f64,
    /// The same quantity with the constructed competitor in place of the metric estimate.
    pub constructive_defect: Option<f64>,
    /// Metric estimate minus the competitor's action; nonpositive when the competitor is an upper bound.
    pub excess: Option<f64>,
    pub endpoint_gap: Option<f64>,
    pub junction_gap: Option<f64>,
    /// Largest first-order residual of the two metric estimates.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectGrowth {
    pub ts: Vec<f64>,
    /// `max |defect|` over the `y` values at each `t`.
    pub max_abs: Vec<f64>,
    /// Running maximum of `max_abs` along increasing `t`.
    pub running_max: Vec<f64>,
    /// Growth factor of the running maximum per doubling of `t`.
    pub per_doubling: Vec<f64>,
    pub worst: f64,
    pub pass: bool,
}

impl DefectGrowth {
    /// Growth of the running maximum of `|value|` over increasing `t`; maxima
    /// below `floor` are replaced by `floor` in the ratios.
    pub fn measure(samples: &[(f64, f64)], growth: f64, floor: f64) -> Self {
        let mut ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let max_abs: Vec<f64> = ts
            .iter()
            .map(|t| samples.iter().filter(|s| s.0 == *t).map(|s| s.1.abs()).fold(0.0, f64::max))
            .collect();
        let mut running_max = Vec::with_capacity(ts.len());
        let mut run = 0.0_f64;
        for m in &max_abs {
            run = run.max(*m);
            running_max.push(run);
        }
        let per_doubling: Vec<f64> = (1..ts.len())
            .map(|i| {
                let ratio = running_max[i].max(floor) / running_max[i - 1].max(floor);
                ratio.powf(1.0 / (ts[i] / ts[i - 1]).log2())
            })
            .collect();
        let worst = per_doubling.iter().copied().fold(1.0, f64::max);
        Self {
            ts,
            max_abs,
            running_max,
            per_doubling,
            worst,
            pass: worst < 1.0 + growth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: Additivity,
    pub rows: Vec<DefectRow>,
    pub growth: DefectGrowth,
    pub constructive_growth: DefectGrowth,
}

/// Defects of `m` over `ts x qs` with `y = q t` on every axis.
pub fn run_sweep(cfg: &RunConfig, kind: Additivity) -> Result<SweepReport> {
    let l = cfg.lagrangian()?;
    let n = l.dim();
    let spec = match kind {
        Additivity::Sub => &cfg.subadd,
        Additivity::Super => &cfg.superadd,
    };
    let opts = cfg.additivity();
    let jobs: Vec<(f64, f64)> = spec.ts.iter().flat_map(|&t| spec.qs.iter().map(move |&q| (t, q))).collect();
    let rows: Vec<DefectRow> = jobs
        .into_par_iter()
        .map(|(t, q)| -> Result<DefectRow> {
            let y = vec![q * t; n];
            Ok(match kind {
                Additivity::Sub => {
                    let r = check_subadditivity(&l, t, &y, &opts)?;
                    DefectRow {
                        t,
                        q,
                        constructive_defect: r.constructive_defect(),
                        excess: r.doubling.as_ref().map(|d| r.m_2t - d.total),
                        endpoint_gap: r.doubling.as_ref().map(|d| d.endpoint_gap),
                        junction_gap: r.doubling.as_ref().map(|d| d.junction_gap),
                        residual: r.residuals[0].max(r.residuals[1]),
                        y,
                        m_t: r.m_t,
                        m_2t: r.m_2t,
                        defect: r.defect,
                    }
                }
                Additivity::Super => {
                    let r = check_superadditivity(&l, t, &y, &opts)?;
                    let halves: Vec<_> = r.primary.iter().chain(&r.complement).collect();
                    let fold = |f: &dyn Fn(&crate::constructions::HalvingSummary) -> f64| {
                        (!halves.is_empty()).then(|| halves.iter().map(|h| f(h)).fold(f64::NEG_INFINITY, f64::max))
                    };
                    DefectRow {
                        t,
                        q,
                        constructive_defect: r.constructive_defect(),
                        excess: fold(&|h| r.m_t - h.upper_bound),
                        endpoint_gap: fold(&|h| h.endpoint_gap),
                        junction_gap: fold(&|h| h.junction_gap),
                        residual: r.residuals[0].max(r.residuals[1]),
                        y,
                        m_t: r.m_t,
                        m_2t: r.m_2t,
                        defect: r.defect,
                    }
                }
            })
        })
        .collect::<Result<_>>()?;
    let tol = &cfg.tolerances;
    let measured: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.defect)).collect();
    let constructive: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.constructive_defect.map(|d| (r.t, d))).collect();
    Ok(SweepReport {
        kind,
        growth: DefectGrowth::measure(&measured, tol.defect_growth, tol.defect_floor),
        constructive_growth: DefectGrowth::measure(&constructive, tol.defect_growth, tol.defect_floor),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuragoRow {
    pub t: f64,
    pub y: Vec<f64>,
    pub k: usize,
    pub residual: f64,
    /// `|sum (b_i - a_i) - t / 2|`.
    pub duration_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuragoSuiteReport {
    pub paths_1d: usize,
    pub max_residual_1d: f64,
    /// Scalar decompositions with more than one interval.
    pub multi_interval_1d: usize,
    pub failed_1d: usize,
    pub curves_nd: usize,
    pub k_bound: usize,
    pub max_k: usize,
    pub max_residual_nd: f64,
    pub max_duration_error: f64,
    pub failed_nd: usize,
    pub rows: Vec<BuragoRow>,
    pub notes: Vec<String>,
}

fn random_walk(rng: &mut ChaCha8Rng, segments: usize) -> Result<Curve> {
    let t = rng.random_range(1.0..10.0);
    let drift = rng.random_range(-2.0..2.0);
    let mut x = rng.random_range(-1.0..1.0);
    let mut nodes = Vec::with_capacity(segments + 1);
    nodes.push(x);
    for _ in 0..segments {
        x += (drift + rng.random_range(-3.0..3.0)) * t / segments as f64;
        nodes.push(x);
    }
    let knots = (0..=segments).map(|i| t * i as f64 / segments as f64).collect();
    Curve::new(knots, nodes, 1)
}

/// Scalar decompositions of random walks, then space-time lifts of metric
/// minimizers of the configured model.
pub fn run_burago_suite(cfg: &RunConfig) -> Result<BuragoSuiteReport> {
    let l = cfg.lagrangian()?;
    let n = l.dim();
    let (spec, tol) = (&cfg.burago, &cfg.tolerances);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut notes = Vec::new();

    let walks: Vec<Curve> = (0..spec.random_paths)
        .map(|_| random_walk(&mut rng, spec.path_segments))
        .collect::<Result<_>>()?;
    let scalar: Vec<std::result::Result<(usize, f64, bool), String>> = walks
        .par_iter()
        .map(|c| match burago_1d(c, tol.burago_1d) {
            Ok(dec) => Ok((dec.k, dec.residual, verify_decomposition(c, &dec, tol.burago_1d).pass)),
            Err(e) => Err(e.to_string()),
        })
        .collect();
    let (mut max_residual_1d, mut multi_interval_1d, mut failed_1d) = (0.0_f64, 0, 0);
    for r in &scalar {
        match r {
            Ok((k, res, pass)) => {
                max_residual_1d = max_residual_1d.max(*res);
                multi_interval_1d += usize::from(*k != 1);
                failed_1d += usize::from(!pass);
            }
            Err(e) => {
                failed_1d += 1;
                if notes.len() < 5 {
                    notes.push(format!("scalar path: {e}"));
                }
            }
        }
    }

    let queries: Vec<(f64, Vec<f64>)> = (0..spec.optimizer_curves)
        .map(|_| {
            let t = rng.random_range(spec.t_min..=spec.t_max);
            let y = (0..n).map(|_| t * rng.random_range(-spec.q_max..=spec.q_max)).collect();
            (t, y)
        })
        .collect();
    let k_bound = max_intervals(n + 1);
    let zero = vec![0.0; n];
    let lifted: Vec<std::result::Result<BuragoRow, String>> = queries
        .into_par_iter()
        .enumerate()
        .map(|(i, (t, y))| -> Result<_> {
            let q = MetricQuery::new(0.0, t, &zero, &y)
                .with_density(cfg.resolution.density)
                .with_multistarts(cfg.resolution.multistarts)
                .with_seed(cfg.seed.wrapping_add(i as u64));
            let lift = compute_metric(&l, &q)?.minimizer.space_time_lift();
            Ok(match burago_nd(&lift, tol.burago_nd, spec.budget) {
                Ok(dec) => {
                    let cert = verify_decomposition(&lift, &dec, tol.burago_nd);
                    let duration_error = (dec.duration_sum - t / 2.0).abs();
                    Ok(BuragoRow {
                        t,
                        y,
                        k: dec.k,
                        residual: cert.residual,
                        duration_error,
                        pass: cert.pass && dec.k <= k_bound && duration_error <= tol.duration,
                    })
                }
                Err(e) => Err(format!("t = {t}, y = {y:?}: {e}")),
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(lifted.len());
    let mut failed_nd = 0;
    for r in lifted {
        match r {
            Ok(row) => {
                failed_nd += usize::from(!row.pass);
                rows.push(row);
            }
            Err(e) => {
                failed_nd += 1;
                if notes.len() < 10 {
                    notes.push(e);
                }
            }
        }
    }
    Ok(BuragoSuiteReport {
        paths_1d: walks.len(),
        max_residual_1d,
        multi_interval_1d,
        failed_1d,
        curves_nd: spec.optimizer_curves,
        k_bound,
        max_k: rows.iter().map(|r| r.k).max().unwrap_or(0),
        max_residual_nd: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
        max_duration_error: rows.iter().map(|r| r.duration_error).fold(0.0, f64::max),
        failed_nd,
        rows,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSection {
    pub lagrangian: EffectiveLagrangianTable,
    pub hamiltonian: EffectiveHamiltonianTable,
    /// Largest violation of `alpha |q|^m - K <= L_bar(q) <= beta |q|^m + K`.
    pub sandwich_violation: f64,
    pub lagrangian_convexity: ConvexityCheck,
    pub hamiltonian_convexity: ConvexityCheck,
    /// `min H_bar(p) + L_bar(q) - p.q` over all grid pairs.
    pub fenchel_young_gap: f64,
}

pub fn run_effective_tables(cfg: &RunConfig) -> Result<EffectiveSection> {
    let l = cfg.lagrangian()?;
    let n = l.dim();
    let lagrangian = cfg.effective_table(&l)?;
    let hamiltonian = effective_hamiltonian(&lagrangian, &cfg.p_grid(n)?)?;
    Ok(EffectiveSection {
        sandwich_violation: lagrangian.sandwich_violation(&l.bounds()),
        lagrangian_convexity: lagrangian.convexity(),
        hamiltonian_convexity: hamiltonian.convexity(),
        fenchel_young_gap: hamiltonian.fenchel_young_gap(&lagrangian),
        lagrangian,
        hamiltonian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_of_bounded_defects() {
        let g = DefectGrowth::measure(&[(10.0, 0.5), (20.0, -0.3), (40.0, 0.52), (80.0, 0.1)], 0.1, 1e-3);
        assert_eq!(g.running_max, vec![0.5, 0.5, 0.52, 0.52]);
        assert!(g.pass);
        let g = DefectGrowth::measure(&[(10.0, 0.5), (20.0, 1.0)], 0.1, 1e-3);
        assert!(!g.pass);
        assert!((g.worst - 2.0).abs() < 1e-12);
    }

    #[test]
    fn growth_is_per_doubling() {
        // a quadrupling of t allows 1.1^2
        let g = DefectGrowth::measure(&[(10.0, 1.0), (40.0, 1.2)], 0.1, 1e-3);
        assert!(g.pass);
        assert!((g.worst - 1.2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tiny_defects_sit_on_the_floor() {
        let g = DefectGrowth::measure(&[(1.0, 1e-12), (2.0, 1e-9), (4.0, 5e-4)], 0.1, 1e-3);
        assert!(g.pass);
        assert!(DefectGrowth::measure(&[], 0.1, 1e-3).pass);
    }

    #[test]
    fn free_particle_sweep_is_exact() {
        let cfg = RunConfig {
            model: crate::model::ModelSpec::new(crate::model::Family::SeparableQuadratic, &[("A", 0.0)]),
            subadd: super::super::SweepSpec {
                ts: vec![4.0, 8.0],
                qs: vec![0.5, 1.25],
            },
            ..Default::default()
        };
        let r = run_sweep(&cfg, Additivity::Sub).unwrap();
        assert_eq!(r.rows.len(), 4);
        for row in &r.rows {
            assert!(row.defect.abs() < 1e-9);
            if row.t > 6.0 {
                assert!(row.excess.unwrap() <= 1e-9);
                assert!(row.endpoint_gap.unwrap() <= 1e-12);
            }
        }
        assert!(r.growth.pass);
    }

    #[test]
    fn small_burago_suite() {
        let cfg = RunConfig {
            burago: super::super::BuragoSuiteSpec {
                random_paths: 50,
                optimizer_curves: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = run_burago_suite(&cfg).unwrap();
        assert_eq!(r.failed_1d, 0, "{:?}", r.notes);
        assert_eq!(r.multi_interval_1d, 0);
        assert_eq!(r.failed_nd, 0, "{:?}", r.notes);
        assert!(r.max_k <= 2);
    }
}
