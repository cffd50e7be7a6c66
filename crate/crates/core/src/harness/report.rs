use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    BuragoSuiteReport, EffectiveSection, Experiment, ModelSection, PeriodicityRow, RateReport, RunConfig, SweepReport,
    Tolerances,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sections {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodicity: Option<Vec<PeriodicityRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subadd: Option<SweepReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub superadd: Option<SweepReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burago: Option<BuragoSuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effective: Option<EffectiveSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateReport>,
}

/// Everything a run produced, plus the resolved configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub config: RunConfig,
    pub checks: Vec<Check>,
    pub sections: Sections,
}

fn check(name: &str, pass: bool, value: f64, tolerance: f64, detail: String) -> Check {
    Check {
        name: name.to_string(),
        pass,
        value,
        tolerance,
        detail,
    }
}

impl Report {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            tool: "hjlab".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: cfg.experiment,
            seed: cfg.seed,
            tolerances: cfg.tolerances,
            config: cfg.clone(),
            checks: Vec::new(),
            sections: Sections::default(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn add_model(&mut self, m: ModelSection) {
        let tol = self.tolerances;
        let h = &m.hamiltonian;
        let worst = h.periodicity.worst.max(h.convexity.worst).max(h.growth.worst);
        self.checks.push(check(
            "model-properties",
            h.periodicity.pass && h.convexity.pass && h.growth.pass,
            worst,
            tol.model,
            format!("periodicity, convexity and growth of H on {} samples", h.samples),
        ));
        let l = &m.lagrangian;
        let worst = l.fenchel_young.worst.max(l.periodicity.worst).max(l.growth.worst);
        self.checks.push(check(
            "lagrangian-properties",
            l.fenchel_young.pass && l.periodicity.pass && l.growth.pass,
            worst,
            tol.legendre,
            format!("Fenchel-Young, periodicity and growth of L on {} samples", l.samples),
        ));
        if let Some(lc) = &m.legendre {
            self.checks.push(check(
                "legendre-round-trip",
                lc.pass,
                lc.max_error,
                lc.tol,
                format!("numeric against closed-form conjugate on {} samples", lc.samples),
            ));
        }
        self.sections.model = Some(m);
    }

    pub fn add_periodicity(&mut self, rows: Vec<PeriodicityRow>) {
        let tol = self.tolerances.periodicity;
        let worst = rows.iter().map(|r| r.difference).fold(0.0, f64::max);
        self.checks.push(check(
            "metric-periodicity",
            worst <= tol,
            worst,
            tol,
            format!("{} integer translations", rows.len()),
        ));
        self.sections.periodicity = Some(rows);
    }

    pub fn add_sweep(&mut self, s: SweepReport) {
        let tol = self.tolerances;
        let name = s.kind.as_str();
        let built: Vec<_> = s.rows.iter().filter(|r| r.endpoint_gap.is_some()).collect();
        let gap = built
            .iter()
            .map(|r| r.endpoint_gap.unwrap_or(0.0).max(r.junction_gap.unwrap_or(0.0)))
            .fold(0.0, f64::max);
        self.checks.push(check(
            &format!("{name}-admissible"),
            gap <= tol.junction,
            gap,
            tol.junction,
            format!("endpoint and junction gaps of {} constructed curves", built.len()),
        ));
        let excess = built.iter().filter_map(|r| r.excess).fold(f64::NEG_INFINITY, f64::max);
        let excess = if built.is_empty() { 0.0 } else { excess };
        self.checks.push(check(
            &format!("{name}-upper-bound"),
            excess <= tol.upper_bound,
            excess,
            tol.upper_bound,
            "metric estimate minus constructed action".into(),
        ));
        self.checks.push(check(
            &format!("{name}-defect-growth"),
            s.growth.pass,
            s.growth.worst - 1.0,
            tol.defect_growth,
            format!("running max |defect| {:?} at t = {:?}", s.growth.running_max, s.growth.ts),
        ));
        match s.kind {
            super::Additivity::Sub => self.sections.subadd = Some(s),
            super::Additivity::Super => self.sections.superadd = Some(s),
        }
    }

    pub fn add_burago(&mut self, b: BuragoSuiteReport) {
        let tol = self.tolerances;
        self.checks.push(check(
            "burago-1d",
            b.failed_1d == 0 && b.multi_interval_1d == 0,
            b.max_residual_1d,
            tol.burago_1d,
            format!("{} random paths, {} failed, {} with k != 1", b.paths_1d, b.failed_1d, b.multi_interval_1d),
        ));
        self.checks.push(check(
            "burago-nd",
            b.failed_nd == 0,
            b.max_residual_nd,
            tol.burago_nd,
            format!(
                "{} lifted curves, {} failed, max k {} (bound {}), max duration error {:e}",
                b.curves_nd, b.failed_nd, b.max_k, b.k_bound, b.max_duration_error
            ),
        ));
        self.sections.burago = Some(b);
    }

    pub fn add_effective(&mut self, e: EffectiveSection) {
        let tol = self.tolerances;
        self.checks.push(check(
            "effective-sandwich",
            e.sandwich_violation <= 0.0,
            e.sandwich_violation,
            0.0,
            "growth bounds of the effective Lagrangian".into(),
        ));
        self.checks.push(check(
            "effective-convexity",
            e.lagrangian_convexity.passes(tol.convexity) && e.hamiltonian_convexity.passes(tol.convexity),
            e.lagrangian_convexity
                .min_second_difference
                .min(e.hamiltonian_convexity.min_second_difference),
            tol.convexity,
            "smallest second difference along grid lines".into(),
        ));
        self.checks.push(check(
            "fenchel-young",
            e.fenchel_young_gap >= -tol.fenchel_young,
            e.fenchel_young_gap,
            tol.fenchel_young,
            "min H_bar(p) + L_bar(q) - p.q over grid pairs".into(),
        ));
        self.sections.effective = Some(e);
    }

    pub fn add_rate(&mut self, r: RateReport) {
        let tol = self.tolerances;
        let e = r.fit.exponent;
        self.checks.push(check(
            "rate-exponent",
            e >= tol.exponent_min && e <= tol.exponent_max,
            e,
            tol.exponent_max - tol.exponent_min,
            format!("fit residual {:e}, window [{}, {}]", r.fit.residual, tol.exponent_min, tol.exponent_max),
        ));
        self.checks.push(check(
            "rate-constant",
            r.c_emp.is_finite() && r.c_variation < tol.constant_variation,
            r.c_variation,
            tol.constant_variation,
            format!("C_emp = {}", r.c_emp),
        ));
        self.sections.rate = Some(r);
    }

    /// Header and rows of the CSV rendering.
    pub fn table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let num = |v: f64| format!("{v}");
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let vec = |v: &[f64]| v.iter().map(|z| num(*z)).collect::<Vec<_>>().join(" ");
        let head = |h: &[&str]| h.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let s = &self.sections;
        match self.experiment {
            Experiment::Rate => (
                head(&["epsilon", "sup_error", "error_over_eps", "argmax"]),
                s.rate
                    .iter()
                    .flat_map(|r| &r.errors)
                    .map(|e| vec![num(e.epsilon), num(e.sup_error), num(e.sup_error / e.epsilon), vec(&e.argmax)])
                    .collect(),
            ),
            Experiment::Subadd | Experiment::Superadd => (
                head(&[
                    "t",
                    "q",
                    "y",
                    "m_t",
                    "m_2t",
                    "defect",
                    "constructive_defect",
                    "excess",
                    "endpoint_gap",
                    "junction_gap",
                    "residual",
                ]),
                s.subadd
                    .iter()
                    .chain(&s.superadd)
                    .flat_map(|r| &r.rows)
                    .map(|r| {
                        vec![
                            num(r.t),
                            num(r.q),
                            vec(&r.y),
                            num(r.m_t),
                            num(r.m_2t),
                            num(r.defect),
                            opt(r.constructive_defect),
                            opt(r.excess),
                            opt(r.endpoint_gap),
                            opt(r.junction_gap),
                            num(r.residual),
                        ]
                    })
                    .collect(),
            ),
            Experiment::BuragoSuite => (
                head(&["t", "y", "k", "residual", "duration_error", "pass"]),
                s.burago
                    .iter()
                    .flat_map(|b| &b.rows)
                    .map(|r| {
                        vec![num(r.t), vec(&r.y), r.k.to_string(), num(r.residual), num(r.duration_error), r.pass.to_string()]
                    })
                    .collect(),
            ),
            Experiment::EffectiveTables => {
                let dim = s.effective.as_ref().map_or(1, |e| e.lagrangian.dim());
                let mut h: Vec<String> = (0..dim).map(|i| format!("q{i}")).collect();
                h.extend(["lbar".to_string(), "residual".to_string()]);
                let rows = s
                    .effective
                    .iter()
                    .flat_map(|e| {
                        let t = &e.lagrangian;
                        (0..t.grid.len()).map(move |i| {
                            let mut row: Vec<String> = t.grid.point(i).iter().map(|z| num(*z)).collect();
                            row.push(num(t.values[i]));
                            row.push(num(t.residuals[i]));
                            row
                        })
                    })
                    .collect();
                (h, rows)
            }
            Experiment::PaperCheck => (
                head(&["name", "pass", "value", "tolerance", "detail"]),
                self.checks
                    .iter()
                    .map(|c| vec![c.name.clone(), c.pass.to_string(), num(c.value), num(c.tolerance), c.detail.clone()])
                    .collect(),
            ),
        }
    }
}

/// Renders `report` as pretty JSON or as the experiment's CSV table.
pub fn render_report(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(report)
                .map_err(|e| Error::Internal(format!("report serialization: {e}")))?;
            text.push('\n');
            Ok(text)
        }
        Format::Csv => {
            let (header, rows) = report.table();
            let fail = |e: csv::Error| Error::Internal(format!("csv rendering: {e}"));
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).map_err(fail)?;
            for r in rows {
                w.write_record(&r).map_err(fail)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv rendering: {e}")))?;
            String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
        }
    }
}

/// Writes [`render_report`]'s output to `path`.
pub fn emit_report(report: &Report, format: Format, path: &Path) -> Result<()> {
    let text = render_report(report, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Additivity, DefectGrowth, SweepReport};

    fn empty_sweep() -> Report {
        let cfg = RunConfig {
            experiment: Experiment::Subadd,
            ..Default::default()
        };
        let mut r = Report::new(&cfg);
        r.add_sweep(SweepReport {
            kind: Additivity::Sub,
            rows: vec![],
            growth: DefectGrowth::measure(&[], 0.1, 1e-3),
            constructive_growth: DefectGrowth::measure(&[], 0.1, 1e-3),
        });
        r
    }

    #[test]
    fn empty_sweep_writes_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let r = empty_sweep();
        assert!(r.passed());
        emit_report(&r, Format::Csv, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("t,q,y,m_t,m_2t,defect"));
    }

    #[test]
    fn json_round_trip_and_repeatability() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        let r = empty_sweep();
        emit_report(&r, Format::Json, &a).unwrap();
        emit_report(&r, Format::Json, &b).unwrap();
        let text = std::fs::read(&a).unwrap();
        assert_eq!(text, std::fs::read(&b).unwrap());
        let back: Report = serde_json::from_slice(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let r = empty_sweep();
        let path = Path::new("/nonexistent-dir/report.json");
        match emit_report(&r, Format::Json, path) {
            Err(Error::Io { path: p, .. }) => assert_eq!(p, path),
            other => panic!("{other:?}"),
        }
    }
}
