use hjlab_core::harness::{render_report, run, Experiment, Format, RunConfig};
use hjlab_core::Error;

fn small(experiment: &str) -> RunConfig {
    let text = format!(
        r#"{{
            "experiment": "{experiment}",
            "resolution": {{ "levels": 3, "q_points": 9, "p_points": 5, "p_radius": 0.5 }},
            "burago": {{ "random_paths": 20, "optimizer_curves": 4, "t_max": 3 }},
            "seed": 5
        }}"#
    );
    let cfg = RunConfig::from_json(&text, "inline".as_ref()).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn effective_tables_pass_their_checks() {
    let report = run(&small("effective-tables")).unwrap();
    assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
    let sec = report.sections.effective.as_ref().unwrap();
    assert_eq!(sec.lagrangian.values.len(), 9);
    assert!(sec.fenchel_young_gap >= -1e-12);
}

#[test]
fn burago_suite_is_reproducible() {
    let cfg = small("burago-suite");
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert!(a.passed());
    for format in [Format::Json, Format::Csv] {
        assert_eq!(render_report(&a, format).unwrap(), render_report(&b, format).unwrap());
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let err = RunConfig::from_json(r#"{"resolution": {"dense": 3}}"#, "inline".as_ref()).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }));
}

#[test]
fn missing_table_file_is_reported() {
    let mut cfg = small("effective-tables");
    cfg.table = Some("/nonexistent/lagrangian.csv".into());
    assert!(run(&cfg).is_err());
}

#[test]
fn rate_needs_three_epsilons() {
    let mut cfg = small("rate");
    cfg.epsilons = vec![0.5, 0.25];
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

#[test]
fn experiment_names_are_kebab_case() {
    let cfg = small("paper-check");
    assert_eq!(cfg.experiment, Experiment::PaperCheck);
    let json = serde_json::to_value(&cfg).unwrap();
    assert_eq!(json["experiment"], "paper-check");
}
