use std::collections::BTreeSet;
use std::path::Path;

use flowforge::harness::{
    desk_path, load_cases, load_dataset, report, reevaluate, run_experiment, run_matrix, standard_matrix, Coverage,
    ExperimentConfig, HarnessError, Mode, ReportFormat, CASE_FILE, GRAPH_FILE,
};
use flowforge::tools::CATEGORIES;

fn es_config(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(desk_path(), Mode::Es, out);
    c.seed = 3;
    c
}

#[test]
fn desk_covers_every_category() {
    let desk = load_dataset(&desk_path()).unwrap();
    assert!(desk.len() >= 12);
    for cat in CATEGORIES {
        let n = desk.iter().filter(|i| i.category == cat).count();
        assert!(n >= 3, "{} has {n} instances", cat.as_str());
    }
    let ids: BTreeSet<&str> = desk.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids.len(), desk.len());
}

#[test]
fn resume_recomputes_only_missing_cases() {
    let dir = tempfile::tempdir().unwrap();
    let config = es_config(dir.path());
    let first = run_experiment(&config).unwrap();
    assert_eq!(first.computed.len(), first.cases.len());

    let again = run_experiment(&config).unwrap();
    assert!(again.computed.is_empty());
    assert_eq!(again.cases, first.cases);

    std::fs::remove_dir_all(dir.path().join("cases").join("logic_grade")).unwrap();
    let resumed = run_experiment(&config).unwrap();
    assert_eq!(resumed.computed, vec!["logic_grade".to_string()]);
    assert_eq!(resumed.cases, first.cases);
}

#[test]
fn changed_config_invalidates_old_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = es_config(dir.path());
    run_experiment(&config).unwrap();
    config.seed = 4;
    let rerun = run_experiment(&config).unwrap();
    assert_eq!(rerun.computed.len(), rerun.cases.len());
}

#[test]
fn es_report_matches_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&es_config(dir.path())).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/es_desk_report.md");
    let got = report(dir.path(), ReportFormat::Markdown).unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &got).unwrap();
    }
    let want = std::fs::read_to_string(&golden).expect("snapshot exists; set UPDATE_GOLDEN=1 to create it");
    assert_eq!(got, want);
    assert!(got.contains("Total: 12 instances, 60 tests"), "{got}");
}

#[test]
fn empty_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(report(dir.path(), ReportFormat::Csv), Err(HarnessError::EmptyRun(_))));
    assert!(matches!(load_cases(&dir.path().join("missing")), Err(HarnessError::EmptyRun(_))));
}

#[test]
fn partial_runs_are_annotated() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&es_config(dir.path())).unwrap();
    std::fs::remove_file(dir.path().join("cases").join("data_sum_list").join(CASE_FILE)).unwrap();
    let (cases, cov) = load_cases(dir.path()).unwrap();
    assert_eq!(cov, Coverage { done: 11, expected: 12 });
    assert_eq!(cases.len(), 11);
    let md = report(dir.path(), ReportFormat::Markdown).unwrap();
    assert!(md.contains("Coverage: 11/12 cases (91.7%)"), "{md}");
    let csv = report(dir.path(), ReportFormat::Csv).unwrap();
    assert!(csv.starts_with("# Coverage: 11/12"), "{csv}");
}

#[test]
fn matrix_report_has_one_row_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let summaries = run_matrix(&standard_matrix(&desk_path(), 1), dir.path()).unwrap();
    assert_eq!(summaries.len(), 4);
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Mode")).collect();
    let modes: Vec<&str> = rows.iter().map(|r| r.split(" | ").next().unwrap().trim_start_matches("| ")).collect();
    assert_eq!(modes, ["ReAct", "P&E", "ES-ReAct", "ES-P&E"]);
    assert!(md.contains("Total: 12 instances, 60 tests"));
    assert!(!md.contains(&summaries[0].config_hash));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("breakdown.md").is_file());
}

#[test]
fn reevaluate_rescores_stored_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_experiment(&es_config(dir.path())).unwrap();
    let graph = dir.path().join("cases").join("data_sum_list").join(GRAPH_FILE);
    std::fs::write(&graph, std::fs::read_to_string(&graph).unwrap().replace("sum_list", "max_of")).unwrap();
    let cases = reevaluate(dir.path()).unwrap();
    let case = cases.iter().find(|c| c.instance_id == "data_sum_list").unwrap();
    assert!(!case.passed());
    assert!(case.failure.is_some());
    for before in first.cases.iter().filter(|c| c.instance_id != "data_sum_list") {
        let after = cases.iter().find(|c| c.instance_id == before.instance_id).unwrap();
        assert_eq!(after.verdicts, before.verdicts, "{}", before.instance_id);
    }
}
