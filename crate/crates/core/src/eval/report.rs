//! Markdown and CSV emitters.

use std::fmt::Write;

use super::{
    condition_on_execution, default_baseline, failure_breakdown, group_by_mode, metrics_by_mode, mti_rate, quadrant,
    token_report, CaseResult, Cell, MetricsTable,
};

pub fn metrics_markdown(tables: &[MetricsTable]) -> String {
    let mut out = String::from("| Mode | CRate | TRate | Exec. Compl. | Graph Valid. | Both Succ. |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for t in tables {
        let c = t.cells();
        writeln!(out, "| {} | {} | {} | {} | {} | {} |", t.mode, c[0], c[1], c[2], c[3], c[4]).unwrap();
    }
    out
}

pub fn metrics_csv(tables: &[MetricsTable]) -> String {
    let mut out = String::from(
        "mode,cases,tests,passed_cases,passed_tests,exec_complete,graph_valid,both_success,crate,trate,exec_compl,graph_valid_pct,both_succ\n",
    );
    for t in tables {
        let c = t.cells();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&t.mode),
            t.cases,
            t.tests,
            t.passed_cases,
            t.passed_tests,
            t.exec_complete,
            t.graph_valid,
            t.both_success,
            c[0],
            c[1],
            c[2],
            c[3],
            c[4]
        )
        .unwrap();
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cells_table(title: &str, cells: &[Cell]) -> String {
    let mut out = format!("### {title}\n\n| Configuration | Cases | Avg. Pass Rate | Pooled Pass Rate |\n|---|---|---|---|\n");
    let pct = |r: Option<super::Ratio>| r.map(|r| format!("{}%", r.round(1))).unwrap_or_else(|| "n/a".into());
    for c in cells {
        writeln!(out, "| {} | {} | {} | {} |", c.label, c.cases, pct(c.mean_rate), pct(c.pooled_rate)).unwrap();
    }
    out
}

/// Failure modes, mixed tool invocation, conditioned pass rates and tokens.
pub fn breakdown_markdown(cases: &[CaseResult]) -> String {
    let groups = group_by_mode(cases);
    let mut out = String::from("## Failure modes\n\n| Mode | Failure Mode | Count | % |\n|---|---|---|---|\n");
    for (mode, g) in &groups {
        let b = failure_breakdown(mode, g);
        for (class, n) in &b.counts {
            let pct = super::Ratio::percent(*n, b.total).round(1);
            writeln!(out, "| {mode} | {} | {n} | {pct} |", class.label()).unwrap();
        }
        writeln!(out, "| {mode} | Total Failures | {} | 100 |", b.total).unwrap();
    }

    out.push_str("\n## Mixed tool invocation\n\n| Strategy | Total | Clean | MTI | MTI Rate |\n|---|---|---|---|---|\n");
    for (mode, g) in &groups {
        let s = mti_rate(g.iter().map(|c| c.mti));
        writeln!(out, "| {mode} | {} | {} | {} | {}% |", s.total, s.clean, s.mti, s.rate().round(1)).unwrap();
    }

    out.push_str("\n## Execution impact\n\n");
    for (mode, g) in &groups {
        let owned: Vec<CaseResult> = g.iter().map(|c| (*c).clone()).collect();
        out.push_str(&cells_table(&format!("{mode}: execution × graph validity"), &quadrant(&owned)));
        out.push('\n');
        out.push_str(&cells_table(&format!("{mode}: execution × trajectory quality"), &condition_on_execution(&owned)));
        out.push('\n');
    }

    out.push_str("## Output tokens per instance\n\n| Mode | Exec. | Sum. | Total | Δ |\n|---|---|---|---|---|\n");
    let baseline_present = |m: &str| {
        default_baseline(m)
            .filter(|b| groups.iter().any(|(x, _)| x == b))
            .map(str::to_string)
    };
    let rows = token_report(cases, baseline_present).expect("baselines are filtered to present modes");
    for r in rows {
        let sum = r.summarize_mean.map(|s| s.round(0)).unwrap_or_else(|| "--".into());
        let delta = r.delta.map(|d| format!("{}%", d.round_signed(1))).unwrap_or_else(|| "--".into());
        writeln!(out, "| {} | {} | {} | {} | {} |", r.mode, r.exec_mean.round(0), sum, r.total_mean.round(0), delta).unwrap();
    }
    out
}

/// Metrics table for every mode present in `cases`.
pub fn summary_markdown(cases: &[CaseResult]) -> String {
    metrics_markdown(&metrics_by_mode(cases))
}
