//! JSON and CSV report files, and the run summary table.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use lipflow_core::theorems::{ConvergenceReport, Verdict};
use serde::Serialize;

/// What one check produced: a report, or the error that stopped it.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckOutcome {
    Report(ConvergenceReport),
    Error {
        label: String,
        threshold: f64,
        message: String,
    },
}

impl CheckOutcome {
    pub fn label(&self) -> &str {
        match self {
            CheckOutcome::Report(r) => &r.label,
            CheckOutcome::Error { label, .. } => label,
        }
    }

    /// Pass, or a diagnostic that carries no verdict.
    pub fn passed(&self) -> bool {
        matches!(self, CheckOutcome::Report(r) if r.verdict != Verdict::Fail)
    }

    pub fn verdict(&self) -> &'static str {
        match self {
            CheckOutcome::Report(r) => r.verdict.as_str(),
            CheckOutcome::Error { .. } => "error",
        }
    }

    pub fn final_error(&self) -> Option<f64> {
        match self {
            CheckOutcome::Report(r) => r.points.last().map(|p| p.1),
            CheckOutcome::Error { .. } => None,
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            CheckOutcome::Report(r) => r.threshold,
            CheckOutcome::Error { threshold, .. } => *threshold,
        }
    }
}

#[derive(Serialize)]
struct BudgetJson {
    integrator: f64,
    quadrature: f64,
    interpolation: f64,
    total: f64,
}

#[derive(Serialize)]
struct CoCheckJson<'a> {
    name: &'a str,
    value: f64,
    limit: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    label: &'a str,
    points: Vec<[f64; 2]>,
    fitted_rate: Option<f64>,
    threshold: f64,
    verdict: &'a str,
    notes: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<BudgetJson>,
    cochecks: Vec<CoCheckJson<'a>>,
}

pub fn to_json(outcome: &CheckOutcome) -> String {
    let json = match outcome {
        CheckOutcome::Report(r) => ReportJson {
            label: &r.label,
            points: r.points.iter().map(|&(p, e)| [p, e]).collect(),
            fitted_rate: r.fitted_rate,
            threshold: r.threshold,
            verdict: r.verdict.as_str(),
            notes: &r.notes,
            budget: Some(BudgetJson {
                integrator: r.budget.integrator,
                quadrature: r.budget.quadrature,
                interpolation: r.budget.interpolation,
                total: r.budget.total(),
            }),
            cochecks: r
                .cochecks
                .iter()
                .map(|c| CoCheckJson {
                    name: &c.name,
                    value: c.value,
                    limit: c.limit,
                    pass: c.pass,
                })
                .collect(),
        },
        CheckOutcome::Error {
            label,
            threshold,
            message,
        } => ReportJson {
            label,
            points: Vec::new(),
            fitted_rate: None,
            threshold: *threshold,
            verdict: "error",
            notes: message,
            budget: None,
            cochecks: Vec::new(),
        },
    };
    let mut s = serde_json::to_string_pretty(&json).expect("report serializes");
    s.push('\n');
    s
}

pub fn to_csv(outcome: &CheckOutcome) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["param", "error"]).expect("in-memory write");
    if let CheckOutcome::Report(r) = outcome {
        for &(p, e) in &r.points {
            w.write_record([format!("{p:.17e}"), format!("{e:.17e}")])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

/// Writes `<scenario>__<check>.json` and `.csv` into `dir`, returning both paths.
pub fn write_report(
    dir: &Path,
    scenario: &str,
    outcome: &CheckOutcome,
) -> io::Result<[PathBuf; 2]> {
    fs::create_dir_all(dir)?;
    let stem = format!("{scenario}__{}", outcome.label());
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&json, to_json(outcome))?;
    fs::write(&csv, to_csv(outcome))?;
    Ok([json, csv])
}

/// Check name, final error, threshold and verdict, one row per check.
pub fn summary_table(outcomes: &[CheckOutcome]) -> String {
    let width = outcomes
        .iter()
        .map(|o| o.label().len())
        .max()
        .unwrap_or(0)
        .max("check".len());
    let mut out = String::new();
    writeln!(
        out,
        "{:<width$}  {:>12}  {:>12}  verdict",
        "check", "final error", "threshold"
    )
    .unwrap();
    for o in outcomes {
        let err = o
            .final_error()
            .map_or_else(|| "-".to_string(), |e| format!("{e:.4e}"));
        writeln!(
            out,
            "{:<width$}  {:>12}  {:>12.4e}  {}",
            o.label(),
            err,
            o.threshold(),
            o.verdict()
        )
        .unwrap();
    }
    out
}
