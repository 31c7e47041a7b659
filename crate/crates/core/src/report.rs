//! Plain-text result tables.

use serde::{Deserialize, Serialize};

use crate::trainer::EvalReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub model: String,
    pub bleu: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ReportRow {
    pub fn from_eval(dataset: &str, report: &EvalReport) -> Self {
        Self {
            dataset: dataset.to_string(),
            model: report.model.clone(),
            bleu: report.bleu.score,
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
        }
    }
}

pub const COLUMNS: [&str; 6] = [
    "Dataset",
    "Model",
    "BLEU",
    "Precision",
    "Recall",
    "F1-Score",
];

/// Renders a pipe-separated table; every number is printed with 4 decimals.
pub fn render_table(rows: &[ReportRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.dataset.clone(),
                r.model.clone(),
                format!("{:.4}", r.bleu),
                format!("{:.4}", r.precision),
                format!("{:.4}", r.recall),
                format!("{:.4}", r.f1),
            ]
        })
        .collect();
    render_grid(&COLUMNS, &cells)
}

/// Left-aligned text columns, right-aligned numeric ones.
pub fn render_grid(header: &[&str], rows: &[Vec<String>]) -> String {
    let n = header.len();
    assert!(
        rows.iter().all(|r| r.len() == n),
        "row width differs from header"
    );
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let numeric: Vec<bool> = (0..n)
        .map(|i| !rows.is_empty() && rows.iter().all(|r| r[i].parse::<f64>().is_ok()))
        .collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if numeric[i] {
                    format!("{c:>w$}", w = widths[i])
                } else {
                    format!("{c:<w$}", w = widths[i])
                }
            })
            .collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    let mut out = line(&header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}
