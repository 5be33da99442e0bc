//! Report serialisation: one JSON document per record, or a flat CSV with a
//! fixed column order per mode.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::run::{DetectorRun, Payload, ReportRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

pub const EXPONENT_COLUMNS: &[&str] = &["n", "member", "kl_rate", "error_exponent"];
pub const DOMINANCE_COLUMNS: &[&str] = &["n", "member", "margin", "ratio_expectation", "finite_n_dominates"];
pub const SIMULATE_COLUMNS: &[&str] = &[
    "n",
    "member",
    "detector",
    "fa_hat",
    "miss_hat",
    "miss_count",
    "miss_log",
    "censored",
];
pub const MINIMAX_COLUMNS: &[&str] = &["n", "member", "ratio_expectation", "mu", "optimizer_weight"];

/// 17 significant digits; non-finite values as `inf`, `-inf`, `nan`.
fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_json(record: &ReportRecord) -> Result<String> {
    serde_json::to_string_pretty(record).map_err(|e| Error::Numerical(format!("JSON encoding failed: {e}")))
}

pub fn from_json(text: &str) -> Result<ReportRecord> {
    serde_json::from_str(text).map_err(|e| Error::argument(format!("invalid report document: {e}")))
}

fn simulate_rows(out: &mut Vec<Vec<String>>, run: &DetectorRun) {
    let n_values = run
        .truths
        .first()
        .map(|t| t.estimate.n_values.clone())
        .unwrap_or_default();
    for (i, n) in n_values.iter().enumerate() {
        for t in &run.truths {
            let e = &t.estimate;
            out.push(vec![
                n.to_string(),
                text(&t.member),
                text(&run.detector),
                num(e.fa_hat[i]),
                num(e.miss_hat[i]),
                e.miss_count[i].to_string(),
                num(e.miss_log[i]),
                e.censored[i].to_string(),
            ]);
        }
    }
}

/// Header and rows, one row per `(n, member)` pair (and detector, where
/// several are compared).
pub fn csv_rows(record: &ReportRecord) -> (&'static [&'static str], Vec<Vec<String>>) {
    let mut rows = Vec::new();
    match &record.payload {
        Payload::Exponent(p) => {
            for r in &p.kl_rates {
                let exp = p
                    .exponents
                    .iter()
                    .find(|e| e.psd_label == r.member)
                    .map_or(f64::NAN, |e| e.value);
                rows.push(vec![r.n.to_string(), text(&r.member), num(r.kl_rate), num(exp)]);
            }
            (EXPONENT_COLUMNS, rows)
        }
        Payload::Dominance(p) => {
            for r in &p.finite_n {
                rows.push(vec![
                    r.n.to_string(),
                    text(&r.member),
                    num(r.margin),
                    num(r.ratio_expectation),
                    r.finite_n_dominates.to_string(),
                ]);
            }
            (DOMINANCE_COLUMNS, rows)
        }
        Payload::Simulate(p) => {
            simulate_rows(&mut rows, &p.run);
            (SIMULATE_COLUMNS, rows)
        }
        Payload::Full(p) => {
            for run in &p.detectors {
                simulate_rows(&mut rows, run);
            }
            (SIMULATE_COLUMNS, rows)
        }
        Payload::Minimax(p) => {
            for at in &p.per_n {
                let c = &at.certificate;
                for (k, e) in c.ratio_expectations.iter().enumerate() {
                    let member = record.config.psd.get(k).map_or("", |p| p.label.as_str());
                    rows.push(vec![
                        at.n.to_string(),
                        text(member),
                        num(*e),
                        num(c.mu[k]),
                        num(at.optimum.r_star.as_slice()[k]),
                    ]);
                }
            }
            (MINIMAX_COLUMNS, rows)
        }
    }
}

pub fn to_csv(record: &ReportRecord) -> String {
    let (header, rows) = csv_rows(record);
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.join(","));
    }
    out
}

pub fn render(record: &ReportRecord, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(record).map(|mut s| {
            s.push('\n');
            s
        }),
        Format::Csv => Ok(to_csv(record)),
    }
}

pub fn write_report(record: &ReportRecord, path: &Path, format: Format) -> Result<()> {
    let body = render(record, format)?;
    fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_report(path: &Path) -> Result<ReportRecord> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json(&text)
}
