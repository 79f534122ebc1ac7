//! CSV and JSON emission of homogeneous report records.
//!
//! CSV files carry a header row and write floating-point fields with 17
//! significant digits, which round-trips every double. JSON output keeps the
//! field order of the record type, so it is stable across runs.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::ballwalk::{BallWalkBudget, ErrorBudgetSample};
use crate::counterexamples::{ConvergentAnchors, SeparationReport, TightnessReport};
use crate::error::{invalid, Error, Result};
use crate::regime::RegimeReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => invalid(format!("unknown format {other:?}")),
        }
    }
}

/// A record type with a fixed list of CSV columns. Nested fields are named
/// with dots (`regime.delta_budget`).
pub trait Record: Serialize {
    fn columns() -> &'static [&'static str];
}

/// Formats a double with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn lookup<'a>(value: &'a Value, column: &str) -> Option<&'a Value> {
    column.split('.').try_fold(value, |v, key| v.get(key))
}

fn cell(value: Option<&Value>) -> String {
    match value {
        None | Some(Value::Null) => String::new(),
        Some(Value::Bool(b)) => b.to_string(),
        Some(Value::Number(n)) => match (n.as_u64(), n.as_i64()) {
            _ if n.is_f64() => format_f64(n.as_f64().unwrap_or(f64::NAN)),
            (Some(u), _) => u.to_string(),
            (_, Some(i)) => i.to_string(),
            _ => n.to_string(),
        },
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(items)) => items.iter().map(|v| cell(Some(v))).collect::<Vec<_>>().join(";"),
        Some(other @ Value::Object(_)) => other.to_string(),
    }
}

/// Renders the records; JSON gives a single object for one record and an
/// array otherwise.
pub fn render_report<T: Record>(records: &[T], format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut s = if records.len() == 1 {
                serde_json::to_string_pretty(&records[0])?
            } else {
                serde_json::to_string_pretty(records)?
            };
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(T::columns())?;
            for r in records {
                let v = serde_json::to_value(r)?;
                w.write_record(T::columns().iter().map(|c| cell(lookup(&v, c))))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

/// Writes the rendered records to `path`, creating parent directories.
pub fn emit_report<T: Record>(records: &[T], format: Format, path: &Path) -> Result<()> {
    let text = render_report(records, format)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

impl Record for RegimeReport {
    fn columns() -> &'static [&'static str] {
        &[
            "lambda",
            "C",
            "epsilon",
            "tau1",
            "t_epsilon",
            "regime",
            "delta_budget",
            "log2_delta_budget",
            "underflow",
        ]
    }
}

impl Record for TightnessReport {
    fn columns() -> &'static [&'static str] {
        &["family", "n", "tau1", "delta_actual", "delta_budget", "gap", "epsilon"]
    }
}

impl Record for SeparationReport {
    fn columns() -> &'static [&'static str] {
        &[
            "n",
            "t",
            "start",
            "perturbed_mass_quarters",
            "ideal_mass_thirds",
            "thirds_fraction",
            "rho_to_stationary",
        ]
    }
}

impl Record for ConvergentAnchors {
    fn columns() -> &'static [&'static str] {
        &[
            "n",
            "ideal_upper_half",
            "perturbed_upper_half",
            "tv_gap",
            "ideal_event_probability",
            "perturbed_event_probability",
        ]
    }
}

impl Record for BallWalkBudget {
    fn columns() -> &'static [&'static str] {
        &[
            "n",
            "r",
            "diameter",
            "epsilon",
            "C",
            "lambda",
            "lambda_c",
            "tau1_estimate",
            "delta_estimate",
            "regime.t_epsilon",
            "regime.delta_budget",
            "note",
        ]
    }
}

impl Record for ErrorBudgetSample {
    fn columns() -> &'static [&'static str] {
        &[
            "phi_error",
            "s_error",
            "w_error",
            "y_error",
            "void_mismatch",
            "u_near_zero",
            "rejection_mismatch",
            "in_eta_shell",
            "attempts",
        ]
    }
}
