//! Report files and the console table.

use std::path::Path;

use ctvae::metrics::{Averaging, EvalReport};
use ctvae::{Error, Result};
use serde::Serialize;

fn averaging_name(a: Averaging) -> String {
    match a {
        Averaging::Macro => "macro".into(),
        Averaging::Binary { positive } => format!("binary:{positive}"),
    }
}

/// Writes any serializable value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("cannot serialize {}: {e}", path.display())))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// `report.json` and `report.csv` under `dir`.
pub fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    write_json(&dir.join("report.json"), reports)?;
    let mut s = String::from("name,n_test,accuracy,precision,recall,fscore,averaging,d_bet,d_wit\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{:?},{:?},{:?},{:?},{},{:?},{:?}\n",
            r.name,
            r.n_test,
            r.accuracy,
            r.precision,
            r.recall,
            r.fscore,
            averaging_name(r.averaging),
            r.d_bet,
            r.d_wit
        ));
    }
    let path = dir.join("report.csv");
    std::fs::write(&path, s).map_err(|e| Error::io(path, e))
}

/// One column per report, one row per measure.
pub fn table(reports: &[EvalReport]) -> String {
    let rows: [(&str, fn(&EvalReport) -> String); 7] = [
        ("accuracy", |r| format!("{:.4}", r.accuracy)),
        ("precision", |r| format!("{:.4}", r.precision)),
        ("recall", |r| format!("{:.4}", r.recall)),
        ("fscore", |r| format!("{:.4}", r.fscore)),
        ("d_bet", |r| format!("{:.3e}", r.d_bet)),
        ("d_wit", |r| format!("{:.3e}", r.d_wit)),
        ("n_test", |r| r.n_test.to_string()),
    ];
    let width = reports
        .iter()
        .map(|r| r.name.len())
        .chain(std::iter::once(10))
        .max()
        .unwrap_or(10)
        + 2;
    let mut out = format!("{:<10}", "");
    for r in reports {
        out.push_str(&format!("{:>width$}", r.name));
    }
    out.push('\n');
    for (label, f) in rows {
        out.push_str(&format!("{label:<10}"));
        for r in reports {
            out.push_str(&format!("{:>width$}", f(r)));
        }
        out.push('\n');
    }
    if let Some(r) = reports.first() {
        out.push_str(&format!("(averaging: {})\n", averaging_name(r.averaging)));
    }
    out
}
