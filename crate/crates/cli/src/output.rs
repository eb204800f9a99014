use std::path::Path;

use crate::RunError;

/// Writes `header` then `rows` to `dir/name`.
pub fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &serde_json::Value) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)?;
    Ok(())
}

fn io(e: csv::Error) -> RunError {
    RunError::Io(e.into())
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Shortest round-trip decimal, switching to exponent form outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
