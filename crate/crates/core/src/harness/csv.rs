//! CSV output. Numbers are written in fixed notation with at least nine
//! significant digits; absent values are empty fields.

use std::io::Write;
use std::path::Path;

use super::run::ResultRecord;
use crate::error::Result;

pub const HEADER: &str = "sweep,scenario,rmse_deg,root_crlb_deg,trials,failures,wall_ms";

/// Fixed-notation rendering with nine significant digits (more for large
/// magnitudes, since no exponent is ever used).
pub fn format_fixed(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{:.8}", if v.is_finite() { 0.0 } else { v });
    }
    let exp = v.abs().log10().floor() as i64;
    let decimals = (8 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

fn optional(v: Option<f64>) -> String {
    v.map(format_fixed).unwrap_or_default()
}

pub fn format_record(r: &ResultRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        format_fixed(r.sweep),
        r.scenario,
        optional(r.rmse_deg),
        optional(r.root_crlb_deg),
        r.trials,
        r.failures,
        format_fixed(r.wall_ms)
    )
}

pub fn to_csv_string(records: &[ResultRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format_record(r));
        out.push('\n');
    }
    out
}

pub fn write_csv<W: Write>(records: &[ResultRecord], mut w: W) -> Result<()> {
    w.write_all(to_csv_string(records).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(records, std::io::BufWriter::new(file))
}
