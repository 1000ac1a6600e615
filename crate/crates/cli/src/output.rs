//! Number formatting and writers shared by the subcommands.

use std::io::Write;
use std::path::Path;

use dig_core::explorer::{CriticalCurve, SweepGrid, Table, Value};
use dig_core::{Error, Result};
use serde::Serialize;
use serde_json::Value as Json;

pub const SIGNIFICANT_DIGITS: usize = 15;

/// `x` rounded to 15 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

/// Shortest text that reproduces `round_sig(x)`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig(x);
    let a = r.abs();
    if r == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn round_json(v: &mut Json) {
    match v {
        Json::Number(n) => {
            if let Some(x) = n.as_f64().filter(|_| !n.is_i64() && !n.is_u64()) {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        Json::Array(items) => items.iter_mut().for_each(round_json),
        Json::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
    round_json(&mut v);
    serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))
}

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = to_json(value)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| Error::Io(e.to_string()))
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn cell(v: &Value) -> String {
    match v {
        Value::Num(x) => fmt_num(*x),
        Value::Text(s) => s.clone(),
    }
}

pub fn write_table<W: Write>(w: W, table: &Table) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(&table.headers).map_err(io_err)?;
    for row in &table.rows {
        csv.write_record(row.iter().map(cell)).map_err(io_err)?;
    }
    csv.flush().map_err(io_err)
}

pub fn grid_table(grid: &SweepGrid) -> Table {
    let mut rows = Vec::with_capacity(grid.m_values.len() * grid.t_values.len());
    for (i, &m) in grid.m_values.iter().enumerate() {
        for (j, &t) in grid.t_values.iter().enumerate() {
            rows.push(vec![
                Value::Num(m),
                Value::Num(t),
                Value::Num(grid.lambda[i][j]),
                Value::Text(grid.status[i][j].label().to_string()),
            ]);
        }
    }
    Table {
        name: "grid".into(),
        headers: ["m", "T", "lambda", "status"].map(String::from).to_vec(),
        rows,
    }
}

pub fn curve_table(curve: &CriticalCurve) -> Table {
    let mut rows = Vec::new();
    for (b, branch) in curve.branches.iter().enumerate() {
        for p in &branch.points {
            rows.push(vec![
                Value::Num(b as f64),
                Value::Num(p.m),
                Value::Num(p.t),
                Value::Num(p.nu),
                Value::Num(p.residual),
            ]);
        }
    }
    Table {
        name: "curve".into(),
        headers: ["branch", "m", "T", "nu", "lambda_residual"]
            .map(String::from)
            .to_vec(),
        rows,
    }
}

/// Writes `table` as CSV to `path`, or to stdout when `path` is `None`.
pub fn emit_table(table: &Table, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            write_table(std::io::BufWriter::new(f), table)
        }
        None => write_table(std::io::stdout().lock(), table),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_digits() {
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333333");
        assert_eq!(fmt_num(2.0 / 3.0 * 1e-7), "6.66666666666667e-8");
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(-0.25), "-0.25");
        assert_eq!(fmt_num(f64::NAN), "NaN");
        assert_eq!(fmt_num(1e20), "1e20");
    }

    #[test]
    fn json_numbers_are_rounded() {
        let s = to_json(&serde_json::json!({"x": 1.0 / 3.0, "k": 7, "v": [0.1 + 0.2]})).unwrap();
        assert!(s.contains("0.333333333333333") && !s.contains("0.3333333333333333"));
        assert!(s.contains("\"k\": 7"));
        assert!(s.contains("0.3\n") || s.contains("0.3\r") || s.contains("0.3 ") || s.contains("0.3]") || s.contains("    0.3"));
    }
}
