//! Tabular scenario reports and their CSV / JSON renderings.
//!
//! Floats are written with 6 significant digits. JSON keys keep insertion
//! order, so re-running a scenario with the same inputs reproduces the files
//! byte for byte.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Rounds to 6 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Text form with 6 significant digits; plain decimal for moderate
/// magnitudes, scientific otherwise.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig(x);
    if r == 0.0 {
        return "0".into();
    }
    let a = r.abs();
    if (1e-4..1e6).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:.5e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_sig(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => num(*x),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Bool(b) => Value::from(*b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

/// JSON number rounded to 6 significant digits (`null` if not finite).
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(round_sig(x))
    } else {
        Value::Null
    }
}

/// Recursively rounds every float in a JSON value.
pub fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => num(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

/// A pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passes: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passes: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passes,
            detail: detail.into(),
        }
    }

    /// `|value - expected| <= tol`.
    pub fn near(name: impl Into<String>, value: f64, expected: f64, tol: f64) -> Self {
        Self::new(
            name,
            (value - expected).abs() <= tol,
            format!("{} vs {} (tol {})", format_sig(value), format_sig(expected), format_sig(tol)),
        )
    }

    pub fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(
            name,
            value < bound,
            format!("{} < {}", format_sig(value), format_sig(bound)),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub scenario: String,
    pub parameters: Map<String, Value>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Map<String, Value>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(scenario: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            scenario: scenario.into(),
            parameters: Map::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: Map::new(),
            checks: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.parameters.insert(key.to_string(), round_value(v));
    }

    pub fn summarize(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.summary.insert(key.to_string(), round_value(v));
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::SizeMismatch {
                expected: self.columns.len(),
                found: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passes)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| Error::Emit(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))
                .map_err(|e| Error::Emit(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Emit(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Emit(e.to_string()))
    }

    pub fn to_json_value(&self) -> Value {
        let mut o = Map::new();
        o.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
        o.insert("scenario".into(), Value::from(self.scenario.as_str()));
        o.insert("parameters".into(), Value::Object(self.parameters.clone()));
        o.insert(
            "columns".into(),
            Value::Array(self.columns.iter().map(|c| Value::from(c.as_str())).collect()),
        );
        o.insert(
            "rows".into(),
            Value::Array(
                self.rows
                    .iter()
                    .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
                    .collect(),
            ),
        );
        o.insert("summary".into(), Value::Object(self.summary.clone()));
        o.insert(
            "checks".into(),
            serde_json::to_value(&self.checks).unwrap_or(Value::Null),
        );
        o.insert("all_pass".into(), Value::from(self.all_pass()));
        Value::Object(o)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_json_value())
            .map_err(|e| Error::Emit(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig(0.497356213), "0.497356");
        assert_eq!(format_sig(12.31578), "12.3158");
        assert_eq!(format_sig(-4.0), "-4");
        assert_eq!(format_sig(1234567.0), "1.23457e6");
        assert_eq!(format_sig(1.5e-9), "1.50000e-9");
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(f64::NAN), "nan");
        assert_eq!(round_sig(0.979512345), 0.979512);
    }

    #[test]
    fn csv_and_json_render() {
        let mut r = Report::new("demo", &["i", "value", "label"]);
        r.param("cluster_db", -4.0);
        r.push_row(vec![1usize.into(), 0.1234567.into(), "a".into()]).unwrap();
        r.push_row(vec![2usize.into(), Cell::Empty, "b,c".into()]).unwrap();
        assert!(r.push_row(vec![Cell::Empty]).is_err());
        r.check(Check::near("x", 1.0, 1.05, 0.1));
        let csv = r.to_csv().unwrap();
        assert_eq!(csv, "i,value,label\n1,0.123457,a\n2,,\"b,c\"\n");
        let j: Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(j["schema_version"], 1);
        assert_eq!(j["rows"][0][1], 0.123457);
        assert_eq!(j["rows"][1][1], Value::Null);
        assert_eq!(j["all_pass"], true);
        let keys: Vec<&String> = j.as_object().unwrap().keys().collect();
        assert_eq!(keys[0], "schema_version");
    }

    #[test]
    fn failing_check_flips_verdict() {
        let mut r = Report::new("demo", &["a"]);
        r.check(Check::below("neg", 0.5, 0.1));
        assert!(!r.all_pass());
    }

    #[test]
    fn rendering_is_deterministic() {
        let build = || {
            let mut r = Report::new("d", &["x"]);
            r.summarize("z", vec![1.0 / 3.0, 2.0]);
            r.summarize("a", "text");
            r.push_row(vec![std::f64::consts::PI.into()]).unwrap();
            (r.to_csv().unwrap(), r.to_json().unwrap())
        };
        assert_eq!(build(), build());
    }
}
