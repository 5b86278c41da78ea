//! Flat experiment rows and their CSV/JSON serialisation.
//!
//! A record is an ordered list of named values. Complex values expand into
//! `<name>_re` / `<name>_im` columns, reals are written with 17 significant
//! digits and infinite inverse temperatures as `inf`, so that a given run
//! always produces the same bytes.

use std::io::{self, Write};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value as Json};

use crate::kernel::InverseTemperature;

/// `{"re": .., "im": ..}` as used in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexRepr {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<ComplexRepr> for C64 {
    fn from(c: ComplexRepr) -> Self {
        C64::new(c.re, c.im)
    }
}

impl From<C64> for ComplexRepr {
    fn from(c: C64) -> Self {
        ComplexRepr { re: c.re, im: c.im }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Complex(C64),
    Beta(InverseTemperature),
    Text(String),
    Bool(bool),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<C64> for Value {
    fn from(v: C64) -> Self {
        Value::Complex(v)
    }
}

impl From<InverseTemperature> for Value {
    fn from(v: InverseTemperature) -> Self {
        Value::Beta(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any f64.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn real_json(v: f64) -> Json {
    match Number::from_f64(v) {
        Some(n) => Json::Number(n),
        None => Json::String(format_real(v)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    fields: Vec<(String, Value)>,
    /// Measured run time; kept out of the serialised output so that files
    /// are reproducible byte for byte.
    pub wall_time: Option<f64>,
}

impl RunRecord {
    pub fn new(run_id: impl Into<String>) -> Self {
        RunRecord { run_id: run_id.into(), fields: Vec::new(), wall_time: None }
    }

    /// Appends a field, or replaces the value of an existing one.
    pub fn set(&mut self, name: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        let name = name.into();
        let value = value.into();
        match self.fields.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.fields.push((name, value)),
        }
        self
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn real(&self, name: &str) -> Option<f64> {
        match self.get(name)? {
            Value::Real(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            Value::Beta(b) => Some(b.value()),
            _ => None,
        }
    }

    pub fn fields(&self) -> &[(String, Value)] {
        &self.fields
    }

    /// Flattened `(column, cell)` pairs, `run_id` first.
    pub fn cells(&self) -> Vec<(String, String)> {
        let mut out = vec![("run_id".to_string(), self.run_id.clone())];
        for (name, v) in &self.fields {
            match v {
                Value::Int(i) => out.push((name.clone(), i.to_string())),
                Value::Real(x) => out.push((name.clone(), format_real(*x))),
                Value::Complex(c) => {
                    out.push((format!("{name}_re"), format_real(c.re)));
                    out.push((format!("{name}_im"), format_real(c.im)));
                }
                Value::Beta(b) => out.push((name.clone(), format_real(b.value()))),
                Value::Text(t) => out.push((name.clone(), t.clone())),
                Value::Bool(b) => out.push((name.clone(), b.to_string())),
            }
        }
        out
    }

    pub fn to_json(&self) -> Json {
        let mut map = Map::new();
        map.insert("run_id".into(), Json::String(self.run_id.clone()));
        for (name, v) in &self.fields {
            match v {
                Value::Int(i) => {
                    map.insert(name.clone(), Json::from(*i));
                }
                Value::Real(x) => {
                    map.insert(name.clone(), real_json(*x));
                }
                Value::Complex(c) => {
                    map.insert(format!("{name}_re"), real_json(c.re));
                    map.insert(format!("{name}_im"), real_json(c.im));
                }
                Value::Beta(b) => {
                    map.insert(name.clone(), if b.is_vacuum() { Json::String("inf".into()) } else { real_json(b.value()) });
                }
                Value::Text(t) => {
                    map.insert(name.clone(), Json::String(t.clone()));
                }
                Value::Bool(b) => {
                    map.insert(name.clone(), Json::Bool(*b));
                }
            }
        }
        Json::Object(map)
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

/// Column order: first appearance across the records.
pub fn columns(records: &[RunRecord]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for r in records {
        for (c, _) in r.cells() {
            if !cols.contains(&c) {
                cols.push(c);
            }
        }
    }
    cols
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> io::Result<()> {
    let cols = columns(records);
    let mut w = csv_writer(out);
    w.write_record(&cols)?;
    for r in records {
        let cells = r.cells();
        w.write_record(cols.iter().map(|c| cells.iter().find(|(n, _)| n == c).map(|(_, v)| v.as_str()).unwrap_or("")))?;
    }
    w.flush()
}

pub fn to_csv_string(records: &[RunRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("records are UTF-8")
}

/// Pretty-printed JSON array with a trailing newline.
pub fn to_json_string(records: &[RunRecord]) -> String {
    let arr = Json::Array(records.iter().map(RunRecord::to_json).collect());
    normalise_json(&arr)
}

/// Canonical text form of an already parsed document.
pub fn normalise_json(doc: &Json) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("JSON values always serialise");
    s.push('\n');
    s
}

/// Long-format rows `(run_id, quantity, value)` for plotting tools.
pub fn to_long_csv(records: &[RunRecord]) -> String {
    let mut w = csv_writer(Vec::new());
    w.write_record(["run_id", "quantity", "value"]).expect("writing to a Vec cannot fail");
    for r in records {
        for (c, v) in r.cells().into_iter().skip(1) {
            w.write_record([r.run_id.as_str(), &c, &v]).expect("writing to a Vec cannot fail");
        }
    }
    String::from_utf8(w.into_inner().expect("flushing a Vec cannot fail")).expect("records are UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<RunRecord> {
        vec![
            RunRecord::new("a")
                .with("N", 3usize)
                .with("x", 0.1)
                .with("w", C64::new(0.0, 1.0 / 3.0))
                .with("beta", InverseTemperature::VACUUM)
                .with("ok", true),
            RunRecord::new("b").with("N", 4usize).with("note", "has, comma").with("x", -2.5e-300),
        ]
    }

    #[test]
    fn csv_layout() {
        let s = to_csv_string(&sample());
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "run_id,N,x,w_re,w_im,beta,ok,note");
        assert_eq!(
            lines[1],
            "a,3,1.0000000000000001e-1,0.0000000000000000e0,3.3333333333333331e-1,inf,true,"
        );
        assert_eq!(lines[2], "b,4,-2.5000000000000000e-300,,,,,\"has, comma\"");
        assert!(s.ends_with('\n') && !s.contains('\r'));
    }

    #[test]
    fn real_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -1e-308, f64::MIN_POSITIVE, 0.0] {
            let back: f64 = format_real(v).parse().unwrap();
            assert_eq!(back, v);
        }
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let s = to_json_string(&sample());
        let parsed: Json = serde_json::from_str(&s).unwrap();
        assert_eq!(normalise_json(&parsed), s);
        assert_eq!(parsed[0]["beta"], Json::String("inf".into()));
        assert_eq!(parsed[0]["w_im"].as_f64().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn set_replaces_in_place() {
        let mut r = RunRecord::new("r").with("a", 1usize).with("b", 2usize);
        r.set("a", 5usize);
        assert_eq!(r.fields()[0], ("a".to_string(), Value::Int(5)));
        assert_eq!(r.real("b"), Some(2.0));
    }
}
