//! Reports and byte-stable file emission.
//!
//! JSON objects are written with sorted keys and floats with C's `%.17g`
//! formatting; CSV cells use the same float format.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{CliError, Command, Result};

/// `printf("%.17g", x)`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mant), exp.abs())
    } else {
        strip_zeros(&format!("{x:.*}", (16 - exp) as usize))
    }
}

fn strip_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |k: usize| "  ".repeat(k);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64(), n.as_f64()) {
            (Some(i), _, _) => out.push_str(&i.to_string()),
            (_, Some(u), _) => out.push_str(&u.to_string()),
            (_, _, Some(f)) if f.is_finite() => out.push_str(&fmt_g17(f)),
            (_, _, f) => out.push_str(&format!("\"{}\"", fmt_g17(f.unwrap_or(f64::NAN)))),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push_str(": ");
                write_value(&m[*k], indent + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON with sorted keys and `%.17g` floats.
pub fn to_json(v: &impl Serialize) -> Result<Vec<u8>> {
    let v = serde_json::to_value(v).map_err(|e| CliError::Schema(e.to_string()))?;
    let mut s = String::new();
    write_value(&v, 0, &mut s);
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub metric: String,
    pub value: f64,
    /// `"<="`, `">="` or `"holds"`.
    pub relation: &'static str,
    pub bound: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn describe(&self) -> String {
        match self.bound {
            Some(b) => format!("{} = {} violates {} {}", self.metric, fmt_g17(self.value), self.relation, fmt_g17(b)),
            None => format!("{} does not hold", self.metric),
        }
    }
}

/// Everything a command produces before anything is written.
#[derive(Debug)]
pub struct Outcome {
    pub params: Value,
    pub metrics: Map<String, Value>,
    pub checks: Vec<Check>,
    pub files: BTreeMap<String, Vec<u8>>,
}

impl Outcome {
    pub fn new(params: &impl Serialize) -> Result<Self> {
        Ok(Self {
            params: serde_json::to_value(params).map_err(|e| CliError::Schema(e.to_string()))?,
            metrics: Map::new(),
            checks: Vec::new(),
            files: BTreeMap::new(),
        })
    }

    pub fn metric(&mut self, name: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).unwrap_or(Value::Null);
        self.metrics.insert(name.to_string(), v);
    }

    pub fn at_most(&mut self, metric: &str, value: f64, bound: f64) {
        self.checks.push(Check {
            metric: metric.into(),
            value,
            relation: "<=",
            bound: Some(bound),
            pass: value <= bound,
        });
    }

    pub fn at_least(&mut self, metric: &str, value: f64, bound: f64) {
        self.checks.push(Check {
            metric: metric.into(),
            value,
            relation: ">=",
            bound: Some(bound),
            pass: value >= bound,
        });
    }

    pub fn holds(&mut self, metric: &str, ok: bool) {
        self.checks.push(Check {
            metric: metric.into(),
            value: if ok { 1.0 } else { 0.0 },
            relation: "holds",
            bound: None,
            pass: ok,
        });
    }

    pub fn json(&mut self, name: &str, v: &impl Serialize) -> Result<()> {
        self.files.insert(name.into(), to_json(v)?);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) {
        let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        self.files.insert(name.into(), csv_bytes(&header, rows));
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: Command,
    pub config: Value,
    pub metrics: Map<String, Value>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub files: Vec<String>,
}

impl Report {
    pub fn new(command: Command, seed: u64, o: Outcome) -> (Self, BTreeMap<String, Vec<u8>>) {
        let pass = o.checks.iter().all(|c| c.pass);
        let config = serde_json::json!({
            "command": command,
            "seed": seed,
            "params": o.params,
        });
        let report = Self {
            command,
            config,
            metrics: o.metrics,
            checks: o.checks,
            pass,
            files: o.files.keys().cloned().collect(),
        };
        (report, o.files)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let err = |e: std::io::Error| CliError::Write {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(err)?;
    }
    fs::write(path, bytes).map_err(err)
}

/// Writes the data files, `report.json` and the separate `timing.json`.
pub fn emit(out: &Path, report: &Report, files: &BTreeMap<String, Vec<u8>>, seconds: f64) -> Result<()> {
    for (name, bytes) in files {
        write_file(&out.join(name), bytes)?;
    }
    write_file(&out.join("report.json"), &to_json(report)?)?;
    write_file(&out.join("timing.json"), &to_json(&serde_json::json!({ "wall_clock_seconds": seconds }))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        let cases = [
            (0.1, "0.10000000000000001"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (1e-5, "1.0000000000000001e-05"),
            (123456.0, "123456"),
            (1e17, "1e+17"),
            (1e16, "10000000000000000"),
            (0.0001, "0.0001"),
            (std::f64::consts::PI, "3.1415926535897931"),
            (-0.0, "-0"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_g17(x), s, "{x}");
        }
    }

    #[test]
    fn g17_round_trips() {
        for x in [1.0 / 3.0, 2f64.sqrt() * 1e-300, 6.02e23, -7.5e-8] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_keys_are_sorted() {
        let v = serde_json::json!({"b": 1, "a": {"d": 0.5, "c": []}});
        let s = String::from_utf8(to_json(&v).unwrap()).unwrap();
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.find("\"c\"").unwrap() < s.find("\"d\"").unwrap());
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let b = csv_bytes(&["x".into(), "y".into()], &[vec!["1".into(), "2".into()]]);
        assert_eq!(String::from_utf8(b).unwrap(), "x,y\n1,2\n");
    }
}
