//! Versioned CSV result tables.
//!
//! Every table has the same columns:
//! `experiment,row,params,quantity,lower,measured,bound,pass`.
//! `lower` and `bound` may be empty (unbounded on that side); `pass` is
//! true iff `lower ≤ measured ≤ bound`. Floats are printed with 17
//! significant digits.

use std::fmt::Write as _;

use num_bigint::BigUint;

pub const CSV_VERSION: &str = "v1";
pub const COLUMNS: &str = "experiment,row,params,quantity,lower,measured,bound,pass";

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Empty,
    Float(f64),
    Int(u64),
    Big(BigUint),
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Empty => String::new(),
            Value::Float(x) => format_float(*x),
            Value::Int(n) => n.to_string(),
            Value::Big(n) => n.to_string(),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<usize> for Value {
    fn from(n: usize) -> Self {
        Value::Int(n as u64)
    }
}

impl From<BigUint> for Value {
    fn from(n: BigUint) -> Self {
        Value::Big(n)
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

fn le(a: &Value, b: &Value) -> Option<bool> {
    match (a, b) {
        (Value::Empty, _) | (_, Value::Empty) => None,
        (Value::Float(x), Value::Float(y)) => Some(x <= y),
        (Value::Int(x), Value::Int(y)) => Some(x <= y),
        (Value::Big(x), Value::Big(y)) => Some(x <= y),
        (Value::Int(x), Value::Big(y)) => Some(&BigUint::from(*x) <= y),
        (Value::Big(x), Value::Int(y)) => Some(x <= &BigUint::from(*y)),
        (Value::Int(x), Value::Float(y)) => Some((*x as f64) <= *y),
        (Value::Float(x), Value::Int(y)) => Some(*x <= *y as f64),
        (Value::Big(_), Value::Float(_)) | (Value::Float(_), Value::Big(_)) => Some(false),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub row: String,
    pub params: String,
    pub quantity: String,
    pub lower: Value,
    pub measured: Value,
    pub bound: Value,
}

impl Row {
    pub fn new(row: impl Into<String>, params: impl Into<String>, quantity: impl Into<String>) -> Self {
        Self {
            row: row.into(),
            params: params.into(),
            quantity: quantity.into(),
            lower: Value::Empty,
            measured: Value::Empty,
            bound: Value::Empty,
        }
    }

    pub fn measured(mut self, v: impl Into<Value>) -> Self {
        self.measured = v.into();
        self
    }

    pub fn upper(mut self, v: impl Into<Value>) -> Self {
        self.bound = v.into();
        self
    }

    pub fn lower(mut self, v: impl Into<Value>) -> Self {
        self.lower = v.into();
        self
    }

    pub fn exact(self, v: impl Into<Value>) -> Self {
        let v = v.into();
        self.lower(v.clone()).upper(v)
    }

    pub fn pass(&self) -> bool {
        if matches!(self.measured, Value::Float(x) if x.is_nan()) {
            return false;
        }
        le(&self.lower, &self.measured).unwrap_or(true) && le(&self.measured, &self.bound).unwrap_or(true)
    }
}

/// Joins `key=value` pairs with `;`.
pub fn params(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub experiment: String,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(experiment: &str) -> Self {
        Self { experiment: experiment.to_string(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(Row::pass)
    }

    pub fn find<'a>(&'a self, quantity: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.quantity == quantity)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# rescover-csv {CSV_VERSION} experiment={}", self.experiment);
        let _ = writeln!(out, "{COLUMNS}");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.experiment,
                r.row,
                r.params,
                r.quantity,
                r.lower.render(),
                r.measured.render(),
                r.bound.render(),
                r.pass()
            );
        }
        out
    }
}
