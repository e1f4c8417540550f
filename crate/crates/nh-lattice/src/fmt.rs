//! Deterministic text output: shortest round-trip floats, LF-terminated CSV,
//! JSON with sorted keys.

use serde::Serialize;

use crate::error::Result;

/// Shortest representation that parses back to the same `f64`.
pub fn float(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Default)]
pub struct Csv {
    buf: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut c = Self {
            buf: String::new(),
            width: header.len(),
        };
        c.buf.push_str(&header.join(","));
        c.buf.push('\n');
        c
    }

    pub fn with_header(header: Vec<String>) -> Self {
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        Self::new(&refs)
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.width);
        let parts: Vec<String> = cells.iter().map(Cell::render).collect();
        self.buf.push_str(&parts.join(","));
        self.buf.push('\n');
    }

    pub fn floats(&mut self, xs: &[f64]) {
        let cells: Vec<Cell> = xs.iter().map(|&x| Cell::F(x)).collect();
        self.row(&cells);
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

pub enum Cell {
    F(f64),
    U(usize),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => float(*x),
            Cell::U(n) => n.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

/// Pretty JSON with keys sorted at every level and a trailing newline.
pub fn json<T: Serialize>(value: &T) -> Result<String> {
    // Routing through `Value` sorts object keys (BTreeMap-backed maps).
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}
