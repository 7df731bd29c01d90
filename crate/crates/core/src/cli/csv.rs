use std::path::Path;

use crate::error::{Error, Result};

/// `x` with 9 significant digits, in the style of C's `%.9g`.
pub fn g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-4..9).contains(&exp) {
        trim(format!("{x:.*}", (8 - exp) as usize))
    } else {
        format!("{}e{exp}", trim(mantissa.to_string()))
    }
}

/// CSV text with a header row and LF line endings.
pub struct Csv {
    text: String,
    columns: usize,
}

pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.columns, "row width must match the header");
        let cells: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::Num(v) => g9(v),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
                Cell::Text(s) => s,
            })
            .collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, &self.text).map_err(|e| Error::io(path, e))
    }
}

#[macro_export]
#[doc(hidden)]
macro_rules! csv_row {
    ($($cell:expr),* $(,)?) => {
        vec![$($crate::cli::csv::Cell::from($cell)),*]
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(g9(0.0), "0");
        assert_eq!(g9(1.0), "1");
        assert_eq!(g9(-2.5), "-2.5");
        assert_eq!(g9(1.0 / 3.0), "0.333333333");
        assert_eq!(g9(123456789.4), "123456789");
        assert_eq!(g9(1234567891.0), "1.23456789e9");
        assert_eq!(g9(9.9999999999), "10");
        assert_eq!(g9(1.5e-7), "1.5e-7");
        assert_eq!(g9(0.000123456789), "0.000123456789");
        assert_eq!(g9(1e-5), "1e-5");
        assert_eq!(g9(f64::NAN), "nan");
    }

    #[test]
    fn rows_are_lf_terminated_and_quoted() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(csv_row![1.5, "x,y"]);
        c.row(csv_row![3usize, true]);
        assert_eq!(c.text(), "a,b\n1.5,\"x,y\"\n3,true\n");
    }
}
