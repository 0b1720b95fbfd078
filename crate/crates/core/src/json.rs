//! JSON output with fixed float precision and complex matrix encoding.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};
use serde_json::Value;

use crate::linalg::{CMatrix, C64};

/// Writes every float with 17 significant digits; non-finite values become `null`.
#[derive(Default)]
pub struct PreciseFormatter {
    indent: usize,
    has_value: bool,
    pretty: bool,
}

impl PreciseFormatter {
    pub fn pretty() -> Self {
        PreciseFormatter { indent: 0, has_value: false, pretty: true }
    }

    fn newline<W: ?Sized + io::Write>(&self, w: &mut W) -> io::Result<()> {
        if self.pretty {
            w.write_all(b"\n")?;
            for _ in 0..self.indent {
                w.write_all(b"  ")?;
            }
        }
        Ok(())
    }
}

pub fn format_f64(v: f64) -> String {
    if !v.is_finite() {
        return "null".into();
    }
    format!("{v:.16e}")
}

impl Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"[")
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(if self.pretty { b": " } else { b":" })
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

/// Serializes with [`PreciseFormatter`], indented.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, PreciseFormatter::pretty());
    value.serialize(&mut ser).expect("serialization into memory cannot fail");
    String::from_utf8(out).expect("JSON is UTF-8")
}

/// Serde adapter writing a matrix as rows of `[re, im]` pairs.
pub struct MatrixRows<'a>(pub &'a CMatrix);

impl Serialize for MatrixRows<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m = self.0;
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect();
        rows.serialize(s)
    }
}

/// Reads a square `dim × dim` matrix of `[re, im]` pairs (plain numbers are accepted as real).
pub fn matrix_from_value(v: &Value, dim: usize) -> Result<CMatrix, String> {
    let rows = v.as_array().ok_or("matrix must be an array of rows")?;
    if rows.len() != dim {
        return Err(format!("expected {dim} rows, found {}", rows.len()));
    }
    let mut m = CMatrix::zeros(dim, dim);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or("matrix rows must be arrays")?;
        if row.len() != dim {
            return Err(format!("row {i} has {} entries, expected {dim}", row.len()));
        }
        for (j, z) in row.iter().enumerate() {
            m[(i, j)] = complex_from_value(z).ok_or_else(|| format!("bad entry at ({i}, {j})"))?;
        }
    }
    Ok(m)
}

fn complex_from_value(v: &Value) -> Option<C64> {
    if let Some(x) = v.as_f64() {
        return Some(C64::new(x, 0.0));
    }
    match v.as_array()?.as_slice() {
        [re, im] => Some(C64::new(re.as_f64()?, im.as_f64()?)),
        _ => None,
    }
}

/// Per-vertex (or per-edge) values serialized as a JSON object in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedValues<T>(pub Vec<(String, T)>);

impl<T> NamedValues<T> {
    pub fn get(&self, name: &str) -> Option<&T> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.0.iter().map(|(_, v)| v)
    }
}

impl<T: Serialize> Serialize for NamedValues<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(format_f64(1.0), "1.0000000000000000e0");
        assert_eq!(format_f64(f64::NAN), "null");
        let text = to_string(&serde_json::json!({"a": [1.5, 2], "b": {}}));
        assert!(text.contains("1.5000000000000000e0"));
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"][0], 1.5);
        assert_eq!(back["a"][1], 2);
    }

    #[test]
    fn matrices_round_trip() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = C64::new(0.25, -1.0 / 3.0);
        m[(1, 0)] = C64::new(1.0, 0.0);
        let text = to_string(&MatrixRows(&m));
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(matrix_from_value(&v, 2).unwrap(), m);
        assert!(matrix_from_value(&v, 3).is_err());
    }
}
