use std::fmt::Write as _;

use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
    Csv,
}

/// Outcome classes, mapped onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Fail => 2,
            Status::Inconclusive => 3,
        }
    }

    /// FAIL dominates INCONCLUSIVE, which dominates PASS.
    pub fn worst(statuses: impl IntoIterator<Item = Status>) -> Status {
        statuses.into_iter().fold(Status::Pass, |acc, s| match (acc, s) {
            (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
            (Status::Inconclusive, _) | (_, Status::Inconclusive) => Status::Inconclusive,
            _ => Status::Pass,
        })
    }
}

/// A rendered subcommand result: the JSON document plus a flat table view.
pub struct Report {
    pub json: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub status: Status,
}

impl Report {
    pub fn new<T: Serialize>(value: &T, header: &[&str], status: Status) -> Self {
        Report {
            json: fockforge::json::to_string(value),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            status,
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => format!("{}\n", self.json),
            Format::Table => self.table(),
            Format::Csv => self.csv(),
        }
    }

    fn table(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(&self.header);
        line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
        for row in &self.rows {
            line(row);
        }
        out
    }

    fn csv(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = row.iter().map(|c| csv_cell(c)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

fn csv_cell(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

/// Shortest round-trip form, in exponent notation for very small or large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn flag(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_status_orders_fail_first() {
        assert_eq!(Status::worst([]), Status::Pass);
        assert_eq!(Status::worst([Status::Pass, Status::Inconclusive]), Status::Inconclusive);
        assert_eq!(Status::worst([Status::Inconclusive, Status::Fail, Status::Pass]), Status::Fail);
    }

    #[test]
    fn csv_quotes_only_when_needed() {
        let mut r = Report::new(&(), &["a", "b"], Status::Pass);
        r.row(vec!["1 * e + f".into(), "x,y".into()]);
        assert_eq!(r.render(Format::Csv), "a,b\n1 * e + f,\"x,y\"\n");
    }

    #[test]
    fn numbers_round_trip() {
        assert_eq!(num(1.0), "1");
        assert_eq!(num(std::f64::consts::SQRT_2), "1.4142135623730951");
        assert_eq!(num(2.5e-13), "2.5e-13");
        assert_eq!(num(0.0), "0");
    }

    #[test]
    fn table_aligns_columns() {
        let mut r = Report::new(&(), &["d", "n_d"], Status::Pass);
        r.row(vec!["10".into(), "1".into()]);
        assert_eq!(r.render(Format::Table), "d   n_d\n--  ---\n10  1\n");
    }
}
