use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::{format_cell, format_ratio};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Text,
    /// A ratio printed as `.874`.
    Ratio,
    /// Mean and standard deviation, printed as `.874 (.009)`; two CSV columns.
    Stat,
    Integer,
    /// Fixed three decimals.
    Decimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Text(String),
    Number(f64),
    Stat([f64; 2]),
}

/// A result table rendered as CSV and as aligned text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

impl Table {
    pub fn new(name: &str, title: &str, columns: &[(&str, ColumnKind)]) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            columns: columns
                .iter()
                .map(|&(n, kind)| Column { name: n.into(), kind })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    fn text_cell(kind: ColumnKind, cell: &Cell) -> String {
        match (kind, cell) {
            (_, Cell::Text(s)) => s.clone(),
            (ColumnKind::Stat, Cell::Stat([m, s])) => format_cell(*m, *s),
            (ColumnKind::Ratio, Cell::Number(v)) | (ColumnKind::Stat, Cell::Number(v)) => format_ratio(*v),
            (ColumnKind::Integer, Cell::Number(v)) => format!("{v:.0}"),
            (_, Cell::Number(v)) => format!("{v:.3}"),
            (_, Cell::Stat([m, s])) => format!("{m:.3} ({s:.3})"),
        }
    }

    /// CSV with full-precision numbers; stat columns become `_mean`/`_std` pairs.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = Vec::new();
        for c in &self.columns {
            if c.kind == ColumnKind::Stat {
                header.push(format!("{}_mean", slug(&c.name)));
                header.push(format!("{}_std", slug(&c.name)));
            } else {
                header.push(slug(&c.name));
            }
        }
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = Vec::new();
            for (c, cell) in self.columns.iter().zip(row) {
                match cell {
                    Cell::Text(s) => rec.push(s.clone()),
                    Cell::Number(v) => rec.push(v.to_string()),
                    Cell::Stat([m, s]) => {
                        rec.push(m.to_string());
                        rec.push(s.to_string());
                    }
                }
                if c.kind == ColumnKind::Stat && !matches!(cell, Cell::Stat(_)) {
                    rec.push(String::new());
                }
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| self.columns.iter().zip(r).map(|(c, v)| Self::text_cell(c.kind, v)).collect())
            .collect();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| cells.iter().map(|r| r[i].chars().count()).fold(c.name.chars().count(), usize::max))
            .collect();
        let line = |parts: Vec<&str>| -> String {
            let padded: Vec<String> = parts
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (p, &w))| if i == 0 { format!("{p:<w$}") } else { format!("{p:>w$}") })
                .collect();
            padded.join("  ").trim_end().to_string()
        };
        let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        let mut out = String::new();
        writeln!(out, "{}", self.title).unwrap();
        writeln!(out, "{}", "-".repeat(total)).unwrap();
        writeln!(out, "{}", line(self.columns.iter().map(|c| c.name.as_str()).collect())).unwrap();
        writeln!(out, "{}", "-".repeat(total)).unwrap();
        for row in &cells {
            writeln!(out, "{}", line(row.iter().map(String::as_str).collect())).unwrap();
        }
        writeln!(out, "{}", "-".repeat(total)).unwrap();
        out
    }
}
