//! Tabular experiment records and their CSV/JSON renderings.
//!
//! Every subcommand produces one [`Table`] with a fixed column set. Floats
//! are serialized with 17 significant digits (`{:.16e}`) so parsing the
//! output reproduces each value bit-exactly; absent optional values render
//! as empty CSV fields and JSON `null`s.

use std::fmt::Write as _;

/// One typed field of a record row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Str(String),
    Int(i128),
    OptInt(Option<i128>),
    Float(f64),
    OptFloat(Option<f64>),
    Bool(bool),
    OptBool(Option<bool>),
}

/// Serializes a float with 17 significant digits; round-trips exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Escapes a string for embedding in a JSON literal.
pub fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Str(s) => {
                debug_assert!(
                    !s.contains([',', '"', '\n']),
                    "record strings are identifiers; `{s}` needs quoting"
                );
                s.clone()
            }
            Cell::Int(i) | Cell::OptInt(Some(i)) => i.to_string(),
            Cell::OptInt(None) => String::new(),
            Cell::Float(x) => fmt_float(*x),
            Cell::OptFloat(Some(x)) => fmt_float(*x),
            Cell::OptFloat(None) => String::new(),
            Cell::Bool(b) => b.to_string(),
            Cell::OptBool(Some(b)) => b.to_string(),
            Cell::OptBool(None) => String::new(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Str(s) => format!("\"{}\"", json_escape(s)),
            Cell::Int(i) | Cell::OptInt(Some(i)) => i.to_string(),
            Cell::Float(x) | Cell::OptFloat(Some(x)) => {
                if x.is_finite() {
                    fmt_float(*x)
                } else {
                    "null".to_string()
                }
            }
            Cell::OptInt(None) | Cell::OptFloat(None) | Cell::OptBool(None) => "null".to_string(),
            Cell::Bool(b) | Cell::OptBool(Some(b)) => b.to_string(),
        }
    }
}

/// A fixed-schema set of record rows for one run.
#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    extra_keys: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            extra_keys: Vec::new(),
        }
    }

    /// Marks a non-integer column (a float sweep axis) as an aggregation
    /// group key, so aggregation never averages across it.
    pub fn mark_key(&mut self, column: &str) {
        assert!(
            self.columns.iter().any(|c| c == column),
            "unknown column `{column}`"
        );
        self.extra_keys.push(column.to_string());
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the column set"
        );
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Header line plus one comma-separated line per row.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// JSON array of flat objects keyed by column name.
    pub fn to_json(&self) -> String {
        let mut out = String::from("[\n");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str("  {");
            for (j, (col, cell)) in self.columns.iter().zip(row).enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "\"{}\": {}", json_escape(col), cell.json());
            }
            out.push('}');
            if i + 1 < self.rows.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("]\n");
        out
    }

    /// Seed-aggregated view: rows grouped by every string and integer
    /// column except `seed`, float columns reduced to mean and sample
    /// standard deviation, boolean flags to the fraction true, plus a
    /// trailing group-size column.
    pub fn aggregate(&self) -> Table {
        let is_key = |idx: usize, cell: &Cell| {
            let name = &self.columns[idx];
            (matches!(cell, Cell::Str(_) | Cell::Int(_)) && name != "seed")
                || self.extra_keys.contains(name)
        };
        if self.is_empty() {
            return Table::new(&["n"]);
        }
        let probe = &self.rows[0];

        let mut columns: Vec<String> = Vec::new();
        for (idx, cell) in probe.iter().enumerate() {
            let name = &self.columns[idx];
            if is_key(idx, cell) {
                columns.push(name.clone());
            } else {
                match cell {
                    Cell::Float(_) | Cell::OptFloat(_) => {
                        columns.push(format!("{name}_mean"));
                        columns.push(format!("{name}_std"));
                    }
                    Cell::Bool(_) | Cell::OptBool(_) => columns.push(format!("{name}_frac")),
                    _ => {}
                }
            }
        }
        columns.push("n".to_string());
        let column_names: Vec<&str> = columns.iter().map(String::as_str).collect();
        let mut out = Table::new(&column_names);

        // Group rows by the rendered key tuple, keeping first-seen order of
        // nothing: emission is sorted by key for determinism.
        let mut groups: std::collections::BTreeMap<Vec<String>, Vec<&Vec<Cell>>> =
            std::collections::BTreeMap::new();
        for row in &self.rows {
            let key: Vec<String> = row
                .iter()
                .enumerate()
                .filter(|(idx, cell)| is_key(*idx, cell))
                .map(|(_, cell)| cell.csv())
                .collect();
            groups.entry(key).or_default().push(row);
        }

        for rows in groups.values() {
            let mut agg_row: Vec<Cell> = Vec::new();
            for (idx, cell) in rows[0].iter().enumerate() {
                if is_key(idx, cell) {
                    agg_row.push(cell.clone());
                    continue;
                }
                match cell {
                    Cell::Float(_) | Cell::OptFloat(_) => {
                        let values: Vec<f64> = rows
                            .iter()
                            .filter_map(|r| match &r[idx] {
                                Cell::Float(x) => Some(*x),
                                Cell::OptFloat(x) => *x,
                                _ => None,
                            })
                            .collect();
                        if values.is_empty() {
                            agg_row.push(Cell::OptFloat(None));
                            agg_row.push(Cell::OptFloat(None));
                        } else {
                            let n = values.len() as f64;
                            let mean = values.iter().sum::<f64>() / n;
                            let std = if values.len() < 2 {
                                0.0
                            } else {
                                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                                    / (n - 1.0))
                                    .sqrt()
                            };
                            agg_row.push(Cell::Float(mean));
                            agg_row.push(Cell::Float(std));
                        }
                    }
                    Cell::Bool(_) | Cell::OptBool(_) => {
                        let values: Vec<bool> = rows
                            .iter()
                            .filter_map(|r| match &r[idx] {
                                Cell::Bool(b) => Some(*b),
                                Cell::OptBool(b) => *b,
                                _ => None,
                            })
                            .collect();
                        if values.is_empty() {
                            agg_row.push(Cell::OptFloat(None));
                        } else {
                            let frac =
                                values.iter().filter(|&&b| b).count() as f64 / values.len() as f64;
                            agg_row.push(Cell::Float(frac));
                        }
                    }
                    _ => {}
                }
            }
            agg_row.push(Cell::Int(rows.len() as i128));
            out.push(agg_row);
        }
        out
    }
}
