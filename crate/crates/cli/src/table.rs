use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned columns.
    Table,
    Csv,
    /// One JSON object per line.
    Records,
}

/// Rows of JSON cells under fixed column names, rendered in any format.
pub struct Table {
    headers: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
}

fn text(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if !n.is_i64() && !n.is_u64() => format!("{f:.4}"),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

impl Table {
    pub fn new<const N: usize>(headers: [&'static str; N]) -> Self {
        Self {
            headers: headers.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn row<const N: usize>(&mut self, cells: [Value; N]) {
        debug_assert_eq!(N, self.headers.len());
        self.rows.push(cells.to_vec());
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => {
                let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(text).collect()).collect();
                let widths: Vec<usize> = (0..self.headers.len())
                    .map(|i| cells.iter().map(|r| r[i].len()).chain([self.headers[i].len()]).max().unwrap_or(0))
                    .collect();
                let line = |r: Vec<&str>| {
                    r.iter()
                        .zip(&widths)
                        .map(|(c, w)| format!("{c:>w$}"))
                        .collect::<Vec<_>>()
                        .join("  ")
                };
                let mut out = line(self.headers.clone());
                for r in &cells {
                    out.push('\n');
                    out.push_str(&line(r.iter().map(String::as_str).collect()));
                }
                out
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.headers).expect("in-memory write");
                for r in &self.rows {
                    let raw = r.iter().map(|v| match v {
                        Value::Null => String::new(),
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    });
                    w.write_record(raw).expect("in-memory write");
                }
                let bytes = w.into_inner().expect("in-memory flush");
                String::from_utf8(bytes).expect("csv output is utf-8").trim_end().to_string()
            }
            Format::Records => self
                .rows
                .iter()
                .map(|r| {
                    let obj: Map<String, Value> =
                        self.headers.iter().map(|h| h.to_string()).zip(r.iter().cloned()).collect();
                    Value::Object(obj).to_string()
                })
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }

    pub fn print(&self, format: Format) {
        println!("{}", self.render(format));
    }
}
