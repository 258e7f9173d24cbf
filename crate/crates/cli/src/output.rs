//! Tables with `#` metadata headers, written as CSV and optionally mirrored
//! as JSON with a gnuplot script alongside.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::config::{OutputOptions, CONFIG_LINE_PREFIX};

/// Numbers are written with 12 significant digits.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.11e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => quote(s),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => format_number(*x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number),
            Cell::Int(n) => json!(n),
            Cell::Text(s) => json!(s),
        }
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Columns drawn against the first one by the plot script.
    pub plot_columns: Vec<usize>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<String>) -> Self {
        Self { name: name.into(), columns, rows: Vec::new(), plot_columns: Vec::new() }
    }
}

/// Ordered `key: value` lines followed by the embedded configuration.
#[derive(Debug, Clone, Default)]
pub struct Header {
    entries: Vec<(String, String)>,
    config: String,
}

impl Header {
    pub fn new(config_toml: String) -> Self {
        Self { entries: Vec::new(), config: config_toml }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    fn lines(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str("# config:\n");
        for line in self.config.lines() {
            out.push_str(CONFIG_LINE_PREFIX);
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

pub fn render_csv(table: &Table, header: &Header) -> String {
    let mut out = header.lines();
    out.push_str(&table.columns.iter().map(|c| quote(c)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

fn render_json(table: &Table, header: &Header) -> String {
    let metadata: Map<String, Value> = header.entries.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let rows: Vec<Value> = table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
    let doc = json!({
        "name": table.name,
        "metadata": metadata,
        "config": header.config,
        "columns": table.columns,
        "rows": rows,
    });
    serde_json::to_string_pretty(&doc).expect("JSON value serializes") + "\n"
}

fn render_gnuplot(table: &Table) -> String {
    let mut out = format!(
        "# gnuplot script for {name}.csv\nset datafile separator ','\nset key autotitle columnhead\nset xlabel '{x}'\n",
        name = table.name,
        x = table.columns[0]
    );
    let curves: Vec<String> = table
        .plot_columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let file = if i == 0 { format!("'{}.csv'", table.name) } else { "''".into() };
            format!("{file} using 1:{} with lines", c + 1)
        })
        .collect();
    if !curves.is_empty() {
        out.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    }
    out
}

/// Write through a temporary file so a file is either complete or absent.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Write `table` into `dir` as CSV plus the mirrors `options` asks for.
pub fn write_table(dir: &Path, table: &Table, header: &Header, options: &OutputOptions) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv = dir.join(format!("{}.csv", table.name));
    write_atomic(&csv, &render_csv(table, header))?;
    written.push(csv);
    if options.json {
        let path = dir.join(format!("{}.json", table.name));
        write_atomic(&path, &render_json(table, header))?;
        written.push(path);
    }
    if options.plot {
        let path = dir.join(format!("{}.gp", table.name));
        write_atomic(&path, &render_gnuplot(table))?;
        written.push(path);
    }
    Ok(written)
}
