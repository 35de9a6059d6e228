//! Writing report tables to stdout or to an output directory.

use std::io::Write;
use std::path::PathBuf;

use clap::ValueEnum;
use divdis_core::io::ensure_writable;
use divdis_core::report::Table;
use divdis_core::{Error, Result};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Where and how tables are written.
#[derive(Debug, Clone)]
pub struct Sink {
    pub out: Option<PathBuf>,
    pub formats: Vec<Format>,
    pub force: bool,
}

impl Sink {
    /// Writes every table in every format. With an output directory each
    /// table becomes `<name>.<ext>`; otherwise everything goes to stdout.
    pub fn emit(&self, tables: &[Table]) -> Result<()> {
        let mut formats = self.formats.clone();
        formats.dedup();
        if formats.is_empty() {
            formats.push(Format::Csv);
        }
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                // check every target before touching any of them
                let targets: Vec<(PathBuf, &Table, Format)> = tables
                    .iter()
                    .flat_map(|t| {
                        formats
                            .iter()
                            .map(move |&f| (dir.join(format!("{}.{}", t.name, f.extension())), t, f))
                    })
                    .collect();
                for (path, _, _) in &targets {
                    ensure_writable(path, self.force)?;
                }
                for (path, table, format) in targets {
                    std::fs::write(&path, render(table, format)).map_err(|e| Error::Io { path, source: e })?;
                }
            }
            None => {
                let stdout = std::io::stdout();
                let mut lock = stdout.lock();
                let text = stdout_text(tables, &formats);
                lock.write_all(text.as_bytes()).map_err(|e| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })?;
            }
        }
        Ok(())
    }
}

fn render(table: &Table, format: Format) -> String {
    match format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    }
}

/// Stdout rendering: a lone CSV table is printed bare, several are each
/// preceded by a `# name` line; JSON is a single object keyed by table name.
pub fn stdout_text(tables: &[Table], formats: &[Format]) -> String {
    let mut out = String::new();
    for format in formats {
        match format {
            Format::Csv if tables.len() == 1 => out.push_str(&tables[0].to_csv()),
            Format::Csv => {
                for (i, t) in tables.iter().enumerate() {
                    if i > 0 {
                        out.push('\n');
                    }
                    out.push_str(&format!("# {}\n", t.name));
                    out.push_str(&t.to_csv());
                }
            }
            Format::Json => {
                let mut obj = Map::new();
                for t in tables {
                    obj.insert(t.name.clone(), t.to_json_value());
                }
                out.push_str(&serde_json::to_string_pretty(&Value::Object(obj)).expect("json"));
                out.push('\n');
            }
        }
    }
    out
}
