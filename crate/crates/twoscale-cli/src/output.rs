//! CSV and manifest emission with a provenance header and reproducible
//! number text.
//!
//! Every file opens with `# version=`, `# config_hash=` and
//! `# master_seed=` comment lines, then one comment line per extra note,
//! then the column header. Floats are printed with Rust's shortest
//! round-trip formatting, so identical bits give identical bytes and a
//! rerun with the same header inputs reproduces the numeric columns
//! exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header values shared by every file of one invocation.
#[derive(Debug, Clone)]
pub struct Meta {
    pub config_hash: String,
    pub master_seed: u64,
}

/// Shortest round-trip text for a float; infinities print as `inf` /
/// `-inf` and are used for empty-tail rate estimates. Negative zero (a
/// negated zero bound) prints as plain `0`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

pub struct CsvFile {
    out: BufWriter<File>,
    path: PathBuf,
}

impl CsvFile {
    pub fn create(
        dir: &Path,
        name: &str,
        meta: &Meta,
        notes: &[String],
        columns: &[&str],
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut this = CsvFile {
            out: BufWriter::new(file),
            path,
        };
        this.line(&format!("# version={VERSION}"))?;
        this.line(&format!("# config_hash={}", meta.config_hash))?;
        this.line(&format!("# master_seed={}", meta.master_seed))?;
        for note in notes {
            this.line(&format!("# {note}"))?;
        }
        this.line(&columns.join(","))?;
        Ok(this)
    }

    fn line(&mut self, s: &str) -> Result<(), CliError> {
        writeln!(self.out, "{s}").map_err(|e| io_err(&self.path, e))
    }

    pub fn row(&mut self, values: &[f64]) -> Result<(), CliError> {
        let cells: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        self.line(&cells.join(","))
    }

    /// Row with preformatted cells, for mixed numeric and text columns.
    pub fn row_text(&mut self, cells: &[String]) -> Result<(), CliError> {
        self.line(&cells.join(","))
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.out.flush().map_err(|e| io_err(&self.path, e))?;
        Ok(self.path)
    }
}

/// Plain-text manifest: the provenance header plus one `key = value` line
/// per entry.
pub fn write_manifest(
    dir: &Path,
    name: &str,
    meta: &Meta,
    lines: &[String],
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut out = BufWriter::new(file);
    let mut put = |s: &str| writeln!(out, "{s}").map_err(|e| io_err(&path, e));
    put(&format!("# version={VERSION}"))?;
    put(&format!("# config_hash={}", meta.config_hash))?;
    put(&format!("# master_seed={}", meta.master_seed))?;
    for l in lines {
        put(l)?;
    }
    out.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Write the resolved config snapshot next to the outputs.
pub fn write_snapshot(dir: &Path, snapshot: &str) -> Result<(), CliError> {
    write_snapshot_named(dir, "resolved_config.toml", snapshot)
}

/// Snapshot under a custom name, for figure recipes that bundle several
/// resolved configs in one directory.
pub fn write_snapshot_named(dir: &Path, name: &str, snapshot: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, snapshot).map_err(|e| io_err(&path, e))
}
