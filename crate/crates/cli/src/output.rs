use std::path::{Path, PathBuf};

use anyhow::Context;
use ctaug_core::VERSION;

use crate::exit::Invalid;

pub fn trailer(seed: u64) -> String {
    format!("# ctaug {VERSION} seed={seed}\n")
}

/// Header row, the rows in the given order, then the metadata comment.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>], seed: u64) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let mut bytes = w.into_inner().context("flushing csv")?;
    bytes.extend_from_slice(trailer(seed).as_bytes());
    write_file(path, &bytes)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Rows keyed by header name; `#` lines are skipped.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> anyhow::Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Invalid(format!("missing column {name}")).into())
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }
}

pub fn parse_f64(field: &str, what: &str) -> anyhow::Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Invalid(format!("{what}: not a number: {field:?}")).into())
}

/// Stable, human-readable tag for a probability, e.g. `p0.05`.
pub fn prob_tag(p: f64) -> String {
    format!("p{p}")
}

/// Absolute form of a path that may not exist yet.
pub fn absolute(path: &Path) -> anyhow::Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))
}
