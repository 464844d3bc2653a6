//! Line-oriented manifest records.
//!
//! One JSON object per line with exactly the [`ManifestRecord`] fields.
//! Relative paths resolve against the data root.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image_path: String,
    pub mask_path: String,
    pub dataset_id: String,
    pub split: Split,
    pub fold: Option<usize>,
    pub replicate_index: usize,
}

impl ManifestRecord {
    pub fn validate(&self) -> Result<()> {
        if self.split == Split::Test && self.fold.is_some() {
            return Err(Error::InvalidArgument(format!(
                "{}: fold is only allowed on train records",
                self.image_path
            )));
        }
        Ok(())
    }

    /// `<dataset_id>/<image file stem>`; shared by all replicates of a sample.
    pub fn sample_key(&self) -> String {
        format!("{}/{}", self.dataset_id, self.stem())
    }

    pub fn stem(&self) -> String {
        Path::new(&self.image_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn resolve_image(&self, root: &Path) -> PathBuf {
        root.join(&self.image_path)
    }

    pub fn resolve_mask(&self, root: &Path) -> PathBuf {
        root.join(&self.mask_path)
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: i + 1,
            reason: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::Manifest {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn render_manifest(records: &[ManifestRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(render_manifest(records).as_bytes())
        .map_err(|e| Error::io(path, e))
}
