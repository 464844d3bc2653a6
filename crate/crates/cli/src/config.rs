use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ctaug_core::datasetprep::{BalanceMode, LabelMap};
use ctaug_core::scheduler::PRESET_PROBABILITIES;
use ctaug_core::stats::DEFAULT_ALPHA;
use serde::{Deserialize, Serialize};

use crate::exit::Invalid;

/// Healthy/lesion pools and mixing parameters for `compose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeConfig {
    /// Directory holding `images/*.png` and matching `lungs/*.png`.
    pub healthy_dir: Option<PathBuf>,
    pub fraction: f64,
    pub size_tolerance: f64,
    pub blend_weight: f64,
    pub smooth_kernel: usize,
    pub flip_lesion: bool,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        Self {
            healthy_dir: None,
            fraction: 0.2,
            size_tolerance: ctaug_core::compositor::DEFAULT_SIZE_TOLERANCE,
            blend_weight: ctaug_core::compositor::DEFAULT_BLEND_WEIGHT,
            smooth_kernel: ctaug_core::compositor::DEFAULT_SMOOTH_KERNEL,
            flip_lesion: false,
        }
    }
}

/// Everything a run needs; loaded from JSON or TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_root: Option<PathBuf>,
    pub output_root: Option<PathBuf>,
    pub master_seed: u64,
    pub jobs: Option<usize>,
    /// Dataset ids, each laid out as `<data_root>/<id>/{images,masks}`.
    pub datasets: Vec<String>,
    /// Label map per dataset; defaults to `<data_root>/<id>/label_map.json`.
    pub label_maps: BTreeMap<String, PathBuf>,
    pub plan: Option<PathBuf>,
    pub probabilities: Vec<f64>,
    pub k_folds: usize,
    /// `None` skips the unified training manifest.
    pub balance: Option<BalanceMode>,
    pub batch_size: usize,
    pub alpha: f64,
    pub compose: ComposeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_root: None,
            output_root: None,
            master_seed: 0,
            jobs: None,
            datasets: Vec::new(),
            label_maps: BTreeMap::new(),
            plan: None,
            probabilities: PRESET_PROBABILITIES.to_vec(),
            k_folds: 5,
            balance: Some(BalanceMode::Train),
            batch_size: 8,
            alpha: DEFAULT_ALPHA,
            compose: ComposeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Invalid(format!("config {}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Invalid(format!("config {}: {e}", path.display())))?
        };
        Ok(parsed)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if let Some(p) = self.probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            bail!(Invalid(format!("probability {p} outside [0, 1]")));
        }
        if self.k_folds < 2 {
            bail!(Invalid(format!("k_folds must be >= 2, got {}", self.k_folds)));
        }
        if self.batch_size == 0 {
            bail!(Invalid("batch_size must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!(Invalid(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.jobs == Some(0) {
            bail!(Invalid("jobs must be positive".into()));
        }
        let paths = self
            .data_root
            .iter()
            .chain(self.label_maps.values())
            .chain(&self.plan)
            .chain(&self.compose.healthy_dir);
        for p in paths {
            if !p.exists() {
                bail!(Invalid(format!("configured path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn data_root(&self) -> anyhow::Result<&Path> {
        self.data_root
            .as_deref()
            .ok_or_else(|| Invalid("no data root: pass --data-root or set data_root".into()).into())
    }

    pub fn output_root(&self) -> anyhow::Result<&Path> {
        self.output_root
            .as_deref()
            .ok_or_else(|| Invalid("no output root: pass --out or set output_root".into()).into())
    }

    fn label_map_path(&self, dataset_id: &str) -> anyhow::Result<PathBuf> {
        match self.label_maps.get(dataset_id) {
            Some(p) => Ok(p.clone()),
            None => Ok(self.data_root()?.join(dataset_id).join("label_map.json")),
        }
    }

    /// Composite records use the built-in binary map.
    pub fn label_map(&self, dataset_id: &str) -> anyhow::Result<LabelMap> {
        if dataset_id == ctaug_core::compositor::COMPOSITE_DATASET {
            return Ok(LabelMap::binary(dataset_id));
        }
        let path = self.label_map_path(dataset_id)?;
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Invalid(format!("label map for {dataset_id} at {}: {e}", path.display())))?;
        let map = LabelMap::from_json(&text).with_context(|| format!("label map {}", path.display()))?;
        if map.dataset_id != dataset_id {
            bail!(Invalid(format!(
                "label map {} declares dataset {}, expected {dataset_id}",
                path.display(),
                map.dataset_id
            )));
        }
        Ok(map)
    }

    pub fn label_maps_for<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a String>,
    ) -> anyhow::Result<BTreeMap<String, LabelMap>> {
        ids.into_iter().map(|id| Ok((id.clone(), self.label_map(id)?))).collect()
    }
}
