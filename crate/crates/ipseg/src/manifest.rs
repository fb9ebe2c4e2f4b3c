//! Dataset manifests: which feature files, masks and labels make up a benchmark.
//!
//! Relative paths are resolved against the manifest's own directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub input_feature_path: PathBuf,
    pub prompt_feature_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_mask_path: Option<PathBuf>,
    pub gt_mask_path: PathBuf,
    /// Instance-id grid for the simulated segmenter; the ground-truth mask
    /// is used as a single instance when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_path: Option<PathBuf>,
    /// Raw input image, forwarded to external segmenters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    pub class_id: u32,
    pub fold_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub prompt_set_id: String,
    /// Declared folds; every entry's fold must be one of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<Vec<u32>>,
    /// Declared classes; every one must have at least one entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<u32>>,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn param(msg: String) -> Error {
    ipseg_core::Error::Param(msg).into()
}

impl DatasetManifest {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: DatasetManifest = serde_json::from_str(text)
            .map_err(|e| Error::schema("$", format!("invalid manifest: {e}")))?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base).map_err(|e| e.in_file(path))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks fold/class structure and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(param("manifest has no entries".into()));
        }
        let mut class_fold: BTreeMap<u32, u32> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(folds) = &self.folds {
                if !folds.contains(&e.fold_id) {
                    return Err(param(format!(
                        "entries[{i}]: fold {} is not declared",
                        e.fold_id
                    )));
                }
            }
            if let Some(classes) = &self.classes {
                if !classes.contains(&e.class_id) {
                    return Err(param(format!(
                        "entries[{i}]: class {} is not declared",
                        e.class_id
                    )));
                }
            }
            if let Some(prev) = class_fold.insert(e.class_id, e.fold_id) {
                if prev != e.fold_id {
                    return Err(param(format!(
                        "class {} appears in folds {prev} and {}",
                        e.class_id, e.fold_id
                    )));
                }
            }
            let paths = [
                Some(&e.input_feature_path),
                Some(&e.prompt_feature_path),
                e.prompt_mask_path.as_ref(),
                Some(&e.gt_mask_path),
                e.label_path.as_ref(),
                e.image_path.as_ref(),
            ];
            for p in paths.into_iter().flatten() {
                let full = self.resolve(p);
                if !full.exists() {
                    return Err(param(format!(
                        "entries[{i}]: {} does not exist",
                        full.display()
                    )));
                }
            }
        }
        if let Some(classes) = &self.classes {
            let seen: BTreeSet<u32> = class_fold.keys().copied().collect();
            if let Some(empty) = classes.iter().find(|c| !seen.contains(c)) {
                return Err(param(format!("class {empty} has no entries")));
            }
        }
        Ok(())
    }
}
