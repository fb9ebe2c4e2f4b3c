//! Run configuration file. Every field is optional; command-line flags take
//! precedence over the file, and the file over built-in defaults.

use std::path::Path;

use ipseg_core::{FusionConfig, Interpolation, MaskMode, TargetGrid};
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub k: Option<usize>,
    pub c: Option<usize>,
    pub kmeans_max_iters: Option<usize>,
    pub snap_to_member: Option<bool>,
    pub mask_mode: Option<String>,
    pub min_coverage: Option<f64>,
    pub segmenter: Option<String>,
    pub adapter: Option<String>,
    pub threads: Option<usize>,
    pub grid: Option<String>,
    pub normalize: Option<bool>,
    pub interpolation: Option<String>,
    pub k_list: Option<Vec<usize>>,
    pub c_list: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| e.in_file(path))
    }
}

pub fn parse_mask_mode(s: &str) -> Result<MaskMode> {
    MaskMode::parse(s).ok_or_else(|| {
        Error::Usage(format!(
            "unknown mask mode `{s}` (expected saliency, gt or none)"
        ))
    })
}

/// `dino`, `sd` or `HxW`.
pub fn parse_grid(s: &str) -> Result<TargetGrid> {
    match s {
        "dino" => Ok(TargetGrid::DinoGrid),
        "sd" => Ok(TargetGrid::SdGrid),
        _ => {
            let dims = s
                .split_once(['x', 'X'])
                .and_then(|(h, w)| Some((h.parse::<usize>().ok()?, w.parse::<usize>().ok()?)));
            match dims {
                Some((height, width)) if height > 0 && width > 0 => {
                    Ok(TargetGrid::Explicit { height, width })
                }
                _ => Err(Error::Usage(format!(
                    "invalid grid `{s}` (expected dino, sd or HxW)"
                ))),
            }
        }
    }
}

pub fn parse_interpolation(s: &str) -> Result<Interpolation> {
    match s {
        "bilinear" => Ok(Interpolation::Bilinear),
        "nearest" => Ok(Interpolation::Nearest),
        _ => Err(Error::Usage(format!(
            "unknown interpolation `{s}` (expected bilinear or nearest)"
        ))),
    }
}

/// Short text form of a fusion configuration, used in report headers.
pub fn describe_fusion(cfg: &FusionConfig) -> String {
    let grid = match cfg.target_grid {
        TargetGrid::DinoGrid => "dino".to_owned(),
        TargetGrid::SdGrid => "sd".to_owned(),
        TargetGrid::Explicit { height, width } => format!("{height}x{width}"),
    };
    let interp = match cfg.interpolation {
        Interpolation::Bilinear => "bilinear",
        Interpolation::Nearest => "nearest",
    };
    format!(
        "grid={grid},normalize={},interpolation={interp}",
        cfg.per_source_l2_normalize
    )
}

/// Thread budget from `IPSEG_THREADS`, else the config, else 0 (automatic).
pub fn thread_budget(cfg: &RunConfig) -> Result<usize> {
    match std::env::var("IPSEG_THREADS") {
        Ok(v) if !v.trim().is_empty() => v.trim().parse().map_err(|_| {
            Error::Usage(format!(
                "IPSEG_THREADS must be a non-negative integer, got `{v}`"
            ))
        }),
        _ => Ok(cfg.threads.unwrap_or(0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("dino").unwrap(), TargetGrid::DinoGrid);
        assert_eq!(
            parse_grid("7x7").unwrap(),
            TargetGrid::Explicit {
                height: 7,
                width: 7
            }
        );
        for bad in ["0x7", "7", "axb", ""] {
            assert_eq!(parse_grid(bad).unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert_eq!(RunConfig::from_json(r#"{"k":8}"#).unwrap().k, Some(8));
        assert!(RunConfig::from_json(r#"{"kk":8}"#).is_err());
    }

    #[test]
    fn default_fusion_description() {
        assert_eq!(
            describe_fusion(&FusionConfig::default()),
            "grid=dino,normalize=true,interpolation=bilinear"
        );
    }
}
