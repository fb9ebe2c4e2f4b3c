//! Prompt-image embedding: foreground-masked average pooling of a feature map.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::tensor::{FeatureMap, ImageGeometry, SegMask, SourceTag};

/// Where the prompt image's foreground mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MaskMode {
    /// Mask from an unsupervised salient-object detector.
    Saliency,
    /// Ground-truth mask of the prompt image.
    Gt,
    /// No background filtering; pool over the whole grid.
    None,
}

impl MaskMode {
    pub fn name(self) -> &'static str {
        match self {
            MaskMode::Saliency => "saliency",
            MaskMode::Gt => "gt",
            MaskMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "saliency" => Some(MaskMode::Saliency),
            "gt" => Some(MaskMode::Gt),
            "none" | "no_mask" => Some(MaskMode::None),
            _ => None,
        }
    }
}

/// Denominator of the masked average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolMode {
    /// Mean over the selected cells only.
    #[default]
    Selected,
    /// Sum over selected cells divided by the total cell count, i.e. averaging
    /// the zeroed background as well. Differs from `Selected` by a positive
    /// scale factor.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolOptions {
    /// Cells whose foreground coverage is at least this value are pooled.
    pub min_coverage: f64,
    pub mode: PoolMode,
}

impl Default for PoolOptions {
    fn default() -> Self {
        Self {
            min_coverage: 0.5,
            mode: PoolMode::Selected,
        }
    }
}

/// Per-cell foreground fraction of a pixel mask, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl CoverageGrid {
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![1.0; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Pooled prompt feature plus how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding {
    pub values: Vec<f32>,
    pub source: SourceTag,
    pub mask_mode: MaskMode,
    /// The mask selected no cell and the global mean was used instead.
    pub fell_back: bool,
}

impl PromptEmbedding {
    pub fn channels(&self) -> usize {
        self.values.len()
    }

    pub fn scaled(&self, alpha: f32) -> Self {
        Self {
            values: self.values.iter().map(|v| v * alpha).collect(),
            ..self.clone()
        }
    }

    /// Stores the embedding as a `1 × 1 × C` map of the given image.
    pub fn to_feature_map(&self, geometry: ImageGeometry) -> Result<FeatureMap> {
        FeatureMap::new(
            1,
            1,
            self.channels(),
            self.values.clone(),
            self.source,
            geometry,
        )
    }

    /// Loads an embedding previously stored with [`Self::to_feature_map`].
    pub fn from_feature_map(fm: &FeatureMap) -> Result<Self> {
        if fm.height() != 1 || fm.width() != 1 {
            bail!(
                Geometry,
                "embedding file must be a 1x1 grid, got {}x{}",
                fm.height(),
                fm.width()
            );
        }
        Ok(Self {
            values: fm.data().to_vec(),
            source: fm.source(),
            mask_mode: MaskMode::None,
            fell_back: false,
        })
    }
}

/// Averages mask pixels into a `grid_h × grid_w` grid.
///
/// Pixel `(y, x)` belongs to cell `(⌊(y + ½)·grid_h / height⌋, ⌊(x + ½)·grid_w / width⌋)`;
/// each cell holds the mean of its pixels (0 when it receives none).
pub fn downsample_mask_to_grid(
    mask: &SegMask,
    grid_h: usize,
    grid_w: usize,
) -> Result<CoverageGrid> {
    if grid_h == 0 || grid_w == 0 {
        bail!(Param, "coverage grid must be >= 1x1, got {grid_h}x{grid_w}");
    }
    let (mh, mw) = (mask.height(), mask.width());
    let cell_of = |p: usize, n: usize, g: usize| ((2 * p + 1) * g) / (2 * n);
    let mut ones = vec![0usize; grid_h * grid_w];
    let mut counts = vec![0usize; grid_h * grid_w];
    for y in 0..mh {
        let gr = cell_of(y, mh, grid_h);
        for x in 0..mw {
            let idx = gr * grid_w + cell_of(x, mw, grid_w);
            counts[idx] += 1;
            ones[idx] += mask.get(y, x) as usize;
        }
    }
    let values = ones
        .iter()
        .zip(&counts)
        .map(|(&o, &n)| if n == 0 { 0.0 } else { o as f64 / n as f64 })
        .collect();
    Ok(CoverageGrid {
        height: grid_h,
        width: grid_w,
        values,
    })
}

/// Result of [`masked_average_pool`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub values: Vec<f32>,
    pub fell_back: bool,
}

/// Mean of the channel vectors of cells with coverage ≥ `min_coverage`.
///
/// Sums run in row-major cell order in f64. When no cell qualifies the
/// unweighted global mean is returned and `fell_back` is set.
pub fn masked_average_pool(
    fm: &FeatureMap,
    coverage: &CoverageGrid,
    opts: PoolOptions,
) -> Result<Pooled> {
    if coverage.height != fm.height() || coverage.width != fm.width() {
        bail!(
            Geometry,
            "coverage grid {}x{} does not match feature grid {}x{}",
            coverage.height,
            coverage.width,
            fm.height(),
            fm.width()
        );
    }
    if !(0.0..1.0).contains(&opts.min_coverage) {
        bail!(Param, "min_coverage {} outside [0, 1)", opts.min_coverage);
    }
    let ch = fm.channels();
    let mut sum = vec![0.0f64; ch];
    let mut selected = 0usize;
    for (v, &cov) in fm.cell_vectors().zip(&coverage.values) {
        if cov >= opts.min_coverage {
            selected += 1;
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += x as f64;
            }
        }
    }
    let fell_back = selected == 0;
    if fell_back {
        for v in fm.cell_vectors() {
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += x as f64;
            }
        }
        selected = fm.cells();
    }
    let denom = match opts.mode {
        PoolMode::Selected => selected,
        PoolMode::Literal => fm.cells(),
    } as f64;
    Ok(Pooled {
        values: sum.iter().map(|&s| (s / denom) as f32).collect(),
        fell_back,
    })
}

/// Builds the prompt embedding of a prompt image's feature map.
///
/// `mask` is the prompt image's foreground mask at image resolution; it is
/// required unless `mode` is [`MaskMode::None`], where it is ignored.
pub fn build_prompt_embedding(
    prompt_fm: &FeatureMap,
    mask: Option<&SegMask>,
    mode: MaskMode,
    opts: PoolOptions,
) -> Result<PromptEmbedding> {
    let coverage = match (mode, mask) {
        (MaskMode::None, _) => CoverageGrid::full(prompt_fm.height(), prompt_fm.width()),
        (_, None) => bail!(Param, "mask mode {} requires a mask", mode.name()),
        (_, Some(mask)) => {
            if !mask.matches_geometry(prompt_fm.geometry()) {
                let g = prompt_fm.geometry();
                bail!(
                    Geometry,
                    "mask {}x{} does not match image {}x{}",
                    mask.height(),
                    mask.width(),
                    g.height,
                    g.width
                );
            }
            downsample_mask_to_grid(mask, prompt_fm.height(), prompt_fm.width())?
        }
    };
    let pooled = masked_average_pool(prompt_fm, &coverage, opts)?;
    Ok(PromptEmbedding {
        values: pooled.values,
        source: prompt_fm.source(),
        mask_mode: mode,
        fell_back: pooled.fell_back,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> ImageGeometry {
        ImageGeometry::new(4, 4)
    }

    #[test]
    fn full_mask_downsamples_to_ones() {
        let cov = downsample_mask_to_grid(&SegMask::ones(4, 4), 3, 2).unwrap();
        assert!(cov.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn exact_tiling() {
        let mask = SegMask::from_fn(4, 4, |r, c| r < 2 && c < 2);
        let cov = downsample_mask_to_grid(&mask, 2, 2).unwrap();
        assert_eq!(cov.values, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn one_hot_is_bitwise() {
        let data: Vec<f32> = (0..32).map(|v| (v as f32 * 0.731).sin()).collect();
        let fm = FeatureMap::new(4, 4, 2, data, SourceTag::Dino, geom()).unwrap();
        let mut cov = CoverageGrid::full(4, 4);
        cov.values.iter_mut().for_each(|v| *v = 0.0);
        cov.values[6] = 1.0;
        let p = masked_average_pool(&fm, &cov, PoolOptions::default()).unwrap();
        assert_eq!(p.values, fm.pixel(1, 2));
        assert!(!p.fell_back);
    }

    #[test]
    fn empty_selection_falls_back_to_global_mean() {
        let fm = FeatureMap::new(1, 2, 1, vec![1.0, 3.0], SourceTag::Dino, geom()).unwrap();
        let cov = CoverageGrid {
            height: 1,
            width: 2,
            values: vec![0.0, 0.2],
        };
        let p = masked_average_pool(&fm, &cov, PoolOptions::default()).unwrap();
        assert_eq!(p.values, vec![2.0]);
        assert!(p.fell_back);
    }

    #[test]
    fn literal_pool_is_positive_rescale() {
        let fm =
            FeatureMap::new(1, 4, 1, vec![2.0, 4.0, 9.0, 9.0], SourceTag::Dino, geom()).unwrap();
        let cov = CoverageGrid {
            height: 1,
            width: 4,
            values: vec![1.0, 1.0, 0.0, 0.0],
        };
        let sel = masked_average_pool(&fm, &cov, PoolOptions::default()).unwrap();
        let lit = masked_average_pool(
            &fm,
            &cov,
            PoolOptions {
                mode: PoolMode::Literal,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sel.values, vec![3.0]);
        assert_eq!(lit.values, vec![1.5]);
    }

    #[test]
    fn mode_none_matches_full_mask_bitwise() {
        let data: Vec<f32> = (0..48).map(|v| (v as f32 * 1.37).cos()).collect();
        let fm = FeatureMap::new(4, 4, 3, data, SourceTag::Fused, geom()).unwrap();
        let none =
            build_prompt_embedding(&fm, None, MaskMode::None, PoolOptions::default()).unwrap();
        let full = build_prompt_embedding(
            &fm,
            Some(&SegMask::ones(4, 4)),
            MaskMode::Saliency,
            PoolOptions::default(),
        )
        .unwrap();
        assert_eq!(none.values, full.values);
        assert_eq!(none.mask_mode, MaskMode::None);
        assert_eq!(full.mask_mode, MaskMode::Saliency);
    }

    #[test]
    fn mask_required_and_geometry_checked() {
        let fm = FeatureMap::filled(2, 2, 1, 1.0, SourceTag::Dino, geom()).unwrap();
        assert!(matches!(
            build_prompt_embedding(&fm, None, MaskMode::Gt, PoolOptions::default()),
            Err(crate::Error::Param(_))
        ));
        assert!(matches!(
            build_prompt_embedding(
                &fm,
                Some(&SegMask::ones(3, 4)),
                MaskMode::Gt,
                PoolOptions::default()
            ),
            Err(crate::Error::Geometry(_))
        ));
        let bad = CoverageGrid::full(2, 3);
        assert!(matches!(
            masked_average_pool(&fm, &bad, PoolOptions::default()),
            Err(crate::Error::Geometry(_))
        ));
    }
}
