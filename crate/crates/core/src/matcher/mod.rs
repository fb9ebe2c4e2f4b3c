//! Feature interaction: turns a prompt embedding and an input feature map
//! into positive and negative point prompts.
//!
//! The pipeline is cosine similarity per grid cell, TopK selection of the `K`
//! most and least similar cells, k-means over their grid positions down to `c`
//! centers per polarity, and a final mapping of grid cells to pixel centers.

mod cluster;
mod similarity;
mod topk;

use alloc::vec::Vec;

pub use cluster::{cluster_points, partition_sse, Center, Clustering};
pub use similarity::{cosine_similarity_map, SimilarityMap};
pub use topk::topk_coords;

use crate::embed::PromptEmbedding;
use crate::error::{bail, Result};
use crate::tensor::{FeatureMap, ImageGeometry, PointPrompt, PointPromptSet};

/// Which end of the similarity ranking to select from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Positive prompts.
    MostSimilar,
    /// Negative prompts.
    LeastSimilar,
}

/// A scored grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Cells selected per polarity.
    pub k: usize,
    /// Cluster centers emitted per polarity.
    pub c: usize,
    pub kmeans_max_iters: usize,
    /// Replace each center with its nearest member cell.
    pub snap_to_member: bool,
    pub epsilon: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            k: 32,
            c: 4,
            kmeans_max_iters: 50,
            snap_to_member: true,
            epsilon: crate::fusion::DEFAULT_EPSILON,
        }
    }
}

impl MatchParams {
    pub fn with_kc(k: usize, c: usize) -> Self {
        Self {
            k,
            c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.c == 0 {
            bail!(Param, "K and c must be >= 1, got K={} c={}", self.k, self.c);
        }
        if self.c > self.k {
            bail!(Param, "c={} must not exceed K={}", self.c, self.k);
        }
        if self.kmeans_max_iters == 0 {
            bail!(Param, "kmeans_max_iters must be >= 1");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            bail!(Param, "epsilon must be > 0");
        }
        Ok(())
    }
}

/// Maps a (possibly fractional) grid position to the pixel under its cell
/// center: `x = ⌊(col + ½) · image_width / grid_w⌋`, likewise for `y`.
pub fn grid_to_pixel(
    row: f64,
    col: f64,
    geometry: ImageGeometry,
    grid_h: usize,
    grid_w: usize,
) -> (u32, u32) {
    let axis = |v: f64, pixels: u32, cells: usize| -> u32 {
        let p = libm::floor((v + 0.5) * pixels as f64 / cells as f64);
        (p.max(0.0) as u32).min(pixels - 1)
    };
    (
        axis(col, geometry.width, grid_w),
        axis(row, geometry.height, grid_h),
    )
}

/// Intermediate products of [`generate_prompts`], for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTrace {
    pub similarity: SimilarityMap,
    pub positive_topk: Vec<GridPoint>,
    pub negative_topk: Vec<GridPoint>,
    pub positive_clusters: Clustering,
    pub negative_clusters: Clustering,
    pub prompts: PointPromptSet,
}

/// Runs the full matcher and keeps every intermediate result.
pub fn generate_prompts_traced(
    input_fm: &FeatureMap,
    embedding: &PromptEmbedding,
    params: &MatchParams,
) -> Result<PromptTrace> {
    params.validate()?;
    let similarity = cosine_similarity_map(embedding, input_fm, params.epsilon)?;
    let positive_topk = topk_coords(&similarity, params.k, Polarity::MostSimilar)?;
    let negative_topk = topk_coords(&similarity, params.k, Polarity::LeastSimilar)?;
    let positive_clusters =
        cluster_points(&positive_topk, params.c, Polarity::MostSimilar, params)?;
    let negative_clusters =
        cluster_points(&negative_topk, params.c, Polarity::LeastSimilar, params)?;

    let geometry = input_fm.geometry();
    let to_pixels = |cl: &Clustering| -> Vec<PointPrompt> {
        cl.centers
            .iter()
            .map(|ctr| {
                let (x, y) = grid_to_pixel(
                    ctr.row,
                    ctr.col,
                    geometry,
                    input_fm.height(),
                    input_fm.width(),
                );
                PointPrompt {
                    x,
                    y,
                    score: ctr.score,
                }
            })
            .collect()
    };
    let prompts = PointPromptSet {
        k: params.k,
        c: params.c,
        positives: to_pixels(&positive_clusters),
        negatives: to_pixels(&negative_clusters),
    };
    prompts.validate()?;
    prompts.check_bounds(geometry)?;
    Ok(PromptTrace {
        similarity,
        positive_topk,
        negative_topk,
        positive_clusters,
        negative_clusters,
        prompts,
    })
}

/// Positive and negative point prompts for `input_fm` given the prompt embedding.
pub fn generate_prompts(
    input_fm: &FeatureMap,
    embedding: &PromptEmbedding,
    params: &MatchParams,
) -> Result<PointPromptSet> {
    generate_prompts_traced(input_fm, embedding, params).map(|t| t.prompts)
}
