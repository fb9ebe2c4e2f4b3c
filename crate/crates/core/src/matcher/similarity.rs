use alloc::vec::Vec;

use crate::embed::PromptEmbedding;
use crate::error::{bail, Result};
use crate::tensor::FeatureMap;

/// Cosine score of every grid cell against the prompt embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub height: usize,
    pub width: usize,
    /// Row-major scores in `[-1, 1]`.
    pub scores: Vec<f64>,
}

impl SimilarityMap {
    pub fn new(height: usize, width: usize, scores: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || scores.len() != height * width {
            bail!(
                Geometry,
                "similarity map {height}x{width} with {} scores",
                scores.len()
            );
        }
        Ok(Self {
            height,
            width,
            scores,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.width + col]
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    libm::sqrt(v.map(|x| x * x).sum())
}

/// `score = ⟨e, v⟩ / (max(‖e‖, ε) · max(‖v‖, ε))` per cell, accumulated in f64.
pub fn cosine_similarity_map(
    embedding: &PromptEmbedding,
    fm: &FeatureMap,
    epsilon: f64,
) -> Result<SimilarityMap> {
    if embedding.channels() != fm.channels() {
        bail!(
            Geometry,
            "embedding has {} channels, feature map has {}",
            embedding.channels(),
            fm.channels()
        );
    }
    let e = &embedding.values;
    let e_norm = norm(e.iter().map(|&x| x as f64)).max(epsilon);
    let scores = fm
        .cell_vectors()
        .map(|v| {
            let dot: f64 = e.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum();
            let v_norm = norm(v.iter().map(|&x| x as f64)).max(epsilon);
            dot / (e_norm * v_norm)
        })
        .collect();
    SimilarityMap::new(fm.height(), fm.width(), scores)
}
