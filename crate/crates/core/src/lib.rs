//! Core of the ipseg image-prompt segmentation engine.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! only needs `alloc`: the fixed-layout feature tensor and PGM mask codecs,
//! feature fusion, prompt-embedding pooling, the similarity / TopK / k-means
//! point-prompt matcher, and the mask metrics used by the evaluation harness.
//! File and process IO live in the `ipseg` companion crate.
#![no_std]

extern crate alloc;

pub mod embed;
pub mod error;
pub mod fusion;
pub mod ipft;
pub mod matcher;
pub mod metrics;
pub mod pgm;
pub mod tensor;

pub use embed::{build_prompt_embedding, MaskMode, PoolMode, PromptEmbedding};
pub use error::{Error, Result};
pub use fusion::{fuse, FusionConfig, Interpolation, TargetGrid};
pub use matcher::{generate_prompts, MatchParams, Polarity, SimilarityMap};
pub use metrics::{iou, simulated_segment, LabelGrid};
pub use tensor::{FeatureMap, ImageGeometry, PointPrompt, PointPromptSet, SegMask, SourceTag};
