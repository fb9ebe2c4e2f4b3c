//! Mask metrics and the model-free stand-in segmenter.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::pgm::GrayImage;
use crate::tensor::{PointPromptSet, SegMask};

/// Per-pixel instance ids; `0` is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
}

impl LabelGrid {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            bail!(
                Geometry,
                "label grid has {} labels, expected {height}x{width}",
                labels.len()
            );
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    /// Single-instance grid: foreground pixels get id 1.
    pub fn from_mask(mask: &SegMask) -> Self {
        Self {
            height: mask.height(),
            width: mask.width(),
            labels: mask.data().iter().map(|&v| v as u32).collect(),
        }
    }

    /// Reads ids straight from 8-bit gray levels.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            height: img.height,
            width: img.width,
            labels: img.pixels.iter().map(|&v| v as u32).collect(),
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width + x as usize]
    }

    /// Mask of all pixels whose id is in `ids`.
    pub fn mask_of(&self, ids: &BTreeSet<u32>) -> SegMask {
        let data = self.labels.iter().map(|l| ids.contains(l) as u8).collect();
        SegMask::new(self.height, self.width, data).expect("shape preserved")
    }

    /// Distinct non-background ids, ascending.
    pub fn instance_ids(&self) -> BTreeSet<u32> {
        self.labels.iter().copied().filter(|&l| l != 0).collect()
    }
}

/// Oracle segmenter: the union of instances under a positive point, minus
/// every instance under a negative point. Background hits contribute nothing.
pub fn simulated_segment(gt: &LabelGrid, prompts: &PointPromptSet) -> Result<SegMask> {
    let lookup = |x: u32, y: u32| -> Result<u32> {
        if x as usize >= gt.width || y as usize >= gt.height {
            bail!(
                Geometry,
                "prompt ({x}, {y}) outside label grid {}x{}",
                gt.width,
                gt.height
            );
        }
        Ok(gt.get(x, y))
    };
    let mut keep = BTreeSet::new();
    for p in &prompts.positives {
        let id = lookup(p.x, p.y)?;
        if id != 0 {
            keep.insert(id);
        }
    }
    for p in &prompts.negatives {
        keep.remove(&lookup(p.x, p.y)?);
    }
    Ok(gt.mask_of(&keep))
}

/// Intersection over union; two empty masks score 1.
pub fn iou(pred: &SegMask, gt: &SegMask) -> Result<f64> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        bail!(
            Geometry,
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        );
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        inter += (a & b) as usize;
        union += (a | b) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// IoU of one evaluated image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageScore {
    pub fold: u32,
    pub class: u32,
    pub iou: f64,
}

/// Class, fold and overall means.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MiouSummary {
    pub per_class: BTreeMap<u32, f64>,
    pub per_fold: BTreeMap<u32, f64>,
    /// Mean of the fold means; `None` when nothing was scored.
    pub mean: Option<f64>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

/// Class IoU is the mean over its images, fold mIoU the mean over its
/// classes, and the overall value the mean over folds.
pub fn summarize(scores: &[ImageScore]) -> MiouSummary {
    let mut by_class: BTreeMap<(u32, u32), Vec<f64>> = BTreeMap::new();
    for s in scores {
        by_class.entry((s.fold, s.class)).or_default().push(s.iou);
    }
    let mut per_class = BTreeMap::new();
    let mut by_fold: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (&(fold, class), ious) in &by_class {
        let m = mean(ious.iter().copied());
        per_class.insert(class, m);
        by_fold.entry(fold).or_default().push(m);
    }
    let per_fold: BTreeMap<u32, f64> = by_fold
        .iter()
        .map(|(&f, v)| (f, mean(v.iter().copied())))
        .collect();
    let overall = (!per_fold.is_empty()).then(|| mean(per_fold.values().copied()));
    MiouSummary {
        per_class,
        per_fold,
        mean: overall,
    }
}
