//! Synthetic planted-region datasets for exercising the pipeline without
//! any model weights.
//!
//! Every image carries one target rectangle whose cells hold its class
//! embedding, a few distractor rectangles that are only partly aligned with
//! it, and a background pointing away from it. Gaussian noise of standard
//! deviation `sigma` is added to every channel of every cell. Prompt images
//! are drawn the same way, with the target rectangle as their mask.

use std::path::{Path, PathBuf};

use ipseg_core::{FeatureMap, ImageGeometry, LabelGrid, SegMask, SourceTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::io::{save_feature_map, save_label_grid, save_mask};
use crate::manifest::{DatasetManifest, ManifestEntry};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub images: usize,
    pub classes: u32,
    pub folds: u32,
    pub grid: usize,
    pub cell_px: usize,
    pub channels: usize,
    pub distractors: usize,
    pub sigma: f32,
    pub seed: u64,
    pub prompt_set_id: String,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            images: 20,
            classes: 4,
            folds: 2,
            grid: 14,
            cell_px: 2,
            channels: 16,
            distractors: 3,
            sigma: 0.0,
            seed: 0,
            prompt_set_id: "synthetic".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    row: usize,
    col: usize,
    h: usize,
    w: usize,
}

impl Rect {
    fn contains(&self, r: usize, c: usize) -> bool {
        (self.row..self.row + self.h).contains(&r) && (self.col..self.col + self.w).contains(&c)
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.row < o.row + o.h
            && o.row < self.row + self.h
            && self.col < o.col + o.w
            && o.col < self.col + self.w
    }
}

/// One generated image: features on the grid, instance ids at pixel level.
pub struct PlantedImage {
    pub features: FeatureMap,
    pub labels: LabelGrid,
}

impl PlantedImage {
    /// Pixels of the target instance.
    pub fn target_mask(&self) -> SegMask {
        let l = &self.labels;
        SegMask::from_fn(l.height, l.width, |r, c| l.labels[r * l.width + c] == 1)
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn blend(a: f32, u: &[f32], b: f32, v: &[f32]) -> Vec<f32> {
    u.iter().zip(v).map(|(x, y)| a * x + b * y).collect()
}

fn random_rect(rng: &mut ChaCha8Rng, grid: usize, lo: usize, hi: usize) -> Rect {
    let h = rng.random_range(lo..=hi.min(grid));
    let w = rng.random_range(lo..=hi.min(grid));
    Rect {
        row: rng.random_range(0..=grid - h),
        col: rng.random_range(0..=grid - w),
        h,
        w,
    }
}

/// Draws one image whose target carries `class_embedding`.
pub fn planted_image(
    rng: &mut ChaCha8Rng,
    spec: &FixtureSpec,
    class_embedding: &[f32],
) -> PlantedImage {
    let g = spec.grid;
    let target = random_rect(rng, g, 6, 8);
    let mut rects = vec![target];
    for _ in 0..spec.distractors {
        for _attempt in 0..50 {
            let d = random_rect(rng, g, 3, 4);
            if rects.iter().all(|r| !r.overlaps(&d)) {
                rects.push(d);
                break;
            }
        }
    }
    let region_dirs: Vec<Vec<f32>> = rects
        .iter()
        .enumerate()
        .map(|(i, _)| {
            if i == 0 {
                class_embedding.to_vec()
            } else {
                blend(0.4, class_embedding, 0.9, &unit_vector(rng, spec.channels))
            }
        })
        .collect();
    let noise = Normal::new(0.0f32, spec.sigma).expect("sigma is finite and non-negative");

    let mut data = Vec::with_capacity(g * g * spec.channels);
    let mut cell_label = vec![0u32; g * g];
    for r in 0..g {
        for c in 0..g {
            let hit = rects.iter().position(|rect| rect.contains(r, c));
            let base = match hit {
                Some(i) => {
                    cell_label[r * g + c] = i as u32 + 1;
                    region_dirs[i].clone()
                }
                None => blend(-0.5, class_embedding, 0.8, &unit_vector(rng, spec.channels)),
            };
            data.extend(base.into_iter().map(|v| v + noise.sample(rng)));
        }
    }
    let px = g * spec.cell_px;
    let labels = (0..px * px)
        .map(|i| cell_label[(i / px / spec.cell_px) * g + (i % px) / spec.cell_px])
        .collect();
    let geometry = ImageGeometry::new(px as u32, px as u32);
    PlantedImage {
        features: FeatureMap::new(g, g, spec.channels, data, SourceTag::Fused, geometry)
            .expect("generated map is well formed"),
        labels: LabelGrid::new(px, px, labels).expect("generated labels are well formed"),
    }
}

fn check(spec: &FixtureSpec) -> Result<()> {
    let bad = |m: &str| Err(ipseg_core::Error::Param(m.into()).into());
    if spec.images == 0 || spec.classes == 0 || spec.folds == 0 {
        return bad("images, classes and folds must be >= 1");
    }
    if spec.folds > spec.classes || spec.classes as usize > spec.images {
        return bad("need folds <= classes <= images");
    }
    if spec.grid < 8 || spec.cell_px == 0 || spec.channels < 2 {
        return bad("grid must be >= 8, cell_px >= 1 and channels >= 2");
    }
    if !(spec.sigma >= 0.0 && spec.sigma.is_finite()) {
        return bad("sigma must be finite and non-negative");
    }
    Ok(())
}

/// Writes a fixture into `dir` and returns the path of its manifest.
///
/// Image `i` belongs to class `i % classes`; class `k` belongs to fold
/// `k % folds`.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf> {
    check(spec)?;
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let class_embeddings: Vec<Vec<f32>> = (0..spec.classes)
        .map(|_| unit_vector(&mut rng, spec.channels))
        .collect();
    let mut entries = Vec::with_capacity(spec.images);
    for i in 0..spec.images {
        let class_id = (i % spec.classes as usize) as u32;
        let e = &class_embeddings[class_id as usize];
        let input = planted_image(&mut rng, spec, e);
        let prompt = planted_image(&mut rng, spec, e);
        let name = |kind: &str, ext: &str| PathBuf::from(format!("{i:03}_{kind}.{ext}"));
        let entry = ManifestEntry {
            input_feature_path: name("input", "ipft"),
            prompt_feature_path: name("prompt", "ipft"),
            prompt_mask_path: Some(name("prompt_mask", "pgm")),
            gt_mask_path: name("gt", "pgm"),
            label_path: Some(name("labels", "pgm")),
            image_path: None,
            class_id,
            fold_id: class_id % spec.folds,
        };
        save_feature_map(dir.join(&entry.input_feature_path), &input.features)?;
        save_feature_map(dir.join(&entry.prompt_feature_path), &prompt.features)?;
        save_mask(
            dir.join(entry.prompt_mask_path.as_ref().unwrap()),
            &prompt.target_mask(),
        )?;
        save_mask(dir.join(&entry.gt_mask_path), &input.target_mask())?;
        save_label_grid(dir.join(entry.label_path.as_ref().unwrap()), &input.labels)?;
        entries.push(entry);
    }
    let manifest = DatasetManifest {
        prompt_set_id: spec.prompt_set_id.clone(),
        folds: Some((0..spec.folds).collect()),
        classes: Some((0..spec.classes).collect()),
        entries,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("plain data serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
