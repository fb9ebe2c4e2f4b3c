//! mIoU evaluation over a dataset manifest, and the (K, c) sweep runner.
//!
//! Entries are processed in parallel but always reported in manifest order.
//! A failing entry is recorded with its error and left out of the means.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ipseg_core::embed::PoolOptions;
use ipseg_core::metrics::{summarize, ImageScore};
use ipseg_core::{
    build_prompt_embedding, generate_prompts, iou, FeatureMap, FusionConfig, LabelGrid, MaskMode,
    MatchParams, PromptEmbedding, SegMask,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::describe_fusion;
use crate::error::{Error, Result};
use crate::io::{load_feature_map, load_label_grid, load_mask};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::segmenter::{segment, Segmenter};

pub const CSV_HEADER: [&str; 7] = ["prompt_set", "fold", "class", "K", "c", "mask_mode", "iou"];

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub params: MatchParams,
    pub mask_mode: MaskMode,
    pub pool: PoolOptions,
    /// Free-form description of how the feature files were fused.
    pub fusion: String,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            params: MatchParams::default(),
            mask_mode: MaskMode::Gt,
            pool: PoolOptions::default(),
            fusion: describe_fusion(&FusionConfig::default()),
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    #[serde(rename = "K")]
    pub k: usize,
    pub c: usize,
    pub mask_mode: String,
    pub fusion: String,
    pub prompt_set_id: String,
    pub segmenter: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryOutcome {
    pub index: usize,
    pub class_id: u32,
    pub fold_id: u32,
    pub iou: Option<f64>,
    /// Set when the prompt mask selected no cell and the global mean was used.
    pub pooling_fell_back: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config_echo: ConfigEcho,
    pub per_class_iou: BTreeMap<u32, f64>,
    pub per_fold_miou: BTreeMap<u32, f64>,
    pub mean_miou: Option<f64>,
    pub failed_entries: usize,
    pub entries: Vec<EntryOutcome>,
}

impl EvalReport {
    /// One row per class; classes whose entries all failed get `failed`.
    pub fn csv_rows(&self) -> Vec<[String; 7]> {
        let mut fold_of: BTreeMap<u32, u32> = BTreeMap::new();
        for e in &self.entries {
            fold_of.insert(e.class_id, e.fold_id);
        }
        let echo = &self.config_echo;
        let mut classes: Vec<(u32, u32)> = fold_of.iter().map(|(&c, &f)| (f, c)).collect();
        classes.sort_unstable();
        classes
            .into_iter()
            .map(|(fold, class)| {
                let iou = self
                    .per_class_iou
                    .get(&class)
                    .map_or_else(|| "failed".to_owned(), |v| v.to_string());
                [
                    echo.prompt_set_id.clone(),
                    fold.to_string(),
                    class.to_string(),
                    echo.k.to_string(),
                    echo.c.to_string(),
                    echo.mask_mode.clone(),
                    iou,
                ]
            })
            .collect()
    }
}

/// Everything about an entry that does not depend on K and c.
struct Prepared {
    input: FeatureMap,
    embedding: PromptEmbedding,
    gt: SegMask,
    labels: LabelGrid,
}

fn prepare(m: &DatasetManifest, e: &ManifestEntry, opts: &EvalOptions) -> Result<Prepared> {
    let input = load_feature_map(m.resolve(&e.input_feature_path))?;
    let prompt = load_feature_map(m.resolve(&e.prompt_feature_path))?;
    let mask = match (opts.mask_mode, &e.prompt_mask_path) {
        (MaskMode::None, _) | (_, None) => None,
        (_, Some(p)) => Some(load_mask(m.resolve(p))?),
    };
    let embedding = build_prompt_embedding(&prompt, mask.as_ref(), opts.mask_mode, opts.pool)?;
    let gt_path = m.resolve(&e.gt_mask_path);
    let gt = load_mask(&gt_path)?;
    if !gt.matches_geometry(input.geometry()) {
        let g = input.geometry();
        return Err(ipseg_core::Error::Geometry(format!(
            "ground truth {}x{} does not match image {}x{}",
            gt.height(),
            gt.width(),
            g.height,
            g.width
        ))
        .into());
    }
    let labels = match &e.label_path {
        Some(p) => {
            let path = m.resolve(p);
            let labels = load_label_grid(&path)?;
            if (labels.height, labels.width) != (gt.height(), gt.width()) {
                return Err(Error::from(ipseg_core::Error::Geometry(format!(
                    "label grid {}x{} does not match ground truth {}x{}",
                    labels.height,
                    labels.width,
                    gt.height(),
                    gt.width()
                )))
                .in_file(path));
            }
            labels
        }
        None => LabelGrid::from_mask(&gt),
    };
    Ok(Prepared {
        input,
        embedding,
        gt,
        labels,
    })
}

fn score(
    m: &DatasetManifest,
    e: &ManifestEntry,
    p: &Prepared,
    params: &MatchParams,
    segmenter: &Segmenter,
) -> Result<f64> {
    let prompts = generate_prompts(&p.input, &p.embedding, params)?;
    let image = e.image_path.as_ref().map(|i| m.resolve(i));
    let pred = segment(
        segmenter,
        &prompts,
        &p.labels,
        p.input.geometry(),
        image.as_deref(),
    )?;
    Ok(iou(&pred, &p.gt)?)
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {threads} worker threads: {e}")))
}

fn prepare_all(
    m: &DatasetManifest,
    opts: &EvalOptions,
    workers: &rayon::ThreadPool,
) -> Vec<std::result::Result<Prepared, String>> {
    workers.install(|| {
        m.entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let p = prepare(m, e, opts).map_err(|err| err.to_string())?;
                if p.embedding.fell_back {
                    log::warn!("entry {i}: prompt mask selects no cell; pooled the whole map");
                }
                Ok(p)
            })
            .collect()
    })
}

fn report(
    m: &DatasetManifest,
    prepared: &[std::result::Result<Prepared, String>],
    params: &MatchParams,
    opts: &EvalOptions,
    segmenter: &Segmenter,
    workers: &rayon::ThreadPool,
) -> EvalReport {
    let entries: Vec<EntryOutcome> = workers.install(|| {
        m.entries
            .par_iter()
            .zip(prepared.par_iter())
            .enumerate()
            .map(|(index, (e, p))| {
                let result = p
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|p| score(m, e, p, params, segmenter).map_err(|err| err.to_string()));
                EntryOutcome {
                    index,
                    class_id: e.class_id,
                    fold_id: e.fold_id,
                    pooling_fell_back: p.as_ref().is_ok_and(|p| p.embedding.fell_back),
                    iou: result.as_ref().ok().copied(),
                    error: result.err(),
                }
            })
            .collect()
    });
    for e in entries.iter().filter(|e| e.error.is_some()) {
        log::warn!(
            "entry {} (class {}) failed: {}",
            e.index,
            e.class_id,
            e.error.as_deref().unwrap_or_default()
        );
    }
    let scores: Vec<ImageScore> = entries
        .iter()
        .filter_map(|e| {
            e.iou.map(|iou| ImageScore {
                fold: e.fold_id,
                class: e.class_id,
                iou,
            })
        })
        .collect();
    let summary = summarize(&scores);
    EvalReport {
        config_echo: ConfigEcho {
            k: params.k,
            c: params.c,
            mask_mode: opts.mask_mode.name().into(),
            fusion: opts.fusion.clone(),
            prompt_set_id: m.prompt_set_id.clone(),
            segmenter: segmenter.name().into(),
        },
        per_class_iou: summary.per_class,
        per_fold_miou: summary.per_fold,
        mean_miou: summary.mean,
        failed_entries: entries.iter().filter(|e| e.error.is_some()).count(),
        entries,
    }
}

/// Evaluates every entry of `manifest` at one operating point.
pub fn evaluate(
    manifest: &DatasetManifest,
    opts: &EvalOptions,
    segmenter: &Segmenter,
) -> Result<EvalReport> {
    opts.params.validate()?;
    let workers = pool(opts.threads)?;
    let prepared = prepare_all(manifest, opts, &workers);
    Ok(report(
        manifest,
        &prepared,
        &opts.params,
        opts,
        segmenter,
        &workers,
    ))
}

/// One configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    #[serde(rename = "K")]
    pub k: usize,
    pub c: usize,
    /// Why the pair was not evaluated.
    pub skipped: Option<String>,
    pub report: Option<EvalReport>,
}

/// The cartesian product of `k_list` and `c_list` with duplicates removed,
/// in first-seen order.
pub fn sweep_pairs(k_list: &[usize], c_list: &[usize]) -> Vec<(usize, usize)> {
    let mut seen = BTreeSet::new();
    k_list
        .iter()
        .flat_map(|&k| c_list.iter().map(move |&c| (k, c)))
        .filter(|pair| seen.insert(*pair))
        .collect()
}

/// Evaluates every (K, c) pair; pairs with c > K are flagged, not run.
pub fn sweep(
    manifest: &DatasetManifest,
    k_list: &[usize],
    c_list: &[usize],
    opts: &EvalOptions,
    segmenter: &Segmenter,
) -> Result<Vec<SweepResult>> {
    if k_list.is_empty() || c_list.is_empty() {
        return Err(ipseg_core::Error::Param("sweep needs at least one K and one c".into()).into());
    }
    let workers = pool(opts.threads)?;
    let prepared = prepare_all(manifest, opts, &workers);
    sweep_pairs(k_list, c_list)
        .into_iter()
        .map(|(k, c)| {
            let params = MatchParams {
                k,
                c,
                ..opts.params
            };
            if let Err(e) = params.validate() {
                log::warn!("skipping K={k} c={c}: {e}");
                return Ok(SweepResult {
                    k,
                    c,
                    skipped: Some(e.to_string()),
                    report: None,
                });
            }
            Ok(SweepResult {
                k,
                c,
                skipped: None,
                report: Some(report(
                    manifest, &prepared, &params, opts, segmenter, &workers,
                )),
            })
        })
        .collect()
}

fn csv_bytes(rows: impl IntoIterator<Item = [String; 7]>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn report_csv(report: &EvalReport) -> Vec<u8> {
    csv_bytes(report.csv_rows())
}

/// Row groups in sweep order; a skipped pair is one row with empty fold and
/// class and `skipped` in place of the IoU.
pub fn sweep_csv(results: &[SweepResult], prompt_set_id: &str, mask_mode: MaskMode) -> Vec<u8> {
    csv_bytes(results.iter().flat_map(|r| match &r.report {
        Some(rep) => rep.csv_rows(),
        None => vec![[
            prompt_set_id.to_owned(),
            String::new(),
            String::new(),
            r.k.to_string(),
            r.c.to_string(),
            mask_mode.name().to_owned(),
            "skipped".to_owned(),
        ]],
    }))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_vec_pretty(value).expect("plain data serializes");
    text.push(b'\n');
    text
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes `report.csv` and `report.json` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    ensure_dir(dir)?;
    write(&dir.join("report.csv"), &report_csv(report))?;
    write(&dir.join("report.json"), &to_json(report))
}

/// Writes `sweep.csv` and `sweep.json` into `dir`.
pub fn write_sweep(
    dir: &Path,
    results: &[SweepResult],
    prompt_set_id: &str,
    mask_mode: MaskMode,
) -> Result<()> {
    ensure_dir(dir)?;
    write(
        &dir.join("sweep.csv"),
        &sweep_csv(results, prompt_set_id, mask_mode),
    )?;
    write(&dir.join("sweep.json"), &to_json(&results))
}
