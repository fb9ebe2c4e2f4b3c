//! Command-line surface: one subcommand per pipeline stage plus the
//! evaluation drivers.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ipseg_core::embed::PoolOptions;
use ipseg_core::{
    build_prompt_embedding, fuse, generate_prompts, FusionConfig, MaskMode, MatchParams,
    PromptEmbedding,
};

use crate::config::{
    describe_fusion, parse_grid, parse_interpolation, parse_mask_mode, thread_budget, RunConfig,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, sweep, write_report, write_sweep, EvalOptions};
use crate::fixture::{write_fixture, FixtureSpec};
use crate::io::{load_feature_map, load_mask, save_feature_map};
use crate::manifest::DatasetManifest;
use crate::prompts::save_prompts;
use crate::segmenter::{ExternalSegmenter, Segmenter};

#[derive(Debug, Parser)]
#[command(name = "ipseg", version, about = "Image-prompt segmentation engine")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Concatenate SD and DINO feature maps on a common grid.
    Fuse {
        #[arg(long)]
        sd: PathBuf,
        #[arg(long)]
        dino: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// dino, sd or HxW.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        no_normalize: bool,
        /// bilinear or nearest.
        #[arg(long)]
        interpolation: Option<String>,
    },
    /// Pool a prompt image's features into a 1x1 embedding.
    Embed {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// saliency, gt or none.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_coverage: Option<f64>,
    },
    /// Select positive and negative point prompts on an input image.
    Prompt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        embedding: PathBuf,
        #[command(flatten)]
        kc: KcArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a manifest at one (K, c) operating point.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        kc: KcArgs,
    },
    /// Evaluate a manifest over the product of K and c lists.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        k_list: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        c_list: Option<Vec<usize>>,
    },
    /// Write a synthetic planted-region dataset and its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        images: usize,
        #[arg(long, default_value_t = 4)]
        classes: u32,
        #[arg(long, default_value_t = 2)]
        folds: u32,
        #[arg(long, default_value_t = 0.0)]
        sigma: f32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synthetic")]
        prompt_set: String,
    },
}

#[derive(Debug, Args)]
pub struct KcArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub c: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// simulated or external.
    #[arg(long)]
    pub segmenter: Option<String>,
    /// Adapter command line for the external segmenter.
    #[arg(long)]
    pub adapter: Option<String>,
    /// saliency, gt or none.
    #[arg(long)]
    pub mask_mode: Option<String>,
    #[arg(long)]
    pub report: PathBuf,
}

fn match_params(kc: &KcArgs, cfg: &RunConfig) -> Result<MatchParams> {
    let d = MatchParams::default();
    let params = MatchParams {
        k: kc.k.or(cfg.k).unwrap_or(d.k),
        c: kc.c.or(cfg.c).unwrap_or(d.c),
        kmeans_max_iters: cfg.kmeans_max_iters.unwrap_or(d.kmeans_max_iters),
        snap_to_member: cfg.snap_to_member.unwrap_or(d.snap_to_member),
        ..d
    };
    params.validate()?;
    Ok(params)
}

fn fusion_config(
    grid: Option<&str>,
    no_normalize: bool,
    interpolation: Option<&str>,
    cfg: &RunConfig,
) -> Result<FusionConfig> {
    let mut out = FusionConfig::default();
    if let Some(g) = grid.or(cfg.grid.as_deref()) {
        out.target_grid = parse_grid(g)?;
    }
    if let Some(i) = interpolation.or(cfg.interpolation.as_deref()) {
        out.interpolation = parse_interpolation(i)?;
    }
    out.per_source_l2_normalize = !no_normalize && cfg.normalize.unwrap_or(true);
    Ok(out)
}

fn pool_options(min_coverage: Option<f64>, cfg: &RunConfig) -> PoolOptions {
    let mut opts = PoolOptions::default();
    if let Some(m) = min_coverage.or(cfg.min_coverage) {
        opts.min_coverage = m;
    }
    opts
}

fn segmenter(run: &RunArgs, cfg: &RunConfig) -> Result<Segmenter> {
    let kind = run
        .segmenter
        .as_deref()
        .or(cfg.segmenter.as_deref())
        .unwrap_or("simulated");
    match kind {
        "simulated" => Ok(Segmenter::Simulated),
        "external" => {
            let command = run.adapter.as_deref().or(cfg.adapter.as_deref());
            Ok(Segmenter::External(ExternalSegmenter::from_command(
                command,
            )?))
        }
        other => Err(Error::Usage(format!(
            "unknown segmenter `{other}` (expected simulated or external)"
        ))),
    }
}

fn eval_options(run: &RunArgs, params: MatchParams, cfg: &RunConfig) -> Result<EvalOptions> {
    let mode = run
        .mask_mode
        .as_deref()
        .or(cfg.mask_mode.as_deref())
        .map_or(Ok(MaskMode::Gt), parse_mask_mode)?;
    Ok(EvalOptions {
        params,
        mask_mode: mode,
        pool: pool_options(None, cfg),
        fusion: describe_fusion(&fusion_config(None, false, None, cfg)?),
        threads: thread_budget(cfg)?,
    })
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Fuse {
            sd,
            dino,
            out,
            grid,
            no_normalize,
            interpolation,
        } => {
            let fcfg = fusion_config(
                grid.as_deref(),
                no_normalize,
                interpolation.as_deref(),
                &cfg,
            )?;
            let fused = fuse(&load_feature_map(&sd)?, &load_feature_map(&dino)?, &fcfg)?;
            save_feature_map(&out, &fused)
        }
        Command::Embed {
            features,
            mask,
            mode,
            out,
            min_coverage,
        } => {
            let mode = mode
                .as_deref()
                .or(cfg.mask_mode.as_deref())
                .map_or(Ok(MaskMode::Saliency), parse_mask_mode)?;
            if mode != MaskMode::None && mask.is_none() {
                return Err(Error::Usage(format!(
                    "--mode {} requires --mask",
                    mode.name()
                )));
            }
            let fm = load_feature_map(&features)?;
            let mask = match (mode, mask) {
                (MaskMode::None, _) | (_, None) => None,
                (_, Some(p)) => Some(load_mask(&p)?),
            };
            let emb =
                build_prompt_embedding(&fm, mask.as_ref(), mode, pool_options(min_coverage, &cfg))?;
            if emb.fell_back {
                log::warn!("mask selects no feature cell; pooled the whole map instead");
            }
            save_feature_map(&out, &emb.to_feature_map(fm.geometry())?)
        }
        Command::Prompt {
            input,
            embedding,
            kc,
            out,
        } => {
            let params = match_params(&kc, &cfg)?;
            let fm = load_feature_map(&input)?;
            let emb = PromptEmbedding::from_feature_map(&load_feature_map(&embedding)?)?;
            save_prompts(&out, &generate_prompts(&fm, &emb, &params)?)
        }
        Command::Eval { run, kc } => {
            let params = match_params(&kc, &cfg)?;
            let seg = segmenter(&run, &cfg)?;
            let opts = eval_options(&run, params, &cfg)?;
            let manifest = DatasetManifest::load(&run.manifest)?;
            let report = evaluate(&manifest, &opts, &seg)?;
            write_report(&run.report, &report)?;
            match report.mean_miou {
                Some(m) => println!(
                    "mean mIoU {m:.6} ({} failed entries)",
                    report.failed_entries
                ),
                None => println!(
                    "no entry could be scored ({} failed)",
                    report.failed_entries
                ),
            }
            Ok(())
        }
        Command::Sweep {
            run,
            k_list,
            c_list,
        } => {
            let k_list = k_list.or(cfg.k_list.clone()).unwrap_or_else(|| vec![32]);
            let c_list = c_list
                .or(cfg.c_list.clone())
                .unwrap_or_else(|| vec![2, 4, 8, 16, 32]);
            let seg = segmenter(&run, &cfg)?;
            let opts = eval_options(&run, MatchParams::default(), &cfg)?;
            let manifest = DatasetManifest::load(&run.manifest)?;
            let results = sweep(&manifest, &k_list, &c_list, &opts, &seg)?;
            write_sweep(
                &run.report,
                &results,
                &manifest.prompt_set_id,
                opts.mask_mode,
            )?;
            for r in &results {
                match (&r.report, &r.skipped) {
                    (Some(rep), _) => println!(
                        "K={} c={}: mean mIoU {}",
                        r.k,
                        r.c,
                        rep.mean_miou.map_or("n/a".into(), |m| format!("{m:.6}"))
                    ),
                    (None, reason) => println!(
                        "K={} c={}: skipped ({})",
                        r.k,
                        r.c,
                        reason.as_deref().unwrap_or_default()
                    ),
                }
            }
            Ok(())
        }
        Command::Synth {
            out,
            images,
            classes,
            folds,
            sigma,
            seed,
            prompt_set,
        } => {
            let spec = FixtureSpec {
                images,
                classes,
                folds,
                sigma,
                seed,
                prompt_set_id: prompt_set,
                ..FixtureSpec::default()
            };
            let manifest = write_fixture(&out, &spec)?;
            println!("{}", manifest.display());
            Ok(())
        }
    }
}
