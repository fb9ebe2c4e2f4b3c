//! Promptable segmenters: the built-in oracle and the external adapter process.
//!
//! External contract: the adapter command is run with two extra arguments,
//! the prompt JSON path and the path to write a `P5` mask to. Exit status 0
//! plus a valid mask of the input image's size means success. The input
//! image's path and size are passed through `IPSEG_IMAGE`,
//! `IPSEG_IMAGE_HEIGHT` and `IPSEG_IMAGE_WIDTH`.

use std::path::Path;
use std::process::Command;

use ipseg_core::{pgm, simulated_segment, ImageGeometry, LabelGrid, PointPromptSet, SegMask};

use crate::error::{AdapterError, Result};
use crate::prompts::write_prompts;

/// A configured adapter command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalSegmenter {
    program: String,
    args: Vec<String>,
}

impl ExternalSegmenter {
    /// Splits a command on whitespace; `None` or blank means not configured.
    pub fn from_command(command: Option<&str>) -> std::result::Result<Self, AdapterError> {
        let mut parts = command
            .unwrap_or_default()
            .split_whitespace()
            .map(str::to_owned);
        let program = parts.next().ok_or(AdapterError::NotConfigured)?;
        Ok(Self {
            program,
            args: parts.collect(),
        })
    }

    pub fn command_line(&self) -> String {
        std::iter::once(self.program.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segmenter {
    Simulated,
    External(ExternalSegmenter),
}

impl Segmenter {
    pub fn name(&self) -> &'static str {
        match self {
            Segmenter::Simulated => "simulated",
            Segmenter::External(_) => "external",
        }
    }
}

/// Hands the prompts to the adapter and validates the returned mask.
pub fn external_segment(
    prompts: &PointPromptSet,
    geometry: ImageGeometry,
    image_path: Option<&Path>,
    adapter: Option<&ExternalSegmenter>,
) -> Result<SegMask> {
    let adapter = adapter.ok_or(AdapterError::NotConfigured)?;
    let scratch = tempfile::tempdir().map_err(|source| AdapterError::Spawn {
        command: adapter.command_line(),
        source,
    })?;
    let prompt_path = scratch.path().join("prompts.json");
    let mask_path = scratch.path().join("mask.pgm");
    std::fs::write(&prompt_path, write_prompts(prompts)?).map_err(|source| {
        AdapterError::Spawn {
            command: adapter.command_line(),
            source,
        }
    })?;

    let mut cmd = Command::new(&adapter.program);
    cmd.args(&adapter.args)
        .arg(&prompt_path)
        .arg(&mask_path)
        .env("IPSEG_IMAGE_HEIGHT", geometry.height.to_string())
        .env("IPSEG_IMAGE_WIDTH", geometry.width.to_string());
    if let Some(image) = image_path {
        cmd.env("IPSEG_IMAGE", image);
    }
    let output = cmd.output().map_err(|source| AdapterError::Spawn {
        command: adapter.command_line(),
        source,
    })?;
    if !output.status.success() {
        return Err(AdapterError::ExitFailure {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_owned(),
        }
        .into());
    }
    let bytes = std::fs::read(&mask_path)
        .map_err(|e| AdapterError::MalformedMask(format!("no mask written: {e}")))?;
    let mask = pgm::decode_mask(&bytes).map_err(|e| AdapterError::MalformedMask(e.to_string()))?;
    if !mask.matches_geometry(geometry) {
        return Err(AdapterError::Geometry {
            want_h: geometry.height as usize,
            want_w: geometry.width as usize,
            got_h: mask.height(),
            got_w: mask.width(),
        }
        .into());
    }
    Ok(mask)
}

/// Runs whichever segmenter is configured for one image.
pub fn segment(
    segmenter: &Segmenter,
    prompts: &PointPromptSet,
    labels: &LabelGrid,
    geometry: ImageGeometry,
    image_path: Option<&Path>,
) -> Result<SegMask> {
    match segmenter {
        Segmenter::Simulated => Ok(simulated_segment(labels, prompts)?),
        Segmenter::External(adapter) => {
            external_segment(prompts, geometry, image_path, Some(adapter))
        }
    }
}
