//! Point-prompt JSON documents (schema version 1).
//!
//! ```json
//! {"version":1,"k":32,"c":4,
//!  "positives":[{"x":5,"y":5,"score":0.93}, ...],
//!  "negatives":[{"x":130,"y":12,"score":-0.41}, ...]}
//! ```

use std::path::Path;

use ipseg_core::{PointPrompt, PointPromptSet};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize)]
struct PointDoc {
    x: u32,
    y: u32,
    score: f64,
}

#[derive(Serialize)]
struct PromptDoc {
    version: u64,
    k: usize,
    c: usize,
    positives: Vec<PointDoc>,
    negatives: Vec<PointDoc>,
}

/// Serializes a prompt set as pretty-printed JSON with a trailing newline.
pub fn write_prompts(p: &PointPromptSet) -> Result<String> {
    p.validate()?;
    let points = |v: &[PointPrompt]| -> Result<Vec<PointDoc>> {
        v.iter()
            .map(|q| {
                if !q.score.is_finite() {
                    return Err(Error::schema(
                        "score",
                        format!("non-finite score {}", q.score),
                    ));
                }
                Ok(PointDoc {
                    x: q.x,
                    y: q.y,
                    score: q.score,
                })
            })
            .collect()
    };
    let doc = PromptDoc {
        version: SCHEMA_VERSION,
        k: p.k,
        c: p.c,
        positives: points(&p.positives)?,
        negatives: points(&p.negatives)?,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("plain data serializes");
    text.push('\n');
    Ok(text)
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::schema(format!("{path}.{key}"), "missing key"))
}

fn positive_int(obj: &Map<String, Value>, key: &str, path: &str) -> Result<usize> {
    match field(obj, key, path)?.as_u64() {
        Some(v) if v >= 1 => Ok(v as usize),
        _ => Err(Error::schema(
            format!("{path}.{key}"),
            "expected a positive integer",
        )),
    }
}

fn coordinate(obj: &Map<String, Value>, key: &str, path: &str) -> Result<u32> {
    let v = field(obj, key, path)?;
    v.as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| {
            Error::schema(
                format!("{path}.{key}"),
                format!("expected a non-negative integer coordinate, got {v}"),
            )
        })
}

fn points(root: &Map<String, Value>, key: &str, c: usize) -> Result<Vec<PointPrompt>> {
    let path = format!("$.{key}");
    let arr = field(root, key, "$")?
        .as_array()
        .ok_or_else(|| Error::schema(&path, "expected an array"))?;
    if arr.len() != c {
        return Err(Error::schema(
            &path,
            format!("{key} length {} ≠ c={c}", arr.len()),
        ));
    }
    arr.iter()
        .enumerate()
        .map(|(i, item)| {
            let here = format!("{path}[{i}]");
            let obj = item
                .as_object()
                .ok_or_else(|| Error::schema(&here, "expected an object"))?;
            let score = field(obj, "score", &here)?
                .as_f64()
                .ok_or_else(|| Error::schema(format!("{here}.score"), "expected a number"))?;
            Ok(PointPrompt {
                x: coordinate(obj, "x", &here)?,
                y: coordinate(obj, "y", &here)?,
                score,
            })
        })
        .collect()
}

/// Parses and validates a prompt document.
pub fn read_prompts(text: &str) -> Result<PointPromptSet> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::schema("$", format!("invalid JSON: {e}")))?;
    let root = value
        .as_object()
        .ok_or_else(|| Error::schema("$", "expected an object"))?;
    match field(root, "version", "$")?.as_u64() {
        Some(SCHEMA_VERSION) => {}
        _ => {
            return Err(Error::schema(
                "$.version",
                format!("expected {SCHEMA_VERSION}"),
            ))
        }
    }
    let k = positive_int(root, "k", "$")?;
    let c = positive_int(root, "c", "$")?;
    if c > k {
        return Err(Error::schema("$.c", format!("c={c} exceeds k={k}")));
    }
    let set = PointPromptSet {
        k,
        c,
        positives: points(root, "positives", c)?,
        negatives: points(root, "negatives", c)?,
    };
    Ok(set)
}

pub fn save_prompts(path: impl AsRef<Path>, p: &PointPromptSet) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_prompts(p)?).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_prompts(path: impl AsRef<Path>) -> Result<PointPromptSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_prompts(&text).map_err(|e| e.in_file(path))
}
