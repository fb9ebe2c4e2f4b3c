use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ipseg::io::{load_feature_map, save_feature_map, save_mask};
use ipseg::prompts::load_prompts;
use ipseg_core::{FeatureMap, ImageGeometry, SegMask, SourceTag};

fn ipseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipseg"))
        .args(args)
        .env_remove("IPSEG_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn map(h: usize, w: usize, c: usize, tag: SourceTag, geom: (u32, u32), seed: u32) -> FeatureMap {
    let data = (0..h * w * c)
        .map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) % 1000)
        .map(|v| v as f32 / 500.0 - 1.0)
        .collect();
    FeatureMap::new(h, w, c, data, tag, ImageGeometry::new(geom.0, geom.1)).unwrap()
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn fuse_command() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_feature_map(p(d, "sd.ipft"), &map(8, 8, 5, SourceTag::Sd, (56, 56), 1)).unwrap();
    save_feature_map(
        p(d, "dino.ipft"),
        &map(4, 4, 3, SourceTag::Dino, (56, 56), 2),
    )
    .unwrap();
    save_feature_map(
        p(d, "dino_bad.ipft"),
        &map(4, 4, 3, SourceTag::Dino, (56, 60), 2),
    )
    .unwrap();

    let out = ipseg(&[
        "fuse",
        "--sd",
        s(&p(d, "sd.ipft")),
        "--dino",
        s(&p(d, "dino.ipft")),
        "--out",
        s(&p(d, "f.ipft")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fused = load_feature_map(p(d, "f.ipft")).unwrap();
    assert_eq!((fused.height(), fused.width(), fused.channels()), (4, 4, 8));
    assert_eq!(fused.source(), SourceTag::Fused);

    let out = ipseg(&[
        "fuse",
        "--sd",
        s(&p(d, "sd.ipft")),
        "--dino",
        s(&p(d, "dino_bad.ipft")),
        "--out",
        s(&p(d, "g.ipft")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("GeometryError"), "{}", stderr(&out));

    let out = ipseg(&[
        "fuse",
        "--sd",
        s(&p(d, "sd.ipft")),
        "--dino",
        s(&p(d, "dino.ipft")),
        "--grid",
        "7x7",
        "--out",
        s(&p(d, "h.ipft")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fused = load_feature_map(p(d, "h.ipft")).unwrap();
    assert_eq!((fused.height(), fused.width()), (7, 7));
}

#[test]
fn embed_command() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_feature_map(p(d, "fm.ipft"), &map(4, 4, 6, SourceTag::Fused, (8, 8), 3)).unwrap();
    save_mask(p(d, "m.pgm"), &SegMask::from_fn(8, 8, |r, _| r < 4)).unwrap();

    let out = ipseg(&[
        "embed",
        "--features",
        s(&p(d, "fm.ipft")),
        "--mode",
        "none",
        "--out",
        s(&p(d, "e.ipft")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let e = load_feature_map(p(d, "e.ipft")).unwrap();
    assert_eq!((e.height(), e.width(), e.channels()), (1, 1, 6));

    let out = ipseg(&[
        "embed",
        "--features",
        s(&p(d, "fm.ipft")),
        "--mode",
        "gt",
        "--out",
        s(&p(d, "e2.ipft")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("usage"), "{}", stderr(&out));

    let out = ipseg(&[
        "embed",
        "--features",
        s(&p(d, "fm.ipft")),
        "--mode",
        "gt",
        "--mask",
        s(&p(d, "m.pgm")),
        "--out",
        s(&p(d, "e3.ipft")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(load_feature_map(p(d, "e3.ipft")).unwrap().channels(), 6);
}

#[test]
fn prompt_command() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_feature_map(
        p(d, "in.ipft"),
        &map(14, 14, 6, SourceTag::Fused, (224, 224), 4),
    )
    .unwrap();
    save_feature_map(
        p(d, "emb.ipft"),
        &map(1, 1, 6, SourceTag::Fused, (224, 224), 5),
    )
    .unwrap();
    let (input, emb) = (p(d, "in.ipft"), p(d, "emb.ipft"));
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["prompt", "--input", s(&input), "--embedding", s(&emb)];
        args.extend_from_slice(extra);
        let target = p(d, out);
        args.extend_from_slice(&["--out", s(&target)]);
        ipseg(&args)
    };
    let out = run("a.json", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let set = load_prompts(p(d, "a.json")).unwrap();
    assert_eq!(
        (set.k, set.c, set.positives.len(), set.negatives.len()),
        (32, 4, 4, 4)
    );

    assert_eq!(code(&run("b.json", &[])), 0);
    assert_eq!(
        std::fs::read(p(d, "a.json")).unwrap(),
        std::fs::read(p(d, "b.json")).unwrap()
    );

    let out = run("c.json", &["--c", "8", "--k", "4"]);
    assert_eq!(code(&out), 2);
    assert!(!p(d, "c.json").exists());
}

#[test]
fn eval_and_sweep_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fx = p(d, "fx");
    let out = ipseg(&["synth", "--out", s(&fx), "--seed", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest = fx.join("manifest.json");

    let report = |name: &str| p(d, name);
    let out = ipseg(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--segmenter",
        "simulated",
        "--report",
        s(&report("r1")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(report("r1").join("report.json")).unwrap()).unwrap();
    assert_eq!(summary["mean_miou"], 1.0);
    assert_eq!(summary["config_echo"]["K"], 32);
    assert_eq!(summary["config_echo"]["c"], 4);

    let out = ipseg(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--report",
        s(&report("r2")),
    ]);
    assert_eq!(code(&out), 0);
    for f in ["report.csv", "report.json"] {
        assert_eq!(
            std::fs::read(report("r1").join(f)).unwrap(),
            std::fs::read(report("r2").join(f)).unwrap(),
            "{f}"
        );
    }

    let out = ipseg(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--segmenter",
        "external",
        "--report",
        s(&report("r3")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("not_configured"), "{}", stderr(&out));

    let out = ipseg(&[
        "sweep",
        "--manifest",
        s(&manifest),
        "--k-list",
        "32",
        "--c-list",
        "2,4,8,16,32",
        "--report",
        s(&report("sw")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(report("sw").join("sweep.csv")).unwrap();
    let groups: std::collections::BTreeSet<(String, String)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[3].to_owned(), f[4].to_owned())
        })
        .collect();
    assert_eq!(groups.len(), 5);
}

#[test]
fn exit_codes_for_config_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ipseg(&[
        "prompt",
        "--input",
        "/nonexistent.ipft",
        "--embedding",
        "/nonexistent.ipft",
        "--out",
        s(&p(d, "x.json")),
    ]);
    assert_eq!(code(&out), 1);
    std::fs::write(p(d, "cfg.json"), r#"{"k": 4, "c": 8}"#).unwrap();
    save_feature_map(p(d, "in.ipft"), &map(6, 6, 3, SourceTag::Fused, (6, 6), 1)).unwrap();
    save_feature_map(p(d, "emb.ipft"), &map(1, 1, 3, SourceTag::Fused, (6, 6), 2)).unwrap();
    let args = |extra: &[&'static str]| {
        let mut v: Vec<String> = [
            "prompt",
            "--input",
            s(&p(d, "in.ipft")),
            "--embedding",
            s(&p(d, "emb.ipft")),
            "--out",
            s(&p(d, "y.json")),
            "--config",
            s(&p(d, "cfg.json")),
        ]
        .iter()
        .map(|x| x.to_string())
        .collect();
        v.extend(extra.iter().map(|x| x.to_string()));
        v
    };
    let run = |v: Vec<String>| ipseg(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&run(args(&[]))), 2);
    assert_eq!(code(&run(args(&["--c", "2"]))), 0);
    std::fs::write(p(d, "cfg.json"), r#"{"unknown": 1}"#).unwrap();
    assert_eq!(code(&run(args(&[]))), 2);
    assert_eq!(code(&ipseg(&["no-such-command"])), 2);
}
