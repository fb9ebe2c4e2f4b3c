use std::path::Path;

use ipseg::io::save_mask;
use ipseg::segmenter::{external_segment, ExternalSegmenter};
use ipseg::{AdapterError, Error};
use ipseg_core::{ImageGeometry, PointPrompt, PointPromptSet, SegMask};

fn prompts() -> PointPromptSet {
    let p = |x, y| PointPrompt { x, y, score: 0.5 };
    PointPromptSet {
        k: 2,
        c: 1,
        positives: vec![p(1, 1)],
        negatives: vec![p(4, 3)],
    }
}

/// Adapter that copies `$1` to the output path and records its inputs.
fn copy_adapter(dir: &Path) -> String {
    let script = dir.join("adapter.sh");
    std::fs::write(
        &script,
        "set -e\n\
         cp \"$1\" \"$3\"\n\
         cp \"$2\" \"$(dirname \"$1\")/seen_prompts.json\"\n\
         echo \"$IPSEG_IMAGE_HEIGHT $IPSEG_IMAGE_WIDTH\" > \"$(dirname \"$1\")/seen_env\"\n",
    )
    .unwrap();
    format!("sh {}", script.display())
}

#[test]
fn echo_adapter_round_trips_mask() {
    let dir = tempfile::tempdir().unwrap();
    let want = SegMask::from_fn(4, 6, |r, c| (r + c) % 3 == 0);
    let fixture = dir.path().join("fixture.pgm");
    save_mask(&fixture, &want).unwrap();
    let cmd = format!("{} {}", copy_adapter(dir.path()), fixture.display());
    let adapter = ExternalSegmenter::from_command(Some(&cmd)).unwrap();
    let got = external_segment(&prompts(), ImageGeometry::new(4, 6), None, Some(&adapter)).unwrap();
    assert_eq!(got, want);
    let seen = std::fs::read_to_string(dir.path().join("seen_prompts.json")).unwrap();
    assert_eq!(ipseg::prompts::read_prompts(&seen).unwrap(), prompts());
    let env = std::fs::read_to_string(dir.path().join("seen_env")).unwrap();
    assert_eq!(env.trim(), "4 6");
}

#[test]
fn wrong_size_mask_is_a_geometry_error() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture.pgm");
    save_mask(&fixture, &SegMask::ones(5, 6)).unwrap();
    let cmd = format!("{} {}", copy_adapter(dir.path()), fixture.display());
    let adapter = ExternalSegmenter::from_command(Some(&cmd)).unwrap();
    let err =
        external_segment(&prompts(), ImageGeometry::new(4, 6), None, Some(&adapter)).unwrap_err();
    assert!(
        matches!(err, Error::Adapter(AdapterError::Geometry { got_h: 5, .. })),
        "{err}"
    );
}

#[test]
fn absent_adapter_is_not_configured() {
    let err = external_segment(&prompts(), ImageGeometry::new(4, 6), None, None).unwrap_err();
    assert!(matches!(err, Error::Adapter(AdapterError::NotConfigured)));
    assert_eq!(err.exit_code(), 2);
    assert!(matches!(
        ExternalSegmenter::from_command(Some("   ")),
        Err(AdapterError::NotConfigured)
    ));
}

#[test]
fn failing_adapter_reports_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("fail.sh");
    std::fs::write(&script, "echo boom >&2\nexit 3\n").unwrap();
    let adapter =
        ExternalSegmenter::from_command(Some(&format!("sh {}", script.display()))).unwrap();
    let err =
        external_segment(&prompts(), ImageGeometry::new(4, 6), None, Some(&adapter)).unwrap_err();
    match err {
        Error::Adapter(AdapterError::ExitFailure { stderr, .. }) => assert_eq!(stderr, "boom"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn garbage_output_is_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("junk.sh");
    std::fs::write(&script, "printf 'P6 1 1 255\\n\\0\\0\\0' > \"$2\"\n").unwrap();
    let adapter =
        ExternalSegmenter::from_command(Some(&format!("sh {}", script.display()))).unwrap();
    let err =
        external_segment(&prompts(), ImageGeometry::new(1, 1), None, Some(&adapter)).unwrap_err();
    assert!(
        matches!(err, Error::Adapter(AdapterError::MalformedMask(_))),
        "{err}"
    );
}
