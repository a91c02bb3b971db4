use std::fs;
use std::path::Path;

use oasis_core::scene::SceneConfig;
use oasis_core::trainer::{TrainConfig, TrainState};
use oasis_core::ModelConfig;
use oasis_lab::checkpoint;
use oasis_lab::container::{ContainerReader, ContainerWriter};
use oasis_lab::dataset::{self, Dataset};
use oasis_lab::manifest::RunManifest;
use oasis_lab::LabError;
use serde_json::json;

fn tiny_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        model: ModelConfig {
            num_classes: 3,
            image_size: 16,
            z_channels: 2,
            base_width: 4,
            depth: 2,
            use_noise: true,
        },
        ..TrainConfig::default()
    };
    cfg.optim.batch_size = 2;
    cfg.optim.seed = seed;
    cfg.optim.ema_decay = 0.9;
    cfg
}

fn tiny_data() -> Dataset {
    Dataset::generate(SceneConfig::new(3, 16, 11).unwrap(), 8, 4).unwrap()
}

fn trained(steps: u64, ds: &Dataset) -> TrainState {
    let mut st = TrainState::new(tiny_config(3)).unwrap();
    for _ in 0..steps {
        st.run_step(&ds.train).unwrap();
    }
    st
}

fn saved_bytes(st: &TrainState, dir: &Path, name: &str) -> Vec<u8> {
    let path = dir.join(name);
    checkpoint::save(&path, st).unwrap();
    fs::read(path).unwrap()
}

#[test]
fn checkpoint_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_data();
    let st = trained(3, &ds);
    let first = saved_bytes(&st, dir.path(), "a.bin");
    let back = checkpoint::load(&dir.path().join("a.bin")).unwrap();
    assert_eq!(back.step, 3);
    assert_eq!(back.cfg, st.cfg);
    assert_eq!(back.history, st.history);
    assert_eq!(back.rngs, st.rngs);
    assert_eq!(back.adam_d, st.adam_d);
    assert_eq!(saved_bytes(&back, dir.path(), "b.bin"), first);
}

#[test]
fn resume_matches_uninterrupted_training() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_data();
    let straight = saved_bytes(&trained(10, &ds), dir.path(), "straight.bin");

    saved_bytes(&trained(5, &ds), dir.path(), "half.bin");
    let mut resumed = checkpoint::load(&dir.path().join("half.bin")).unwrap();
    for _ in 0..5 {
        resumed.run_step(&ds.train).unwrap();
    }
    assert_eq!(saved_bytes(&resumed, dir.path(), "resumed.bin"), straight);
}

#[test]
fn eval_load_never_reads_the_raw_generator() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_data();
    let st = trained(2, &ds);
    let path = dir.path().join("c.bin");
    checkpoint::save(&path, &st).unwrap();
    let e = checkpoint::load_for_eval(&path).unwrap();
    assert!(!e.raw_generator_read);
    assert_eq!(e.step, 2);
    assert_eq!(e.ema.params(), st.ema.params());
    assert_ne!(e.ema.params(), st.generator.params());
    assert_eq!(e.discriminator.params(), st.discriminator.params());

    let mut r = ContainerReader::open(&path, checkpoint::MAGIC).unwrap();
    while let Some(h) = r.next_header().unwrap() {
        r.read_payload(&h).unwrap();
    }
    assert!(r.payloads_read().iter().any(|t| t == "generator"));
}

fn format_offset(e: LabError) -> (u64, String) {
    match e {
        LabError::Format { offset, reason, .. } => (offset, reason),
        other => panic!("expected a format error, got {other}"),
    }
}

#[test]
fn corrupt_checkpoints_report_byte_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let st = trained(1, &tiny_data());
    let good = saved_bytes(&st, dir.path(), "good.bin");
    let bad = dir.path().join("bad.bin");

    let mut b = good.clone();
    b[0] = b'X';
    fs::write(&bad, &b).unwrap();
    assert_eq!(format_offset(checkpoint::load(&bad).unwrap_err()).0, 0);

    let mut b = good.clone();
    b[8..12].copy_from_slice(&99u32.to_le_bytes());
    fs::write(&bad, &b).unwrap();
    let (offset, reason) = format_offset(checkpoint::load(&bad).unwrap_err());
    assert_eq!(offset, 8);
    assert!(reason.contains("99"), "{reason}");

    fs::write(&bad, &good[..good.len() - 5]).unwrap();
    let (offset, _) = format_offset(checkpoint::load(&bad).unwrap_err());
    assert!(offset > 12 && offset <= good.len() as u64, "{offset}");

    // A dataset is a valid container with the wrong magic.
    let ds_path = dir.path().join("ds.bin");
    dataset::save(&ds_path, &tiny_data()).unwrap();
    assert_eq!(format_offset(checkpoint::load(&ds_path).unwrap_err()).0, 0);
}

#[test]
fn missing_and_duplicate_records_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.bin");
    dataset::save(&good, &tiny_data()).unwrap();
    let records = ContainerReader::open(&good, dataset::MAGIC)
        .unwrap()
        .read_all()
        .unwrap();
    let rewrite = |name: &str, tags: &[&str]| {
        let path = dir.path().join(name);
        let mut w = ContainerWriter::create(&path, dataset::MAGIC).unwrap();
        for tag in tags {
            let (_, payload) = records.iter().find(|(h, _)| h.tag == *tag).unwrap();
            w.record(tag, payload).unwrap();
        }
        w.finish().unwrap();
        path
    };
    let dup = rewrite("dup.bin", &["scene_config", "train", "train", "val"]);
    let err = dataset::load(&dup).unwrap_err().to_string();
    assert!(err.contains("train"), "{err}");
    let missing = rewrite("missing.bin", &["scene_config", "train"]);
    let err = dataset::load(&missing).unwrap_err().to_string();
    assert!(err.contains("val"), "{err}");
    let reordered = rewrite("reordered.bin", &["val", "scene_config", "train"]);
    assert_eq!(dataset::load(&reordered).unwrap(), tiny_data());
}

#[test]
fn dataset_round_trip_and_regeneration_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    dataset::save(&a, &tiny_data()).unwrap();
    dataset::save(&b, &tiny_data()).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let back = dataset::load(&a).unwrap();
    assert_eq!(back, tiny_data());
    assert!(matches!(
        dataset::load(dir.path()),
        Err(LabError::Io { .. })
    ));
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = RunManifest::new(
        "gen-data",
        vec!["gen-data".into(), "--seed".into(), "4".into()],
        4,
        json!({"k": 1.5}),
    );
    m.artifacts.push("dataset.bin".into());
    m.save(dir.path()).unwrap();
    assert_eq!(RunManifest::load(dir.path()).unwrap(), m);

    let path = dir.path().join("manifest.json");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("\"format_version\": 1", "\"format_version\": 7");
    fs::write(&path, text).unwrap();
    assert!(matches!(
        RunManifest::load(&path),
        Err(LabError::Format { .. })
    ));
}
