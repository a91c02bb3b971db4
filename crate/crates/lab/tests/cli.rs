use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oasis_lab::image_io::{load_pgm, load_ppm, save_pgm, save_ppm};
use oasis_lab::manifest::RunManifest;
use oasis_lab::run::read_report;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oasis-lab"))
        .args(args)
        .env("OASIS_LAB_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = lab(args);
    assert!(
        out.status.success(),
        "oasis-lab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: [&str; 8] = [
    "--base-width",
    "4",
    "--depth",
    "2",
    "--z-channels",
    "2",
    "--batch-size",
    "2",
];

/// Tiny dataset plus a 3-step run; returns (data dir, run dir).
fn tiny_run(root: &Path, extra: &[&str]) -> (PathBuf, PathBuf) {
    let data = root.join("data");
    if !data.join("dataset.bin").exists() {
        ok(&[
            "gen-data",
            "--out",
            p(&data),
            "--classes",
            "3",
            "--size",
            "16",
            "--num-train",
            "8",
            "--num-val",
            "6",
            "--seed",
            "5",
        ]);
    }
    let run = root.join("run");
    let mut args = vec![
        "train",
        "--data",
        p(&data),
        "--out",
        p(&run),
        "--steps",
        "3",
        "--checkpoint-every",
        "2",
    ];
    args.extend_from_slice(&TINY);
    args.extend_from_slice(extra);
    ok(&args);
    (data, run)
}

fn curves(run: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(run.join("curves.csv")).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn gen_data_is_reproducible_and_guards_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = |out: &Path| {
        vec![
            "gen-data".to_string(),
            "--out".into(),
            p(out).into(),
            "--classes".into(),
            "4".into(),
            "--size".into(),
            "16".into(),
            "--num-train".into(),
            "5".into(),
            "--num-val".into(),
            "3".into(),
            "--seed".into(),
            "9".into(),
        ]
    };
    let run = |v: Vec<String>| lab(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(run(args(&a)).status.success());
    assert!(run(args(&b)).status.success());
    assert_eq!(
        fs::read(a.join("dataset.bin")).unwrap(),
        fs::read(b.join("dataset.bin")).unwrap()
    );
    assert!(a.join("val/label_0.pgm").exists() && a.join("val/img_2.ppm").exists());
    assert!(!a.join("val/img_3.ppm").exists());

    let again = run(args(&a));
    assert_eq!(code(&again), 2);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let mut forced = args(&a);
    forced.push("--force".into());
    assert!(run(forced).status.success());

    let m = RunManifest::load(&a).unwrap();
    assert_eq!((m.command.as_str(), m.seed), ("gen-data", 9));
    assert_eq!(m.config["scenes"]["num_classes"], 4);
}

#[test]
fn invalid_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    assert_eq!(code(&lab(&["gen-data", "--out", out, "--classes", "1"])), 2);
    assert_eq!(
        code(&lab(&[
            "gen-data",
            "--out",
            out,
            "--class-weights",
            "1,0,1,1,1"
        ])),
        2
    );
    assert_eq!(code(&lab(&["train", "--out", out])), 2);
    assert_eq!(code(&lab(&["no-such-command"])), 2);
    assert_eq!(code(&lab(&["train", "--data", out, "--out", out])), 3);
    assert!(lab(&["--help"]).status.success());
}

#[test]
fn train_writes_curves_checkpoints_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (_, run) = tiny_run(dir.path(), &["--sample-every", "2", "--num-samples", "2"]);
    let rows = curves(&run);
    assert_eq!(rows.len(), 3);
    assert_eq!(
        rows.iter().map(|r| r[0]).collect::<Vec<_>>(),
        [1.0, 2.0, 3.0]
    );
    assert!(rows.iter().flatten().all(|v| v.is_finite()));
    assert!(run.join("ckpt_2.bin").exists() && run.join("ckpt_3.bin").exists());
    assert!(!run.join("ckpt_1.bin").exists());
    assert!(run.join("samples_2/img_1.ppm").exists() && run.join("samples_3/img_0.ppm").exists());
    let m = RunManifest::load(&run).unwrap();
    assert_eq!(m.config["train"]["optim"]["ema_decay"], 0.99);
    assert!(m.artifacts.contains(&"ckpt_3.bin".to_string()));
}

#[test]
fn single_step_run_writes_one_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = tiny_run(dir.path(), &[]);
    let run = dir.path().join("one");
    let mut args = vec![
        "train",
        "--data",
        p(&data),
        "--out",
        p(&run),
        "--steps",
        "1",
    ];
    args.extend_from_slice(&TINY);
    ok(&args);
    let ckpts: Vec<_> = fs::read_dir(&run)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("ckpt_"))
        .collect();
    assert_eq!(ckpts, ["ckpt_1.bin"]);
}

#[test]
fn zero_consistency_weight_records_zero_consistency() {
    let dir = tempfile::tempdir().unwrap();
    let (_, run) = tiny_run(dir.path(), &["--lambda-lm", "0"]);
    assert!(curves(&run).iter().all(|r| r[4] == 0.0));

    let other = tempfile::tempdir().unwrap();
    let (_, run) = tiny_run(other.path(), &[]);
    // The discriminator's output layer starts at zero, so step 1 is consistent by construction.
    let rows = curves(&run);
    assert_eq!(rows[0][4], 0.0);
    assert!(rows[1..].iter().all(|r| r[4] > 0.0));
}

#[test]
fn resume_continues_the_run_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = tiny_run(dir.path(), &[]);
    let resumed = dir.path().join("resumed");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&resumed),
        "--steps",
        "3",
        "--resume",
        p(&run.join("ckpt_2.bin")),
    ]);
    for f in ["ckpt_3.bin", "curves.csv"] {
        assert_eq!(
            fs::read(run.join(f)).unwrap(),
            fs::read(resumed.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn eval_writes_reports_next_to_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = tiny_run(dir.path(), &[]);
    let out = ok(&[
        "eval",
        "--ckpt",
        p(&run.join("ckpt_3.bin")),
        "--data",
        p(&data),
        "--diversity-maps",
        "2",
        "--diversity-samples",
        "3",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("miou_real"));
    let eval_dir = run.join("eval_3");
    let rows = read_report(&eval_dir.join("report.csv")).unwrap();
    let get = |k: &str| rows.iter().find(|(n, _)| n == k).map(|r| r.1).unwrap();
    assert_eq!(get("raw_generator_read"), 0.0);
    assert_eq!(get("checkpoint_step"), 3.0);
    assert_eq!(get("num_images"), 6.0);
    assert!((0.0..=1.0).contains(&get("miou_real")));

    let text = fs::read_to_string(eval_dir.join("report.csv")).unwrap();
    assert!(text.starts_with("# "));
    assert!(text.contains("miou_real,") && text.contains("report_classes.csv"));
    let classes = fs::read_to_string(eval_dir.join("report_classes.csv")).unwrap();
    assert!(classes.starts_with("class,train_pixels,frequency_rank,group,iou_real\n"));
    assert_eq!(classes.lines().count(), 4);
    assert!(eval_dir.join("manifest.json").exists());
}

#[test]
fn sampling_modes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = tiny_run(dir.path(), &[]);
    let ckpt = run.join("ckpt_3.bin");
    let label = data.join("val/label_0.pgm");
    let map = load_pgm(&label).unwrap();

    let global = dir.path().join("global");
    ok(&[
        "sample",
        "--ckpt",
        p(&ckpt),
        "--label-file",
        p(&label),
        "--num",
        "3",
        "--out",
        p(&global),
    ]);
    let imgs: Vec<_> = (0..3)
        .map(|i| load_ppm(&global.join(format!("img_{i}.ppm"))).unwrap())
        .collect();
    assert_ne!(imgs[0], imgs[1]);

    let present = map.present_classes()[0].to_string();
    let local = dir.path().join("local");
    ok(&[
        "sample",
        "--ckpt",
        p(&ckpt),
        "--label-file",
        p(&label),
        "--mode",
        "local",
        "--region-class",
        &present,
        "--num",
        "2",
        "--out",
        p(&local),
    ]);

    // A class missing from the map: empty region, identical outputs, a warning.
    let absent = (0..3u8).find(|c| !map.present_classes().contains(c));
    if let Some(c) = absent {
        let out_dir = dir.path().join("absent");
        let out = ok(&[
            "sample",
            "--ckpt",
            p(&ckpt),
            "--label-file",
            p(&label),
            "--mode",
            "local",
            "--region-class",
            &c.to_string(),
            "--num",
            "2",
            "--out",
            p(&out_dir),
        ]);
        assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
        let a = fs::read(out_dir.join("img_0.ppm")).unwrap();
        assert_eq!(a, fs::read(out_dir.join("img_1.ppm")).unwrap());
    }
    let bad = dir.path().join("bad");
    assert_eq!(
        code(&lab(&[
            "sample",
            "--ckpt",
            p(&ckpt),
            "--label-file",
            p(&label),
            "--mode",
            "local",
            "--out",
            p(&bad)
        ])),
        2
    );
}

#[test]
fn interpolation_frames_and_noise_dump() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = tiny_run(dir.path(), &[]);
    let ckpt = run.join("ckpt_3.bin");
    let label = data.join("val/label_1.pgm");
    let out = dir.path().join("interp");
    ok(&[
        "interpolate",
        "--ckpt",
        p(&ckpt),
        "--label-file",
        p(&label),
        "--steps",
        "4",
        "--out",
        p(&out),
        "--dump-noise",
    ]);
    assert!(out.join("frame_0.ppm").exists() && out.join("frame_3.ppm").exists());
    assert!(!out.join("frame_4.ppm").exists());
    let noise = fs::read(out.join("noise.bin")).unwrap();
    assert_eq!(&noise[..8], b"OASISNZ\0");
    let bad = dir.path().join("bad");
    assert_eq!(
        code(&lab(&[
            "interpolate",
            "--ckpt",
            p(&ckpt),
            "--label-file",
            p(&label),
            "--steps",
            "1",
            "--out",
            p(&bad)
        ])),
        2
    );
}

#[test]
fn segment_scores_against_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = tiny_run(dir.path(), &[]);
    let ckpt = run.join("ckpt_3.bin");
    let out = dir.path().join("seg");
    let printed = ok(&[
        "segment",
        "--ckpt",
        p(&ckpt),
        "--image",
        p(&data.join("val/img_0.ppm")),
        "--label-file",
        p(&data.join("val/label_0.pgm")),
        "--recreate",
        "2",
        "--out",
        p(&out),
    ]);
    assert!(String::from_utf8_lossy(&printed.stdout).contains("mIoU"));
    let pred = load_pgm(&out.join("label.pgm")).unwrap();
    assert_eq!((pred.height(), pred.width()), (16, 16));
    assert!(out.join("label.ppm").exists() && out.join("recreate_1.ppm").exists());
    let iou = fs::read_to_string(out.join("iou.csv")).unwrap();
    assert!(iou.starts_with("class,iou\n") && iou.contains("mean,"));

    let small = dir.path().join("small.ppm");
    save_ppm(&small, &oasis_core::Tensor::zeros(&[3, 8, 8])).unwrap();
    let mismatch = lab(&[
        "segment",
        "--ckpt",
        p(&ckpt),
        "--image",
        p(&small),
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert_eq!(code(&mismatch), 2);
    let small_label = dir.path().join("small.pgm");
    save_pgm(&small_label, &oasis_core::LabelMap::filled(8, 8, 0)).unwrap();
    let mismatch = lab(&[
        "sample",
        "--ckpt",
        p(&ckpt),
        "--label-file",
        p(&small_label),
        "--out",
        p(&dir.path().join("y")),
    ]);
    assert_eq!(code(&mismatch), 2);
}

#[test]
fn replay_reproduces_recorded_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = tiny_run(dir.path(), &[]);
    let copy = dir.path().join("copy");
    ok(&["replay", "--manifest", p(&data), "--out", p(&copy)]);
    assert_eq!(
        fs::read(data.join("dataset.bin")).unwrap(),
        fs::read(copy.join("dataset.bin")).unwrap()
    );
    let m = RunManifest::load(&copy).unwrap();
    assert!(m.argv.windows(2).any(|w| w == ["--out", p(&copy)]));
}

#[test]
fn corrupt_checkpoint_reports_an_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = tiny_run(dir.path(), &[]);
    let ckpt = run.join("ckpt_3.bin");
    let bytes = fs::read(&ckpt).unwrap();
    let bad = dir.path().join("bad.bin");
    fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
    let out = lab(&[
        "eval",
        "--ckpt",
        p(&bad),
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains(": byte "),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
