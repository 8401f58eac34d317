use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isr_core::corpus::{Manifest, ManifestRecord};
use isr_core::signal::{save_wav, AudioClip};
use isr_core::synth::speech_like;

fn isr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = isr(args);
    assert!(
        out.status.success(),
        "isr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two 1 s synthetic utterances with a transcript file.
fn clean_corpus(dir: &Path) -> PathBuf {
    let mut records = Vec::new();
    std::fs::write(dir.join("refs.txt"), "a the cat sat\nb on the mat\n").unwrap();
    for (i, id) in ["a", "b"].iter().enumerate() {
        let path = dir.join(format!("{id}.wav"));
        save_wav(&speech_like(1.0, 16_000, 40 + i as u64).unwrap(), &path).unwrap();
        records.push(ManifestRecord {
            id: (*id).to_owned(),
            path,
            transcript: Some(dir.join("refs.txt")),
            split: None,
        });
    }
    let manifest = dir.join("clean.csv");
    Manifest::new(records).unwrap().save(&manifest).unwrap();
    manifest
}

#[test]
fn missing_manifest_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let out = isr(&[
        "corrupt",
        "--manifest",
        "/nonexistent/m.csv",
        "--out",
        s(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn corrupt_plans_have_expected_grid_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let clean = clean_corpus(dir.path());
    let train_dir = dir.path().join("train");
    ok(&["corrupt", "--manifest", s(&clean), "--out", s(&train_dir)]);
    assert_eq!(
        Manifest::load(&train_dir.join("manifest.csv"))
            .unwrap()
            .len(),
        2 * 13
    );
    assert!(train_dir.join("run_config.toml").exists());

    let test_dir = dir.path().join("test");
    ok(&[
        "corrupt",
        "--manifest",
        s(&clean),
        "--out",
        s(&test_dir),
        "--plan",
        "test",
    ]);
    let m = Manifest::load(&test_dir.join("manifest.csv")).unwrap();
    assert_eq!(m.len(), 2 * 4);
    assert!(m.get("a_2.00mW").is_some());
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let clean = clean_corpus(d);
    let corrupted = d.join("corrupted");
    ok(&[
        "corrupt",
        "--manifest",
        s(&clean),
        "--out",
        s(&corrupted),
        "--plan",
        "test",
        "--powers",
        "2",
    ]);
    let cm = corrupted.join("manifest.csv");

    // full recovery needs a model
    let out = isr(&["recover", "--manifest", s(&cm), "--out", s(&d.join("r0"))]);
    assert!(!out.status.success());

    let interp = d.join("interp");
    ok(&[
        "recover",
        "--manifest",
        s(&cm),
        "--out",
        s(&interp),
        "--stages",
        "interp-only",
    ]);
    let first = std::fs::read(interp.join("interpolated/a_2.00mW.wav")).unwrap();
    let again = d.join("interp2");
    ok(&[
        "recover",
        "--manifest",
        s(&cm),
        "--out",
        s(&again),
        "--stages",
        "interp-only",
    ]);
    assert_eq!(
        first,
        std::fs::read(again.join("interpolated/a_2.00mW.wav")).unwrap()
    );

    // tiny training run, twice with the same seed
    let train_args = |out: &Path| {
        vec![
            "train".to_owned(),
            "--manifest".into(),
            s(&cm).into(),
            "--out".into(),
            s(out).into(),
            "--steps".into(),
            "3".into(),
            "--channels".into(),
            "2,4".into(),
            "--kernel".into(),
            "3,3".into(),
            "--batch-size".into(),
            "2".into(),
            "--checkpoint-every".into(),
            "2".into(),
        ]
    };
    let m1 = d.join("m1");
    let m2 = d.join("m2");
    for m in [&m1, &m2] {
        let a = train_args(m);
        ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let ck = std::fs::read(m1.join("model.ckpt")).unwrap();
    assert_eq!(ck, std::fs::read(m2.join("model.ckpt")).unwrap());
    assert!(m1.join("model_step2.ckpt").exists());
    let log = std::fs::read_to_string(m1.join("loss.log")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3);

    let full = d.join("full");
    ok(&[
        "recover",
        "--manifest",
        s(&cm),
        "--out",
        s(&full),
        "--model",
        s(&m1.join("model.ckpt")),
    ]);
    assert!(full.join("recovered/b_2.00mW.wav").exists());

    // an oracle condition: the clean clips under the corrupted ids
    let oracle = d.join("oracle");
    std::fs::create_dir_all(&oracle).unwrap();
    for id in ["a", "b"] {
        std::fs::copy(
            d.join(format!("{id}.wav")),
            oracle.join(format!("{id}_2.00mW.wav")),
        )
        .unwrap();
    }
    std::fs::write(d.join("hyp.txt"), "a_2.00mW the cat sat\nb_2.00mW on mat\n").unwrap();
    let report = d.join("report");
    let stdout = ok(&[
        "evaluate",
        "--clean",
        s(&clean),
        "--corrupted",
        s(&cm),
        "--condition",
        &format!("interpolated={}", s(&interp.join("interpolated"))),
        "--condition",
        &format!("recovered={}", s(&full.join("recovered"))),
        "--condition",
        &format!("oracle={}", s(&oracle)),
        "--hypotheses",
        &format!("oracle={}", s(&d.join("hyp.txt"))),
        "--out",
        s(&report),
    ]);
    assert!(!stdout.contains("PARTIAL"), "{stdout}");
    let mut rdr = csv::Reader::from_path(report.join("report.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let oracle_all = rows
        .iter()
        .find(|r| &r[col("condition")] == "oracle" && &r[col("power_mw")] == "all")
        .unwrap();
    assert!((oracle_all[col("stoi")].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    // 0 and 1/3 word errors
    assert!((oracle_all[col("wer")].parse::<f64>().unwrap() - 1.0 / 6.0).abs() < 1e-9);
    assert!(rows.iter().all(|r| &r[col("pesq")] == "unavailable"));
    assert_eq!(rows.len(), 4 * 2);
    assert!(report.join("utterances.csv").exists());
    assert!(report.join("report.txt").exists());
}

#[test]
fn evaluate_flags_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let clean = clean_corpus(d);
    let corrupted = d.join("corrupted");
    ok(&[
        "corrupt",
        "--manifest",
        s(&clean),
        "--out",
        s(&corrupted),
        "--plan",
        "test",
        "--powers",
        "2",
    ]);
    let empty = d.join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let stdout = ok(&[
        "evaluate",
        "--clean",
        s(&clean),
        "--corrupted",
        s(&corrupted.join("manifest.csv")),
        "--condition",
        &format!("missing={}", s(&empty)),
        "--out",
        s(&d.join("report")),
    ]);
    assert!(stdout.starts_with("PARTIAL"));
    assert!(stdout.contains("a_2.00mW [missing]"));
}

#[test]
fn plot_writes_data_and_image() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("silence.wav");
    save_wav(&AudioClip::zeros(16_000, 16_000).unwrap(), &wav).unwrap();
    let out = dir.path().join("plots");
    ok(&["plot", s(&wav), "--out", s(&out)]);
    let img = image::open(out.join("silence_spectrogram.png"))
        .unwrap()
        .to_luma8();
    let cfg = isr_core::signal::StftConfig::default();
    assert_eq!(img.width() as usize, cfg.frames_for(16_000));
    assert_eq!(img.height() as usize, cfg.bins());
    assert!(img.pixels().all(|p| p.0[0] == 0));
    let wave = std::fs::read_to_string(out.join("silence_waveform.csv")).unwrap();
    assert_eq!(wave.lines().count(), 1 + 16_000);
    let matrix = std::fs::read_to_string(out.join("silence_spectrogram.csv")).unwrap();
    assert_eq!(matrix.lines().count(), cfg.bins());
}
