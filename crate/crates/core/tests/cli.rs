use std::path::Path;
use std::process::{Command, Output};

use ssf::io::write_mask_pgm;
use ssf::SegmentationMask;

fn ssf_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssf")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_mask(path: &Path, l: usize) {
    let data = (0..12 * 10).map(|i| ((i * 7) % (l + 1)) as u16).collect();
    write_mask_pgm(path, &SegmentationMask::new(12, 10, l, Some(0), data).unwrap()).unwrap();
}

#[test]
fn extract_single_pgm_gives_l_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mask = dir.path().join("scene.pgm");
    write_mask(&mask, 40);
    let out = dir.path().join("out");
    let o = ssf_cmd(&["extract", mask.to_str().unwrap(), "--L", "40", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("scene.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "category,pc,mu_x,mu_y,sigma_x,sigma_y");
    assert_eq!(lines.len(), 41);
    assert!(out.join("run.json").is_file());

    let again = dir.path().join("again");
    ssf_cmd(&["extract", mask.to_str().unwrap(), "--L", "40", "--out", again.to_str().unwrap()]);
    assert_eq!(std::fs::read(out.join("scene.csv")).unwrap(), std::fs::read(again.join("scene.csv")).unwrap());

    let bin = dir.path().join("bin");
    let o = ssf_cmd(&["extract", mask.to_str().unwrap(), "--L", "40", "--format", "bin", "--out", bin.to_str().unwrap()]);
    assert!(o.status.success());
    let m = ssf::io::read_ssf_container(&bin.join("scene.ssfm")).unwrap();
    assert_eq!(m, ssf::SsfMatrix::from_csv(&csv).unwrap());
}

#[test]
fn manifest_with_corrupt_mask_continues() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_mask(&d.join("a.pgm"), 5);
    write_mask(&d.join("c.pgm"), 5);
    std::fs::write(d.join("b.pgm"), b"P5\n10 12\n255\nshort").unwrap();
    let header = r#"{"format":"ssf-manifest","version":1,"num_classes":2,"num_categories":5,"void_value":0}"#;
    let entry = |id: &str| format!(r#"{{"id":"{id}","mask":"{id}.pgm","label":0,"split":"train"}}"#);
    std::fs::write(d.join("m.jsonl"), format!("{header}\n{}\n{}\n{}\n", entry("a"), entry("b"), entry("c"))).unwrap();
    let out = d.join("out");
    let o = ssf_cmd(&["extract", "--manifest", d.join("m.jsonl").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("a.csv").is_file() && out.join("c.csv").is_file());
    assert!(!out.join("b.csv").exists());
    assert!(stderr(&o).contains("b.pgm"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssf_cmd(&["train", "--manifest", "x.jsonl", "--stage", "step2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("--from-checkpoint"));
    assert_eq!(ssf_cmd(&["extract", "--bogus"]).status.code(), Some(2));
    assert_eq!(ssf_cmd(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ssf_cmd(&[]).status.code(), Some(2));
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssf_cmd(&["train", "--manifest", "/nonexistent/m.jsonl", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_documents_flags() {
    let top = String::from_utf8(ssf_cmd(&["--help"]).stdout).unwrap();
    for sub in ["extract", "synth", "train", "eval", "ablate", "gradcheck", "bench"] {
        assert!(top.contains(sub), "{sub}");
    }
    let train = String::from_utf8(ssf_cmd(&["train", "--help"]).stdout).unwrap();
    for flag in ["--subset", "--head", "--seed", "--epochs", "--batch", "--lr", "--weight-decay", "--from-checkpoint", "--threads", "SSF_LR"] {
        assert!(train.contains(flag), "{flag}");
    }
    let extract = String::from_utf8(ssf_cmd(&["extract", "--help"]).stdout).unwrap();
    for flag in ["--L", "--void", "--format"] {
        assert!(extract.contains(flag), "{flag}");
    }
}

#[test]
fn gradcheck_default_cnn_passes() {
    let o = ssf_cmd(&["gradcheck", "--model", "ssf-cnn", "--tol", "1e-4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn synth_train_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    let o = ssf_cmd(&[
        "synth", "--out", data.to_str().unwrap(), "--classes", "3", "--L", "5", "--size", "16", "--samples", "10",
        "--global-width", "4", "--seed", "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = data.join("manifest.jsonl");
    let m = manifest.to_str().unwrap();

    let run = d.join("nn");
    let o = ssf_cmd(&["train", "--manifest", m, "--head", "nn", "--epochs", "2", "--seed", "1", "--out", run.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    for k in ["epoch", "split", "loss", "accuracy"] {
        assert!(first.get(k).is_some(), "{k}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("model.ssfc.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 1);
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["version"], ssf::VERSION);

    let run2 = d.join("nn2");
    ssf_cmd(&["train", "--manifest", m, "--head", "nn", "--epochs", "2", "--seed", "1", "--out", run2.to_str().unwrap()]);
    assert_eq!(std::fs::read(run.join("model.ssfc")).unwrap(), std::fs::read(run2.join("model.ssfc")).unwrap());

    let s1 = d.join("s1");
    let o = ssf_cmd(&["train", "--manifest", m, "--stage", "step1", "--epochs", "2", "--out", s1.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s2 = d.join("s2");
    let ck = s1.join("model.ssfc");
    let o = Command::new(env!("CARGO_BIN_EXE_ssf"))
        .args(["train", "--manifest", m, "--stage", "step2", "--head", "nn", "--out", s2.to_str().unwrap()])
        .env("SSF_FROM_CHECKPOINT", &ck)
        .env("SSF_EPOCHS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(s2.join("model.ssfc.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["epochs"], 1);
    assert_eq!(meta["frozen_hashes"][0]["before"], meta["frozen_hashes"][0]["after"]);

    let ev = d.join("ev");
    let o = ssf_cmd(&[
        "eval", "--manifest", m, "--checkpoint", s2.join("model.ssfc").to_str().unwrap(), "--out", ev.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(ev.join("confusion.csv").is_file() && ev.join("report.json").is_file());

    // a step-1 checkpoint cannot evaluate a dataset it was not built for
    let o = ssf_cmd(&["train", "--manifest", m, "--stage", "step2", "--from-checkpoint", run.join("model.ssfc").to_str().unwrap(), "--out", d.join("bad").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
