use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn eda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eda"))
        .args(args)
        .current_dir(dir)
        .env("EDA_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = eda(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_pipeline(dir: &Path) {
    fs::write(dir.join("gen.cfg"), "# small\nnum_scenes=200\nhorizon=6\nseed=3\n").unwrap();
    ok(dir, &["gen-data", "--config", "gen.cfg"]);
    ok(dir, &["make-anchors", "--k", "6"]);
    let train = ok(
        dir,
        &["train", "--epochs", "2", "--hidden", "8", "--layers", "3", "--evolve-layers", "1", "--batch-size", "16"],
    );
    assert!(train.starts_with("epoch,total,reg,cls\n1,"));
    ok(dir, &["eval", "--k", "3", "--score-mode", "rank"]);
    fs::write(
        dir.join("matrix.cfg"),
        "evolve_times=0,1\ndistinct=off,on\nseeds=0\nepochs=1\nhidden_dim=8\nnum_layers=3\nk=3\n",
    )
    .unwrap();
    ok(dir, &["ablate", "--matrix", "matrix.cfg", "--out", "ablation.csv"]);
    ok(dir, &["report", "--in", "ablation.csv"]);
}

#[test]
fn full_pipeline_is_byte_reproducible() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    small_pipeline(a.path());
    small_pipeline(b.path());
    for f in [
        "scenes.edar",
        "anchors.edar",
        "model.edar",
        "train_log.csv",
        "metrics.csv",
        "metrics_layers.csv",
        "ablation.csv",
        "ablation_layers.csv",
        "plots/layers.csv",
        "plots/min_fde.svg",
        "plots/miss_rate.svg",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    let metrics = fs::read_to_string(a.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("config_id,evolve_times,distinct,cls_kind,score_mode,minADE,minFDE,miss_rate,mAP\n"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    assert_eq!(eda(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(eda(d, &["train", "--paradigm", "bogus"]).status.code(), Some(1));
    assert_eq!(eda(d, &["gen-data", "--config", "missing.cfg"]).status.code(), Some(1));

    fs::write(d.join("bad.cfg"), "num_scenes=10\nwibble=1\n").unwrap();
    let out = eda(d, &["gen-data", "--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wibble"));
}

#[test]
fn rejected_training_flags_exit_with_one() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("gen.cfg"), "num_scenes=60\nhorizon=4\n").unwrap();
    ok(d, &["gen-data", "--config", "gen.cfg"]);
    ok(d, &["make-anchors", "--k", "4"]);
    for args in [
        &["train", "--paradigm", "pred", "--evolve-layers", "", "--distinct", "on"][..],
        &["train", "--evolve-layers", "6"][..],
        &["train", "--paradigm", "anchor", "--evolve-layers", "2", "--distinct", "off"][..],
    ] {
        assert_eq!(eda(d, args).status.code(), Some(1), "{args:?}");
    }
    assert!(!d.join("model.edar").exists());
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    assert_eq!(eda(d, &["make-anchors"]).status.code(), Some(2));

    fs::write(d.join("gen.cfg"), "num_scenes=60\nhorizon=4\n").unwrap();
    ok(d, &["gen-data", "--config", "gen.cfg"]);
    let text = fs::read_to_string(d.join("scenes.edar")).unwrap();
    fs::write(d.join("cut.edar"), &text[..text.len() - 7]).unwrap();
    assert_eq!(eda(d, &["make-anchors", "--data", "cut.edar"]).status.code(), Some(2));
}

#[test]
fn help_exits_with_zero() {
    let dir = tempdir().unwrap();
    let out = eda(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ablate"));
}
