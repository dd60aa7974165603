use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn tilecnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilecnn")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stdout:\n{}\nstderr:\n{}", stdout(o), stderr(o));
}

/// Source images for two color classes plus a mixture of them.
fn fixtures() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&tilecnn(dir.path(), &["synth", "--kind", "color", "--height", "100", "--width", "200", "--seed", "3", "--out", "src"]));
    ok(&tilecnn(dir.path(), &["synth", "--kind", "mixture", "--fraction", "0.5", "--seed", "7", "--out", "mix"]));
    dir
}

fn train_color(dir: &Path, out: &str) -> Output {
    tilecnn(
        dir,
        &["train", "--class", "src/color_a.png", "--class", "src/color_b.png", "--tile", "20", "--epochs", "5", "--seed", "11", "--out", out],
    )
}

#[test]
fn subdivide_reports_grid_and_writes_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let img = tilecnn::image_io::Image::filled(100, 60, &[1, 2, 3]).unwrap();
    tilecnn::image_io::save_image(&img, dir.path().join("in.png")).unwrap();
    let o = tilecnn(dir.path(), &["subdivide", "--input", "in.png", "--tile", "20", "--out", "tiles"]);
    ok(&o);
    assert!(stdout(&o).contains("5 x 3 = 15 tiles written"), "{}", stdout(&o));
    assert!(dir.path().join("tiles/r4_c2.png").is_file());
    assert_eq!(std::fs::read_dir(dir.path().join("tiles")).unwrap().count(), 15);
}

#[test]
fn subdivide_usage_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = tilecnn(dir.path(), &["subdivide", "--input", "in.png", "--tile", "0", "--out", "t"]);
    assert_eq!(o.status.code(), Some(2));
    let o = tilecnn(dir.path(), &["subdivide", "--input", "missing.png", "--tile", "20", "--out", "t"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("file not found"), "{}", stderr(&o));
}

#[test]
fn synth_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["m1", "m2"] {
        ok(&tilecnn(dir.path(), &["synth", "--kind", "mixture", "--fraction", "0.5", "--seed", "7", "--out", out]));
    }
    for file in ["mixture.png", "truth.csv", "color_a.png", "color_b.png"] {
        let a = std::fs::read(dir.path().join("m1").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("m2").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let o = tilecnn(dir.path(), &["synth", "--kind", "mixture", "--fraction", "0.5", "--seed", "7", "--out", "m3"]);
    assert!(stdout(&o).contains("realized fraction"));
}

#[test]
fn noiseless_color_synth_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    ok(&tilecnn(dir.path(), &["synth", "--kind", "color", "--noise", "0", "--height", "8", "--width", "8", "--out", "c"]));
    for file in ["color_a.png", "color_b.png"] {
        let img = tilecnn::image_io::load_image(dir.path().join("c").join(file)).unwrap();
        let first = img.pixel(0, 0).to_vec();
        assert!(img.data().chunks(3).all(|p| p == first.as_slice()), "{file}");
    }
}

#[test]
fn synth_rejects_out_of_range_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let o = tilecnn(dir.path(), &["synth", "--kind", "mixture", "--fraction", "1.5", "--out", "m"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_predict_eval_pipeline() {
    let dir = fixtures();
    let d = dir.path();
    let o = train_color(d, "m.pcnn");
    ok(&o);
    assert!(stdout(&o).contains("epoch   5/5"));
    assert!(stdout(&o).contains("validation accuracy"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("m.report.json")).unwrap()).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 5);

    let o = tilecnn(
        d,
        &["predict", "--model", "m.pcnn", "--input", "mix/mixture.png", "--scores", "s.csv", "--map", "map.png", "--overlay", "ov.png"],
    );
    ok(&o);
    assert!(stdout(&o).contains("class 1: fraction"));
    for f in ["s.csv", "map.png", "ov.png"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(d.join("s.csv")).unwrap();
    assert!(csv.starts_with("row,col,p_0,p_1,argmax\n"));
    assert_eq!(csv.lines().count(), 101);

    let o = tilecnn(d, &["eval", "--model", "m.pcnn", "--input", "mix/mixture.png", "--truth", "mix/truth.csv"]);
    ok(&o);
    assert!(stdout(&o).contains("fraction error 0.0000"), "{}", stdout(&o));

    let o = tilecnn(d, &["eval", "--model", "m.pcnn", "--class", "src/color_a.png", "--class", "src/color_b.png", "--tile", "20"]);
    ok(&o);
    assert!(stdout(&o).contains("accuracy 1.0000 on 100 tiles"), "{}", stdout(&o));
}

#[test]
fn training_is_byte_reproducible() {
    let dir = fixtures();
    ok(&train_color(dir.path(), "a.pcnn"));
    ok(&train_color(dir.path(), "b.pcnn"));
    assert_eq!(std::fs::read(dir.path().join("a.pcnn")).unwrap(), std::fs::read(dir.path().join("b.pcnn")).unwrap());
}

#[test]
fn train_needs_two_classes() {
    let dir = fixtures();
    let o = tilecnn(dir.path(), &["train", "--class", "src/color_a.png", "--tile", "20", "--out", "m.pcnn"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("need ≥2 classes"), "{}", stderr(&o));
}

#[test]
fn corrupted_model_is_rejected() {
    let dir = fixtures();
    ok(&train_color(dir.path(), "m.pcnn"));
    let path = dir.path().join("m.pcnn");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[100] ^= 0xFF;
    std::fs::write(&path, bytes).unwrap();
    let o = tilecnn(dir.path(), &["predict", "--model", "m.pcnn", "--input", "mix/mixture.png"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("CRC"), "{}", stderr(&o));
}

#[test]
fn grayscale_model_converts_rgb_input() {
    let dir = fixtures();
    let d = dir.path();
    let o = tilecnn(
        d,
        &["train", "--class", "src/color_a.png", "--class", "src/color_b.png", "--tile", "20", "--epochs", "2", "--grayscale", "--out", "g.pcnn"],
    );
    ok(&o);
    assert!(stdout(&o).contains("20x20x1"));
    let o = tilecnn(d, &["predict", "--model", "g.pcnn", "--input", "mix/mixture.png"]);
    ok(&o);
    assert!(stdout(&o).contains("converted to grayscale"), "{}", stdout(&o));
}

#[test]
fn sweep_prints_one_row_per_setting() {
    let dir = fixtures();
    let o = tilecnn(
        dir.path(),
        &["eval", "--sweep", "tile=10,20", "--class", "src/color_a.png", "--class", "src/color_b.png", "--epochs", "2"],
    );
    ok(&o);
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("tile=10")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("tile=20")), "{out}");
}

#[test]
fn config_supplies_flags_and_explicit_flags_win() {
    let dir = fixtures();
    let d = dir.path();
    std::fs::write(
        d.join("run.json"),
        r#"{"seed": 11, "train": {"class": ["src/color_a.png", "src/color_b.png"], "tile": 20, "epochs": 3}}"#,
    )
    .unwrap();
    let o = tilecnn(d, &["--config", "run.json", "train", "--out", "c.pcnn"]);
    ok(&o);
    assert!(stdout(&o).contains("epoch   3/3"), "{}", stdout(&o));
    let o = tilecnn(d, &["--config", "run.json", "train", "--epochs", "5", "--out", "e.pcnn"]);
    ok(&o);
    assert!(stdout(&o).contains("epoch   5/5"));
    // Same flags as the explicit run, so the model is identical.
    ok(&train_color(d, "m.pcnn"));
    assert_eq!(std::fs::read(d.join("e.pcnn")).unwrap(), std::fs::read(d.join("m.pcnn")).unwrap());
}
