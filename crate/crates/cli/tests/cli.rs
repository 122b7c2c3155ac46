use std::path::Path;
use std::process::{Command, Output};

use panorect_core::image::ErpImage;
use panorect_core::procedural::test_image;

fn panorect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panorect")).args(args).arg("--quiet").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {}: {}", code(&o), String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn convert_round_trips_through_faces() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("pano.png");
    test_image(32, 1).write_png(&src).unwrap();
    let faces = dir.path().join("faces");
    ok(panorect(&["convert", "--mode", "erp2cube", "--input", s(&src), "--output", s(&faces)]));
    for name in ["px", "nx", "py", "ny", "pz", "nz"] {
        assert!(faces.join(format!("{name}.png")).exists(), "{name}");
    }
    let back = dir.path().join("back.png");
    ok(panorect(&["convert", "--mode", "cube2erp", "--input", s(&faces), "--output", s(&back)]));
    let img = ErpImage::read_png(&back).unwrap();
    assert_eq!(img.shape(), [3, 32, 64]);
    assert!(back.with_extension("json").exists());
}

#[test]
fn non_panoramic_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("square.png");
    panorect_core::image::write_png(&src, 3, 20, 20, &vec![0.5; 3 * 400]).unwrap();
    let o = panorect(&["convert", "--mode", "erp2cube", "--input", s(&src), "--output", s(&dir.path().join("f"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn invalid_configuration_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[loss]\ngamma = -1.0\n").unwrap();
    let o = panorect(&["--config", s(&cfg), "synth", "--procedural", "2", "--output", s(&dir.path().join("d"))]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let o = panorect(&["rectify", "--input", "x.png", "--output", "y.png", "--pitch", "95", "--roll", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn zero_angles_copy_the_input_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("pano.png");
    test_image(32, 2).write_png(&src).unwrap();
    let out = dir.path().join("out").join("up.png");
    ok(panorect(&["rectify", "--input", s(&src), "--output", s(&out), "--pitch", "0", "--roll", "0"]));
    assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(&out).unwrap());
    let tilted = dir.path().join("tilted.png");
    ok(panorect(&["rectify", "--input", s(&src), "--output", s(&tilted), "--pitch", "-20", "--roll", "10"]));
    assert_ne!(std::fs::read(&src).unwrap(), std::fs::read(&tilted).unwrap());
}

#[test]
fn synth_train_eval_and_rectify_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = ok(panorect(&[
        "synth", "--procedural", "10", "--erp-height", "64", "--face-size", "16", "--output", s(&data),
    ]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("train 7, val 2, test 1"));

    let noisy = dir.path().join("noisy");
    ok(panorect(&["degrade", "--dataset", s(&data), "--spec", "gaussian:0.02", "--output", s(&noisy)]));
    let o = panorect(&["degrade", "--dataset", s(&data), "--spec", "blur:3", "--output", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);

    let run = dir.path().join("run");
    ok(panorect(&[
        "train", "--dataset", s(&data), "--output", s(&run), "--scale", "toy", "--max-steps", "2", "--batch-size", "2",
    ]));
    let ckpt = run.join("checkpoint");
    assert!(ckpt.join("checkpoint.json").exists() && run.join("run.json").exists());

    let results = dir.path().join("results");
    let o = ok(panorect(&["eval", "--dataset", s(&data), "--checkpoint", s(&ckpt), "--protocol", "--output", s(&results)]));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 10, "{stdout}");
    assert!(results.join("results-test-none.json").exists());
    assert!(results.join("results-test-mosaic-8-3.json").exists());

    let src = dir.path().join("pano.png");
    test_image(64, 3).write_png(&src).unwrap();
    let up = dir.path().join("up.png");
    ok(panorect(&["rectify", "--input", s(&src), "--output", s(&up), "--checkpoint", s(&ckpt)]));
    assert_eq!(ErpImage::read_png(&up).unwrap().shape(), [3, 64, 128]);

    let o = panorect(&["eval", "--dataset", s(&data), "--checkpoint", s(&dir.path().join("nope"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn operator_gradients_pass() {
    let o = ok(panorect(&["gradcheck", "--ops-only"]));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.lines().count() > 10);
    assert!(!table.contains("FAIL"), "{table}");
}
