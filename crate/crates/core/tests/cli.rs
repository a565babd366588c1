use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use deictic::datamgmt::{save_session, SessionSnapshot, TeachingSample};
use deictic::synth::{class_object_frame, write_synthetic_hutics};
use deictic::teachtrain::ClassDef;

fn deictic(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_deictic"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run deictic");
    assert!(
        out.status.success(),
        "deictic {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let start = text.find('{').expect("json on stdout");
    serde_json::from_str(&text[start..]).expect("stdout json")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_every_subcommand() {
    let text = String::from_utf8(deictic(&["--help"]).stdout).unwrap();
    for cmd in ["serve", "train-highlighter", "train-user-model", "eval", "compare-arch"] {
        assert!(text.contains(cmd), "{cmd} missing from help:\n{text}");
    }
}

#[test]
fn train_then_eval_on_a_small_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    write_synthetic_hutics(&data, 5, 48, 36, 1).unwrap();
    let common = ["--data", path(&data), "--backbone", "tiny-cnn", "--input", "32x24"];

    let mut args = vec!["train-highlighter"];
    args.extend(common);
    args.extend(["--epochs", "2", "--out", path(&model), "--worst", "2"]);
    let report = json(&deictic(&args));
    let miou = report["miou"].as_f64().expect("miou in report");
    assert!((0.0..=1.0).contains(&miou));
    assert!(model.join("report.json").is_file());

    let report = json(&deictic(&["eval", "--model", path(&model), "--data", path(&data)]));
    assert_eq!(report["miou"].as_f64(), Some(miou));

    let table = tmp.path().join("table.json");
    let mut args = vec!["compare-arch", "--specs", "unet,deeplabv3"];
    args.extend(common);
    args.extend(["--epochs", "1", "--out", path(&table)]);
    let out = deictic(&args);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("unet") && text.contains("deeplabv3"), "{text}");
    assert!(table.is_file());
}

#[test]
fn train_user_model_from_a_saved_session() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("session");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut snap = SessionSnapshot::new("cli");
    snap.classes = vec![ClassDef::new(0, "a"), ClassDef::new(1, "b")];
    for i in 0..4 {
        let class = i % 2;
        let scene = class_object_frame(&mut rng, class, 32, 32, &format!("f{i}"));
        let mask = scene.objects[0].to_soft();
        let sample = TeachingSample::new(format!("s{i:05}"), class, scene.frame, Some(mask), "cli").unwrap();
        snap.classes[class].sample_count += 1;
        snap.samples.push(sample);
    }
    save_session(&snap, &dir).unwrap();
    let out = tmp.path().join("user");
    let metrics = json(&deictic(&[
        "train-user-model",
        "--session",
        path(&dir),
        "--backbone",
        "tiny-cnn",
        "--input",
        "32x32",
        "--epochs",
        "2",
        "--lr",
        "0.002",
        "--out",
        path(&out),
    ]));
    assert_eq!(metrics["epochs"], 2);
    assert!(metrics["final_loss"].as_f64().is_some_and(f64::is_finite));
    assert!(out.is_dir());
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_deictic"))
        .args(["train-highlighter", "--data", "/nonexistent", "--out", "/tmp/x", "--input", "0x4"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_deictic"))
        .args(["eval", "--model", "/nonexistent", "--data", "/nonexistent"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
