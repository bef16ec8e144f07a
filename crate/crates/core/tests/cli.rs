use std::fs;
use std::path::Path;
use std::process::Command;

use romforge::metrics::EvalReport;
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        let lines: Vec<&str> = self.stdout.lines().collect();
        assert_eq!(lines.len(), 1, "stdout: {}", self.stdout);
        serde_json::from_str(lines[0]).unwrap()
    }
}

fn romforge(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_romforge"))
        .args(args)
        .env("ROMFORGE_THREADS", "1")
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(args: &[&str]) -> Value {
    let r = romforge(args);
    assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
    r.json()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// gen + train(pod-gpr) + eval in `root`; returns the report bytes.
fn pipeline(root: &Path) -> Vec<u8> {
    let data = root.join("data");
    let model = root.join("model");
    let plots = root.join("plots");
    ok(&[
        "gen",
        "--out",
        s(&data),
        "--dwell-times",
        "20:80:5",
        "--layers",
        "12",
        "--seed",
        "3",
    ]);
    ok(&[
        "train",
        "--model",
        "pod-gpr",
        "--data",
        s(&data),
        "--train",
        "20,25,35,40,50,55,65,70,80",
        "--out",
        s(&model),
        "--seed",
        "3",
    ]);
    ok(&[
        "eval",
        "--model-dir",
        s(&model),
        "--data",
        s(&data),
        "--test",
        "30,45,60,75",
        "--plots",
        s(&plots),
    ]);
    fs::read(plots.join("report.json")).unwrap()
}

#[test]
fn pipeline_reports_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = pipeline(&tmp.path().join("a"));
    let b = pipeline(&tmp.path().join("b"));
    assert_eq!(a, b);
    let report: EvalReport = serde_json::from_slice(&a).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert_eq!(serde_json::to_vec_pretty(&report).unwrap(), a.strip_suffix(b"\n").unwrap_or(&a));
    assert!(report.worst_relative_l2() <= 0.02);
}

#[test]
fn gen_reports_dimensions_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let args = |out: &Path| {
        ok(&[
            "gen",
            "--out",
            s(out),
            "--dwell-times",
            "20:80:5",
            "--layers",
            "34",
            "--radial",
            "2",
            "--theta",
            "6",
            "--noise",
            "1e-4",
            "--seed",
            "9",
        ])
    };
    let j = args(&a);
    assert_eq!(j["n_mu"], 13);
    assert_eq!(j["n_t"], 34);
    args(&b);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }

    let single = ok(&[
        "gen",
        "--out",
        s(&tmp.path().join("c")),
        "--dwell-times",
        "20",
        "--radial",
        "2",
        "--theta",
        "6",
    ]);
    assert_eq!(single["n_mu"], 1);
}

#[test]
fn predict_writes_field_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    ok(&["gen", "--out", s(&data), "--layers", "8", "--radial", "3", "--theta", "12"]);
    let t = ok(&[
        "train",
        "--model",
        "pod-gpr",
        "--data",
        s(&data),
        "--train",
        "20,25,35,40,50,55,65,70,80",
        "--out",
        s(&model),
    ]);
    assert!(t["rank"].as_u64().unwrap() >= 1);

    let field = tmp.path().join("f45.snpt");
    ok(&["predict", "--model-dir", s(&model), "--dt", "45", "--out", s(&field)]);
    let values = romforge::data::read_snpt(&field).unwrap();
    assert_eq!(values.ncols(), 1);
    let side: Value = serde_json::from_slice(&fs::read(tmp.path().join("f45.snpt.json")).unwrap()).unwrap();
    assert_eq!(side["extrapolated"], false);
    assert_eq!(side["n_nodes"], values.nrows());

    let far = tmp.path().join("f100.snpt");
    let r = romforge(&["predict", "--model-dir", s(&model), "--dt", "100", "--out", s(&far)]);
    assert_eq!(r.code, 0);
    assert_eq!(r.json()["extrapolated"], true);
    assert!(!r.stderr.is_empty());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    ok(&["gen", "--out", s(&data), "--layers", "4", "--radial", "2", "--theta", "6"]);

    let r = romforge(&[
        "train",
        "--model",
        "pca",
        "--data",
        s(&data),
        "--train",
        "20,40",
        "--out",
        s(&model),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("Usage"), "{}", r.stderr);
    assert!(r.stdout.is_empty());

    let r = romforge(&[
        "predict",
        "--model-dir",
        s(&tmp.path().join("nope")),
        "--dt",
        "45",
        "--out",
        s(&tmp.path().join("x.snpt")),
    ]);
    assert_eq!(r.code, 3);

    ok(&[
        "train",
        "--model",
        "pod-gpr",
        "--data",
        s(&data),
        "--train",
        "20,40,60,80",
        "--out",
        s(&model),
    ]);
    fs::remove_file(model.join("gprs.json")).unwrap();
    let r = romforge(&[
        "predict",
        "--model-dir",
        s(&model),
        "--dt",
        "45",
        "--out",
        s(&tmp.path().join("x.snpt")),
    ]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("gprs.json"), "{}", r.stderr);

    let r = romforge(&[
        "eval",
        "--model-dir",
        s(&model),
        "--data",
        s(&data),
        "--test",
        "",
        "--plots",
        s(&tmp.path().join("p")),
    ]);
    assert_eq!(r.code, 2);

    let r = romforge(&[
        "train",
        "--model",
        "pod-gpr",
        "--data",
        s(&data),
        "--train",
        "20,40",
        "--val",
        "40",
        "--out",
        s(&model),
    ]);
    assert_eq!(r.code, 2);

    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"out": "x", "colour": 3}"#).unwrap();
    assert_eq!(romforge(&["gen", "--config", s(&cfg)]).code, 2);

    let r = romforge(&["gen", "--out", s(&tmp.path().join("g")), "--dwell-times", "80:20:5"]);
    assert_eq!(r.code, 2);
}

#[test]
fn config_file_paths_are_relative_to_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.json");
    fs::write(
        &cfg,
        r#"{"out": "ds", "dwell_times": [20, 50, 80], "layers": 4, "radial": 2, "theta": 6}"#,
    )
    .unwrap();
    let j = ok(&["gen", "--config", s(&cfg)]);
    assert_eq!(j["n_mu"], 3);
    assert!(tmp.path().join("ds").join("meta.json").exists());
    let j = ok(&["gen", "--config", s(&cfg), "--layers", "5"]);
    assert_eq!(j["n_t"], 5);
}

#[test]
fn gca_train_writes_checkpoint_and_history() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("gca");
    ok(&["gen", "--out", s(&data), "--layers", "4", "--radial", "2", "--theta", "6"]);
    let j = ok(&[
        "train",
        "--model",
        "gca",
        "--data",
        s(&data),
        "--train",
        "20,40,60,80",
        "--val",
        "50",
        "--out",
        s(&model),
        "--max-epochs",
        "30",
        "--patience",
        "50",
        "--lambda",
        "0.5",
    ]);
    assert_eq!(j["epochs"], 30);
    let history = fs::read_to_string(model.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 31);
    assert!(history.starts_with("epoch,lr,train_loss,val_loss,l_rec,l_param"));
    let p = ok(&[
        "predict",
        "--model-dir",
        s(&model),
        "--dt",
        "45",
        "--out",
        s(&tmp.path().join("g.snpt")),
    ]);
    assert_eq!(p["model"], "gca");
    let e = ok(&[
        "eval",
        "--model-dir",
        s(&model),
        "--data",
        s(&data),
        "--test",
        "30,70",
        "--plots",
        s(&tmp.path().join("plots")),
    ]);
    assert!(e["worst_relative_l2"].as_f64().unwrap().is_finite());
    assert!(tmp.path().join("plots").join("max_displacement.svg").exists());
}
