use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn brainqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brainqc")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr_error(o: &Output) -> Value {
    assert!(!o.status.success());
    let line = String::from_utf8_lossy(&o.stderr).lines().last().unwrap().to_string();
    serde_json::from_str(&line).unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn every_subcommand_accepts_the_common_flags() {
    for sub in [
        "select",
        "preprocess",
        "synth",
        "serve-annotate",
        "consensus",
        "kappa",
        "train",
        "evaluate",
        "learning-curve",
        "audit-gado",
    ] {
        let o = brainqc(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        let help = String::from_utf8_lossy(&o.stdout);
        for flag in ["--config", "--seed", "--out"] {
            assert!(help.contains(flag), "{sub} lacks {flag}");
        }
    }
}

#[test]
fn usage_and_runtime_errors_are_json() {
    let o = brainqc(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_error(&o)["error"]["kind"], "usage");

    let o = brainqc(&["select", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_error(&o)["error"]["kind"], "io");

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, "{}");
    let o = brainqc(&["select", "--config", cfg.to_str().unwrap()]);
    assert_eq!(stderr_error(&o)["error"]["kind"], "config");
}

#[test]
fn select_keeps_t1w_with_enough_slices() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("catalog.csv"),
        "image_id,patient_id,series_description,study_description,body_part_examined,n_slices,manufacturer,model_name,field_strength_tesla\n\
         a,p1,3D T1 EG MPRAGE,,HEAD,176,Siemens,Avanto,1.5\n\
         b,p1,T2 FLAIR,,HEAD,176,Siemens,Avanto,1.5\n\
         c,p2,SAG 3D BRAVO,,HEAD,39,GE,Signa,3\n\
         d,p3,sag 3d bravo,,HEAD,40,GE,Signa,3\n",
    );
    write(&dir.path().join("select.toml"), "catalog = \"catalog.csv\"\n");
    let out = dir.path().join("selected.jsonl");
    let v = stdout_json(&brainqc(&[
        "select",
        "--config",
        dir.path().join("select.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(v["rows_read"], 4);
    assert_eq!(v["after_t1w"], 3);
    assert_eq!(v["selected"], 2);
    let ids: Vec<String> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["image_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids, ["a", "d"]);
}

#[test]
fn synth_then_preprocess_then_audit() {
    let dir = tempfile::tempdir().unwrap();
    let synth_cfg = dir.path().join("synth.json");
    write(&synth_cfg, &json!({ "n": 12, "shape": [16, 16, 16] }).to_string());
    let data = dir.path().join("data");
    let v = stdout_json(&brainqc(&[
        "synth",
        "--config",
        synth_cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        data.to_str().unwrap(),
    ]));
    assert_eq!(v["images"], 12);
    assert_eq!(v["seed"], 3);
    assert!(data.join("img00000.nii").exists());
    assert!(data.join("slices/img00000_sagittal.png").exists());

    let pre_cfg = dir.path().join("pre.json");
    write(&pre_cfg, &json!({ "input_dir": "data", "target_shape": [12, 14, 10] }).to_string());
    let pre = dir.path().join("pre");
    let v =
        stdout_json(&brainqc(&["preprocess", "--config", pre_cfg.to_str().unwrap(), "--out", pre.to_str().unwrap()]));
    assert_eq!(v["processed"], 12);
    let vol = brainqc::nifti::read_nifti_file(&pre.join("img00003.nii")).unwrap();
    assert_eq!(vol.dims(), [12, 14, 10]);
    let (lo, hi) = vol.min_max();
    assert!(lo >= 0.0 && hi <= 1.0);

    let audit_cfg = dir.path().join("audit.json");
    write(&audit_cfg, &json!({ "catalog": "data/catalog.csv", "labels": "data/labels.jsonl" }).to_string());
    let v = stdout_json(&brainqc(&["audit-gado", "--config", audit_cfg.to_str().unwrap()]));
    let t = &v["table"];
    let total: u64 = ["manual_yes_flag_yes", "manual_yes_flag_no", "manual_no_flag_yes", "manual_no_flag_no"]
        .iter()
        .map(|k| t[k].as_u64().unwrap())
        .sum();
    assert_eq!(total + v["skipped_straight_reject"].as_u64().unwrap(), 12);
}

#[test]
fn consensus_and_kappa_read_the_annotation_log() {
    use brainqc::annotation::AnnotationStore;
    use brainqc::model::{Annotation, Grades};
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    {
        let images = (0..4).map(|i| format!("img{i}")).collect();
        let mut s = AnnotationStore::open(&log, images, ["r1".into(), "r2".into()]).unwrap();
        let g = |m, c, n| Grades::new(m, c, n).unwrap();
        s.submit(Annotation::graded("img0", "r1", false, g(0, 0, 0))).unwrap();
        s.submit(Annotation::graded("img0", "r2", false, g(0, 0, 0))).unwrap();
        s.submit(Annotation::graded("img1", "r1", true, g(1, 0, 0))).unwrap();
        s.submit(Annotation::graded("img1", "r2", true, g(1, 0, 0))).unwrap();
        s.submit(Annotation::straight_reject("img2", "r1")).unwrap();
        s.submit(Annotation::graded("img2", "r2", false, g(0, 2, 0))).unwrap();
        s.submit(Annotation::graded("img3", "r1", false, g(0, 0, 2))).unwrap();
        s.submit(Annotation::graded("img3", "r2", false, g(0, 0, 1))).unwrap();
    }
    let cfg = dir.path().join("store.json");
    write(&cfg, &json!({ "log": "log.jsonl", "raters": ["r1", "r2"] }).to_string());
    let out = dir.path().join("labels.jsonl");
    let v = stdout_json(&brainqc(&["consensus", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    assert_eq!(v["consensus"], 3);
    assert_eq!(v["pending_adjudication"], json!(["img2"]));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);

    let v = stdout_json(&brainqc(&["kappa", "--config", cfg.to_str().unwrap()]));
    assert_eq!(v["images"], 4);
    let rows = v["kappa"].as_array().unwrap();
    let motion = rows.iter().find(|r| r["characteristic"] == "motion").unwrap();
    assert_eq!(motion["n"], 3);
    assert!((motion["kappa"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn train_and_evaluate_round_trip_through_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let synth_cfg = dir.path().join("synth.json");
    write(&synth_cfg, &json!({ "n": 40, "shape": [16, 16, 16], "slices": false }).to_string());
    stdout_json(&brainqc(&["synth", "--config", synth_cfg.to_str().unwrap(), "--out", data.to_str().unwrap()]));

    let train_cfg = dir.path().join("train.json");
    write(
        &train_cfg,
        &json!({
            "volumes_dir": "data", "n_test": 10, "n_folds": 2, "task": "sr", "fc_hidden": 16,
            "folds": [0], "train": { "max_epochs": 2, "early_stop_patience": 1, "learning_rate": 0.001 }
        })
        .to_string(),
    );
    let model = dir.path().join("model");
    let v = stdout_json(&brainqc(&[
        "train",
        "--config",
        train_cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        model.to_str().unwrap(),
    ]));
    assert_eq!(v["checkpoints"].as_array().unwrap().len(), 1);
    assert!(model.join("fold0.ckpt.json").exists());
    assert!(model.join("table.txt").exists());

    let eval_cfg = dir.path().join("eval.json");
    write(
        &eval_cfg,
        &json!({ "volumes_dir": "data", "split": "model/split.json", "checkpoints": ["model/fold0.ckpt.json"] })
            .to_string(),
    );
    let v = stdout_json(&brainqc(&["evaluate", "--config", eval_cfg.to_str().unwrap()]));
    let trained = &serde_json::from_str::<Value>(&std::fs::read_to_string(model.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["summaries"][0]["folds"][0], trained["folds"][0]);
    assert!(v["table"].as_str().unwrap().contains("BA classifiers"));
}
