use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn uod(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uod"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str], cwd: &Path) -> Value {
    let out = uod(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

const ANNOTATIONS: &str = r#"{"schema":"uod.annotations/1","num_classes":2,"class_names":["a","b"]}
{"image_id":"im1","instances":[{"bbox":[0,0,10,10],"label":1},{"bbox":[20,0,10,10],"label":3}]}
{"image_id":"im2","instances":[{"bbox":[5,5,20,20],"label":2},{"bbox":[40,40,8,8],"label":3}]}
"#;

const PERFECT_RESULTS: &str = r#"{"schema":"uod.results/1","num_classes":2}
{"image_id":"im1","known":[{"bbox":[0,0,10,10],"label":1,"score":0.9}],"unknown":[{"bbox":[20,0,10,10],"score":0.8}]}
{"image_id":"im2","known":[{"bbox":[5,5,20,20],"label":2,"score":0.7}],"unknown":[{"bbox":[40,40,8,8],"score":0.6}]}
"#;

#[test]
fn evaluate_on_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ann.jsonl"), ANNOTATIONS).unwrap();
    fs::write(dir.path().join("res.jsonl"), PERFECT_RESULTS).unwrap();
    let report = ok_json(&["evaluate", "--results", "res.jsonl", "--annotations", "ann.jsonl"], dir.path());
    let m = &report["metrics"];
    for key in ["u_pre", "u_rec", "u_f1", "u_ap", "map"] {
        assert_eq!(m[key], 1.0, "{key}");
    }
    assert_eq!(m["aose"], 0);
    assert_eq!(report["schema"], "uod.report/1");
    assert_eq!(report["config"]["inference"]["beta"], 0.98);
}

#[test]
fn pretest_on_energies_one_to_hundred() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<String> = (1..=100).map(|k| k.to_string()).collect();
    fs::write(dir.path().join("ne.txt"), values.join("\n")).unwrap();
    let r = ok_json(&["pretest", "--energies", "ne.txt"], dir.path());
    assert_eq!(r["gamma"], 5.0);
    assert_eq!(r["proposals"], 100);
}

#[test]
fn pretest_reads_energies_from_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    // one class with unit weight: negative energy equals the logit
    let mut text = String::from("{\"schema\":\"uod.dump/1\",\"num_classes\":1}\n{\"image_id\":\"x\",\"proposals\":[");
    let props: Vec<String> = (1..=100)
        .map(|k| format!("{{\"bbox\":[{k},0,5,5],\"goc\":0.9,\"logits\":[{k}]}}"))
        .collect();
    text += &props.join(",");
    text += "]}\n";
    fs::write(dir.path().join("dump.jsonl"), text).unwrap();
    let r = ok_json(&["pretest", "--dump", "dump.jsonl"], dir.path());
    assert_eq!(r["gamma"], 5.0);
}

#[test]
fn loss_on_worked_fixture() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("fx.json"),
        r#"{"schema":"uod.loss-fixture/1","positive":[[0.6]],"negative":[[0.7]],
            "contrastive":[[{"score":0.8,"iou":0.6},{"score":0.7,"iou":0.9}]],
            "suppression_energies":[-1.0, 2.0]}"#,
    )
    .unwrap();
    let r = ok_json(&["loss", "--fixture", "fx.json", "--gradients", "g.json"], dir.path());
    let close = |v: &Value, want: f64| (v.as_f64().unwrap() - want).abs() < 1e-12;
    assert!(close(&r["pos"], 0.16));
    assert!(close(&r["neg"], 0.2));
    assert!(close(&r["con"], 0.11));
    assert!(close(&r["goc"], 0.47));
    assert!(close(&r["suppression"], 0.5));
    let g: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    assert!(close(&g["positive"][0][0], -0.8));
    assert!(close(&g["suppression"][0], -0.5));
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.toml"), "seed = 7\nnum_images = 4\nobjects = [3, 3]\njitter = 0.1\n").unwrap();
    for out in ["a", "b"] {
        let o = uod(&["synth", "--spec", "spec.toml", "--out-dir", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["dump.jsonl", "annotations.jsonl"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let o = uod(&["synth", "--spec", "spec.toml", "--out-dir", "c", "--seed", "8"], dir.path());
    assert!(o.status.success());
    assert_ne!(fs::read(dir.path().join("a/dump.jsonl")).unwrap(), fs::read(dir.path().join("c/dump.jsonl")).unwrap());
}

#[test]
fn synthetic_round_trip_through_the_pipeline_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.toml"), "seed = 11\nnum_images = 20\ndistractors = 0\n").unwrap();
    assert!(uod(&["synth", "--spec", "spec.toml", "--out-dir", "s"], dir.path()).status.success());
    let o = uod(&["detect", "--dump", "s/dump.jsonl", "--jobs", "2", "-o", "res.jsonl"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = ok_json(&["evaluate", "--results", "res.jsonl", "--annotations", "s/annotations.jsonl"], dir.path());
    let m = &r["metrics"];
    assert_eq!(m["u_pre"], 1.0);
    assert_eq!(m["u_rec"], 1.0);
    assert_eq!(m["map"], 1.0);
    assert_eq!(m["aose"], 0);
}

#[test]
fn gbd_and_nms_baseline_select_boxes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("dump.jsonl"),
        "{\"schema\":\"uod.dump/1\",\"num_classes\":1}\n\
         {\"image_id\":\"x\",\"proposals\":[{\"bbox\":[0,0,10,10],\"goc\":0.9,\"logits\":[0]},\
         {\"bbox\":[1,0,10,10],\"goc\":0.8,\"logits\":[0]},{\"bbox\":[50,50,10,10],\"goc\":0.7,\"logits\":[0]}]}\n",
    )
    .unwrap();
    for extra in [&[][..], &["--baseline", "nms"][..]] {
        let mut args = vec!["gbd", "--dump", "dump.jsonl"];
        args.extend_from_slice(extra);
        let r = ok_json(&args, dir.path());
        let sel: Vec<u64> = r[0]["selected"].as_array().unwrap().iter().map(|s| s["proposal"].as_u64().unwrap()).collect();
        assert_eq!(sel, vec![0, 2], "{extra:?}");
    }
}

#[test]
fn schema_violations_exit_nonzero_and_name_the_record() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("dump.jsonl"),
        "{\"schema\":\"uod.dump/1\",\"num_classes\":2}\n\
         {\"image_id\":\"bad\",\"proposals\":[{\"bbox\":[0,0,10,10],\"goc\":0.9,\"logits\":[0]}]}\n",
    )
    .unwrap();
    let o = uod(&["gbd", "--dump", "dump.jsonl"], dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("\"bad\"") && err.contains("proposal 0"), "{err}");

    fs::write(dir.path().join("ann.jsonl"), ANNOTATIONS.replace("\"label\":3", "\"label\":9")).unwrap();
    fs::write(dir.path().join("res.jsonl"), PERFECT_RESULTS).unwrap();
    let o = uod(&["evaluate", "--results", "res.jsonl", "--annotations", "ann.jsonl"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn invalid_config_and_missing_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ann.jsonl"), ANNOTATIONS).unwrap();
    fs::write(dir.path().join("res.jsonl"), PERFECT_RESULTS).unwrap();
    fs::write(dir.path().join("bad.toml"), "[inference]\nbeta = 2.0\n").unwrap();
    let base = ["evaluate", "--results", "res.jsonl", "--annotations", "ann.jsonl"];
    let mut args = base.to_vec();
    args.extend(["--config", "bad.toml"]);
    assert!(!uod(&args, dir.path()).status.success());
    let mut args = base.to_vec();
    args.extend(["--iou", "0"]);
    assert!(!uod(&args, dir.path()).status.success());
    assert!(!uod(&["evaluate", "--results", "missing.jsonl", "--annotations", "ann.jsonl"], dir.path()).status.success());
}

#[test]
fn text_format_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ann.jsonl"), ANNOTATIONS).unwrap();
    fs::write(dir.path().join("res.jsonl"), PERFECT_RESULTS).unwrap();
    let o = uod(&["evaluate", "--results", "res.jsonl", "--annotations", "ann.jsonl", "--format", "text"], dir.path());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("U-F1\t1.0000"), "{text}");
    assert!(text.contains("AOSE\t0"));
}
