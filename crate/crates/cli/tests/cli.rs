use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geoalign::geom::{box_iou, OrientedBox3};
use geoalign::synthetic::{write_corpus, SyntheticConfig};
use geoalign_cli::args::{Cli, Command as Sub};
use geoalign_cli::validate::validate_inputs;
use clap::Parser;
use serde_json::{json, Value};

fn geoalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoalign"))
        .args(args)
        .env_remove("GEOALIGN_THREADS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn parsed(args: &[&str]) -> Sub {
    let mut argv = vec!["geoalign"];
    argv.extend_from_slice(args);
    Cli::try_parse_from(argv).unwrap().command
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(geoalign(&["--help"]).status.code(), Some(0));
    assert_eq!(geoalign(&["--version"]).status.code(), Some(0));
    assert_eq!(geoalign(&["eval-detection", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(geoalign(&[]).status.code(), Some(1));
    assert_eq!(geoalign(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(geoalign(&["eval-caption", "--pred", "x"]).status.code(), Some(1));
    assert_eq!(geoalign(&["eval-pointmap", "--pred", "a", "--gt", "b", "--mode", "wrong", "--out", "c"]).status.code(), Some(1));
}

#[test]
fn missing_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = geoalign(&["eval-grounding", "--pred", "/nonexistent/p.jsonl", "--gt", "/nonexistent/g.jsonl", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/p.jsonl"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn short_box_names_line_and_arity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gt = write(
        d,
        "gt.jsonl",
        "{\"sample_id\": \"a\", \"bbox_3d\": [0, 0, 1, 1, 1, 1, 0, 0, 0]}\n\
         {\"sample_id\": \"b\", \"bbox_3d\": [0, 0, 1, 1, 1, 1, 0, 0]}\n",
    );
    let pred = write(d, "pred.jsonl", "");
    let cmd = parsed(&["eval-grounding", "--pred", s(&pred), "--gt", s(&gt), "--out", "r.json"]);
    let diags = validate_inputs(&cmd);
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert_eq!(diags[0].line, Some(2));
    assert!(diags[0].defect.contains("9 numbers, found 8"), "{}", diags[0].defect);

    let o = geoalign(&["eval-grounding", "--pred", s(&pred), "--gt", s(&gt), "--out", s(&d.join("r.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gt.jsonl:2:"), "{}", stderr(&o));
}

#[test]
fn well_formed_scenes_have_no_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("scenes");
    write_corpus(&root, 2, &SyntheticConfig { write_images: false, ..Default::default() }, 1).unwrap();
    let ann = root.join("annotations.json");
    let cmd = parsed(&["gen-sparse", "--scenes", s(&root), "--annotations", s(&ann), "--out", "x.jsonl"]);
    assert!(validate_inputs(&cmd).is_empty());
}

#[test]
fn depth_sidecar_width_mismatch_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("scenes");
    write_corpus(&root, 1, &SyntheticConfig { write_images: false, ..Default::default() }, 1).unwrap();
    let side = root.join("scene0000/depth/000003.json");
    let mut header: Value = report(&side);
    header["width"] = json!(32);
    std::fs::write(&side, header.to_string()).unwrap();

    let (ann, out) = (root.join("annotations.json"), dir.path().join("x.jsonl"));
    let args = ["gen-sparse", "--scenes", s(&root), "--annotations", s(&ann), "--out", s(&out)];
    let diags = validate_inputs(&parsed(&args));
    let width: Vec<_> = diags.iter().filter(|d| d.defect.contains("`width`")).collect();
    assert_eq!(width.len(), 1, "{diags:?}");
    assert!(width[0].file.ends_with("000003.json"));

    let o = geoalign(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("field `width`"));
    assert!(!dir.path().join("x.jsonl").exists());
}

#[test]
fn unknown_fusion_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.json", r#"{"channels": 4, "chanels": 5}"#);
    let o = geoalign(&["fusion-demo", "--config", s(&cfg), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("chanels"), "{}", stderr(&o));
}

/// Exhaustive maximum matching size.
fn brute_tp(ious: &[Vec<f64>], thresh: f64, used: &mut Vec<bool>, i: usize) -> usize {
    if i == ious.len() {
        return 0;
    }
    let mut best = brute_tp(ious, thresh, used, i + 1);
    for j in 0..used.len() {
        if !used[j] && ious[i][j] >= thresh {
            used[j] = true;
            best = best.max(1 + brute_tp(ious, thresh, used, i + 1));
            used[j] = false;
        }
    }
    best
}

#[test]
fn detection_fixture_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bx = |v: [f64; 9]| OrientedBox3::from_array(&v).unwrap();
    // One crowded class where greedy matching in order would lose a pair.
    let gts = [bx([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]), bx([0.6, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0])];
    let preds = [
        bx([0.3, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
        bx([-0.3, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
        bx([5.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
    ];
    let ious: Vec<Vec<f64>> = preds.iter().map(|p| gts.iter().map(|g| box_iou(p, g)).collect()).collect();
    let tp = brute_tp(&ious, 0.25, &mut vec![false; gts.len()], 0);
    assert_eq!(tp, 2);

    let entries: Vec<String> = preds
        .iter()
        .map(|b| format!("{{\"label\": \"Chair\", \"bbox_3d\": {:?}}}", b.to_array()))
        .chain(["{\"label\": \"chair\", \"bbox_3d\": [1, 2]}".to_string(), "{\"label\": \"zebra\", \"bbox_3d\": [0, 0, 0, 1, 1, 1, 0, 0, 0]}".to_string()])
        .collect();
    let raw = format!("```json\n[{}]\n```", entries.join(", "));
    let pred = write(d, "p.jsonl", &format!("{}\n", json!({"sample_id": "s1", "task": "detection", "raw_text": raw})));
    let objs: Vec<Value> = gts.iter().map(|b| json!({"label": "chair", "bbox_3d": b.to_array()})).collect();
    let gt = write(d, "g.jsonl", &format!("{}\n", json!({"sample_id": "s1", "objects": objs})));
    let classes = write(d, "classes.txt", "# furniture\nchair\ntable\n");

    for (strict, fp) in [(false, 1), (true, 2)] {
        let out = d.join(format!("r{strict}.json"));
        let mut args = vec!["eval-detection", "--pred", s(&pred), "--gt", s(&gt), "--classes", s(&classes), "--out", s(&out)];
        if strict {
            args.push("--strict");
        }
        let o = geoalign(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let r = &report(&out)["result"];
        assert_eq!(r["tp"], json!(tp));
        assert_eq!(r["fp"], json!(fp));
        assert_eq!(r["fn"], json!(0));
        assert_eq!(r["parse_failures"], json!(1));
        assert_eq!(r["out_of_class"], json!(1));
    }
}

#[test]
fn fusion_demo_grad_check_and_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(
        d,
        "f.json",
        r#"{"channels": 3, "grid": [4, 6], "grad_check": {"trials": 20, "channels": 3, "grid": [4, 4], "step": 1e-5, "tolerance": 1e-5}}"#,
    );
    let run = |out: &Path, threads: &str| {
        let o = geoalign(&[
            "fusion-demo", "--config", s(&cfg), "--grad-check", "--seed", "3", "--threads", threads, "--out", s(out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let a = run(&d.join("a.json"), "1");
    let b = run(&d.join("a.json"), "3");
    assert_eq!(a, b);
    let r = report(&d.join("a.json"));
    assert_eq!(r["command"], "fusion-demo");
    assert_eq!(r["toolkit_version"], geoalign::TOOLKIT_VERSION);
    assert!(r["result"]["grad_check"]["max_relative_error"].as_f64().unwrap() <= 1e-5);
    assert_eq!(r["result"]["layers"].as_array().unwrap().len(), 24);
    assert_eq!(r["result"]["injection_delta"].as_array().unwrap().len(), 3);
}

#[test]
fn fusion_demo_saves_loadable_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write(d, "f.json", r#"{"channels": 2, "grid": [2, 2], "variant": "cross_attention", "num_layers": 4, "inject_layers": [1, 2]}"#);
    let prefix = d.join("params");
    let o = geoalign(&["fusion-demo", "--config", s(&cfg), "--save-params", s(&prefix), "--out", s(&d.join("r.json"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let model = geoalign::fusion::FusionModel::load(&d.join("params.json"), &d.join("params.bin")).unwrap();
    assert_eq!(model.config.num_layers, 4);
    assert_eq!(model.layers.len(), 4);
}

#[test]
fn gen_sparse_report_and_renders() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let root = d.join("scenes");
    write_corpus(&root, 2, &SyntheticConfig::default(), 5).unwrap();
    let out = d.join("s.jsonl");
    let rep = d.join("gen.json");
    let renders = d.join("renders");
    let o = geoalign(&[
        "gen-sparse", "--scenes", s(&root), "--annotations", s(&root.join("annotations.json")), "--out", s(&out),
        "--report", s(&rep), "--render-dir", s(&renders),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("geoalign gen-sparse: "));

    let lines: Vec<Value> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let r = report(&rep);
    assert_eq!(r["config"]["seed"], 7);
    let scenes = r["result"]["scenes"].as_array().unwrap();
    assert_eq!(scenes.len(), 2);
    let accepted: u64 = scenes.iter().map(|x| x["accepted"].as_u64().unwrap()).sum();
    assert_eq!(accepted as usize, lines.len());
    for x in scenes {
        assert_eq!(x["attempted"], json!(x["accepted"].as_u64().unwrap() + x["skipped"].as_u64().unwrap()));
    }
    for l in &lines {
        let id = l["sample_id"].as_str().unwrap();
        assert!(renders.join(format!("{id}.png")).is_file());
        assert_eq!(l["task"], "sparse_point");
        assert_eq!(l["messages"][0]["role"], "human");
        assert_eq!(l["messages"][1]["role"], "gpt");
    }
    // Only the outputs remain next to the report: no stray temporaries.
    let mut names: Vec<String> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["gen.json", "renders", "s.jsonl", "scenes"]);
}

#[test]
fn prompt_emit_uses_fallback_task() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let input = write(
        d,
        "in.jsonl",
        "{\"sample_id\": \"q1\", \"payload\": {\"num_frames\": 3, \"query\": \"the red chair\"}}\n\
         {\"sample_id\": \"q2\", \"task\": \"caption\", \"payload\": {\"num_frames\": 2, \"point\": [3.451, 0.9, -1.37]}}\n",
    );
    let out = d.join("o.jsonl");
    let o = geoalign(&["prompt-emit", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("in.jsonl:1:"), "{}", stderr(&o));

    let o = geoalign(&["prompt-emit", "--input", s(&input), "--task", "grounding_frame", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines: Vec<Value> = std::fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["task"], "grounding_frame");
    assert!(lines[0]["prompt"].as_str().unwrap().contains("the red chair"));
    assert_eq!(lines[1]["task"], "caption");
    assert!(lines[1]["prompt"].as_str().unwrap().contains("[3.45, 0.9, -1.37]"));
}

#[test]
fn caption_and_pointmap_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gt = write(
        d,
        "g.jsonl",
        "{\"sample_id\": \"a\", \"references\": [\"a tall lamp in the corner\"], \"iou\": 0.8}\n\
         {\"sample_id\": \"b\", \"references\": [\"a small red chair by the desk\"], \"iou\": 0.3}\n",
    );
    let pred = write(
        d,
        "p.jsonl",
        "{\"sample_id\": \"a\", \"task\": \"caption\", \"raw_text\": \"  a tall lamp in the corner\\n\"}\n",
    );
    let out = d.join("c.json");
    let o = geoalign(&["eval-caption", "--pred", s(&pred), "--gt", s(&gt), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = &report(&out)["result"];
    assert_eq!(r["n_passing"], 1);
    assert_eq!(r["n_missing"], 1);
    assert!((r["bleu4_at_05"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let cloud = |pts: &[[f64; 3]]| json!({"scene_id": "s", "points": pts}).to_string() + "\n";
    let g_pts = [[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [0.0, 0.0, 2.0]];
    let p_pts: Vec<[f64; 3]> = g_pts.iter().map(|p| [2.0 * p[0] + 1.0, 2.0 * p[1], 2.0 * p[2]]).collect();
    let g = write(d, "pg.jsonl", &cloud(&g_pts));
    let p = write(d, "pp.jsonl", &cloud(&p_pts));
    for (mode, small) in [("aligned", true), ("metric", false)] {
        let out = d.join(format!("{mode}.json"));
        let o = geoalign(&["eval-pointmap", "--pred", s(&p), "--gt", s(&g), "--mode", mode, "--median", "pooled", "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let v = report(&out)["result"]["overall"]["overall"]["mean"].as_f64().unwrap();
        assert_eq!(v < 1e-9, small, "{mode}: {v}");
    }
}

#[test]
fn pointmap_scene_sets_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let g = write(d, "g.jsonl", "{\"scene_id\": \"a\", \"points\": [[0, 0, 1]]}\n");
    let p = write(d, "p.jsonl", "{\"scene_id\": \"b\", \"points\": [[0, 0, 1]]}\n");
    let o = geoalign(&["eval-pointmap", "--pred", s(&p), "--gt", s(&g), "--mode", "metric", "--out", s(&d.join("r.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no prediction for scene \"a\""), "{}", stderr(&o));
}
