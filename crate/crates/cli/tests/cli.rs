use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn vnode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vnode")).args(args).output().expect("spawn vnode")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vnode-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn path_generator_writes_one_edge_per_line() {
    let out = vnode(&["graph", "gen", "--kind", "path", "--n", "10"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| !l.trim().is_empty()).count(), 9);
}

#[test]
fn self_loop_is_an_input_error_with_a_line_number() {
    let path = scratch("loop.edges");
    std::fs::write(&path, "0 1\n1 2\n2 2\n").unwrap();
    let out = vnode(&["graph", "load", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn unknown_flag_exits_with_input_code() {
    assert_eq!(vnode(&["graph", "load", "--bogus"]).status.code(), Some(2));
}

#[test]
fn vn_effect_on_complete_and_path_graphs() {
    let v = json(&vnode(&["spectral", "vn-effect", "complete:4", "path:50"]));
    let graphs = v["result"]["graphs"].as_array().unwrap();
    assert!((graphs[0]["avg_delta"].as_f64().unwrap() - 1.5).abs() < 1e-10);
    assert!(graphs[1]["avg_delta"].as_f64().unwrap() < 0.0);
    assert_eq!(v["command"], "spectral vn-effect");
    assert_eq!(v["globals"]["seed"], 0);
}

#[test]
fn vn_effect_rejects_a_disconnected_graph() {
    let path = scratch("split.edges");
    std::fs::write(&path, "0 1\n2 3\n").unwrap();
    let out = vnode(&["spectral", "vn-effect", path.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn homogeneity_holds_for_gcn_vn_on_a_path() {
    let v = json(&vnode(&["sensitivity", "homogeneity", "--arch", "gcn-vn", "--graph", "path:7", "--i", "0"]));
    assert_eq!(v["result"]["homogeneous"], true);
}

#[test]
fn identity_attention_has_the_reference_column_std() {
    let v = json(&vnode(&["sensitivity", "attention-std", "--matrix", "identity", "--n", "4"]));
    let s = v["result"]["column_std"].as_f64().unwrap();
    assert!((s - 3f64.sqrt() / 4.0).abs() < 1e-12);
}

#[test]
fn pairnorm_cannot_fit_a_constant_filter() {
    let target = scratch("t0.json");
    std::fs::write(&target, r#"{"degree":2,"theta":[[[1,0],[0,1]],[[0,0],[0,0]],[[0,0],[0,0]]]}"#).unwrap();
    let v = json(&vnode(&["filters", "fit", "--arch", "pairnorm-vn", "--target", target.to_str().unwrap()]));
    assert!(v["result"]["residual"].as_f64().unwrap() > 1e-3);
}

#[test]
fn construct_reproduces_the_target() {
    let target = scratch("t2.json");
    std::fs::write(&target, r#"{"degree":2,"theta":[[[1,2],[0,1]],[[5,0],[0,5]],[[6,0],[0,6]]]}"#).unwrap();
    let v = json(&vnode(&["filters", "construct", "--target", target.to_str().unwrap()]));
    assert!(v["result"]["max_abs_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn train_mixing_csv_has_one_row_per_seed() {
    let out = vnode(&["--format", "csv", "train", "mixing", "--steps", "5", "--seeds", "3", "--samples", "8"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "seed,initial_loss,final_loss");
    assert_eq!(lines.len(), 4);
}

#[test]
fn csv_is_refused_where_there_is_no_table() {
    let out = vnode(&["--format", "csv", "filters", "extract", "--arch", "linear-mpnn"]);
    assert_eq!(out.status.code(), Some(2));
}
