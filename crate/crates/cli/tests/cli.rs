use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn prfgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prfgame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_lists_every_subcommand_and_exits_zero() {
    let out = prfgame(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in [
        "simulate",
        "sweep",
        "concavity",
        "equilibrium",
        "counterexample",
        "regret-audit",
        "softmax-trace",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    let sub = String::from_utf8(prfgame(&["simulate", "--help"]).stdout).unwrap();
    assert!(sub.contains("[default: 0.5]") && sub.contains("[default: 200000]"));
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = prfgame(&["simulate", "--activation", "root", "--seed", "7", "--out", &out_arg(dir)]);
        assert_eq!(out.status.code(), Some(0));
        assert!(String::from_utf8(out.stdout).unwrap().starts_with("simulate: converged=true"));
    }
    for file in ["trajectory.csv", "report.json", "game.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file} differs");
    }
    let settings = |dir: &Path| {
        let mut v = read_json(&dir.join("config.json"));
        v.as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(settings(&a), settings(&b));
    assert_eq!(read_json(&a.join("report.json"))["converged"], Value::Bool(true));
}

#[test]
fn non_convergence_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prfgame(&["simulate", "--max-rounds", "20", "--out", &out_arg(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(read_json(&tmp.path().join("report.json"))["converged"], Value::Bool(false));
}

#[test]
fn negative_lambda_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prfgame(&["simulate", "--lambda", "-1", "--out", &out_arg(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("lambda"));
}

#[test]
fn unknown_arguments_exit_one() {
    assert_eq!(prfgame(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(prfgame(&["nothing"]).status.code(), Some(1));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"lambda": 2.0, "n": 4, "seed": 3}"#).unwrap();
    let out_dir = tmp.path().join("run");
    let out = prfgame(&[
        "simulate",
        "--config",
        &out_arg(&cfg),
        "--n",
        "2",
        "--out",
        &out_arg(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let used = read_json(&out_dir.join("config.json"));
    assert_eq!(used["lambda"], 2.0);
    assert_eq!(used["n"], 2);
    assert_eq!(used["seed"], 3);
    assert_eq!(used["k"], 3);
    let game = read_json(&out_dir.join("game.json"));
    assert_eq!(game["lambdas"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_config_value_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"epsilon": "small"}"#).unwrap();
    let out = prfgame(&["simulate", "--config", &out_arg(&cfg), "--out", &out_arg(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("epsilon"));
}

#[test]
fn unwritable_output_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = prfgame(&["simulate", "--out", &out_arg(&blocker.join("sub"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exponential_concavity_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prfgame(&[
        "concavity",
        "--activation",
        "exponential",
        "--param",
        "10",
        "--samples",
        "500",
        "--out",
        &out_arg(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&tmp.path().join("verdict.json"));
    assert_eq!(v["activation_concave"], Value::Bool(false));
}

#[test]
fn equilibrium_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prfgame(&[
        "equilibrium",
        "--n",
        "2",
        "--c1",
        "0.25",
        "--lambda",
        "0.5",
        "--activation",
        "linear",
        "--param",
        "2",
        "--out",
        &out_arg(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&tmp.path().join("equilibrium.json"));
    let inst = prfgame::analysis::SymmetricInstance::new(
        2,
        0.25,
        0.5,
        prfgame::Activation::linear(2.0).unwrap(),
    )
    .unwrap();
    let eq = prfgame::analysis::symmetric_equilibrium(&inst, 1e-10).unwrap();
    assert_eq!(v["equilibrium"]["alpha"].as_f64().unwrap(), eq.alpha);
}

#[test]
fn counterexample_for_steep_exponential() {
    let tmp = tempfile::tempdir().unwrap();
    let out = prfgame(&[
        "counterexample",
        "--activation",
        "exponential",
        "--param",
        "10",
        "--ahat",
        "0.5",
        "--out",
        &out_arg(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&tmp.path().join("counterexample.json"));
    assert_eq!(v["n"], 2);
    // C = 1, g = e^-5: (g''(1+g) - 2g'^2)/(1+g)^3.
    let g = (-5.0f64).exp();
    let expected = (100.0 * g * (1.0 + g) - 200.0 * g * g) / (1.0 + g).powi(3);
    assert!((v["second_derivative"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert!((expected - 0.656).abs() < 5e-4);
}

#[test]
fn sweep_writes_table_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        prfgame(&[
            "sweep",
            "--parameter",
            "lambda",
            "--grid",
            "0.5,1",
            "--activations",
            "linear,log",
            "--instances",
            "4",
            "--bootstrap",
            "50",
            "--jobs",
            "1",
            "--out",
            &out_arg(dir),
        ])
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&a).status.code(), Some(0));
    assert_eq!(run(&b).status.code(), Some(0));
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("swept_parameter,value,activation,metric,mean,ci_low,ci_high"));
    // 2 values x 2 activations x 3 metrics.
    assert_eq!(csv.lines().count(), 1 + 12);
    assert_eq!(csv, fs::read_to_string(b.join("sweep.csv")).unwrap());
    assert!(a.join("manifest.json").exists());
}

#[test]
fn regret_audit_and_softmax_trace_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let ra = tmp.path().join("ra");
    let out = prfgame(&[
        "regret-audit",
        "--grid",
        "0.5",
        "--activations",
        "root",
        "--instances",
        "3",
        "--bootstrap",
        "20",
        "--rounds",
        "30",
        "--out",
        &out_arg(&ra),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(fs::read_to_string(ra.join("regret.csv")).unwrap().lines().count() > 1);

    let st = tmp.path().join("st");
    let out = prfgame(&["softmax-trace", "--horizon", "100", "--checkpoints", "4", "--out", &out_arg(&st)]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(st.join("softmax.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    let trace = read_json(&st.join("softmax.json"));
    assert_eq!(trace["softmax"]["checkpoints"].as_array().unwrap().last().unwrap(), 100);
}
