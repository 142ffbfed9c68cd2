use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ibmdp::dataset::{toy_task, Dataset, LabelColumn};
use ibmdp::trees::DecisionTree;
use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ibmdp"));
    cmd.env_remove("IBMDP_OUT");
    cmd
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn ok(output: &Output) {
    assert!(
        output.status.success(),
        "status {:?}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn solve_toy_with_value_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&[
        "solve",
        "--toy",
        "0",
        "--zeta",
        "0.5",
        "--gamma",
        "0.99",
        "-p",
        "1",
        "-M",
        "2",
        "--solver",
        "vi",
        "--out",
        out.to_str().unwrap(),
    ]);
    ok(&o);
    for file in ["report.csv", "tree.dot", "tree.json", "tree.txt", "summary.json"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let s = summary(&out);
    assert_eq!(s["accuracy"], 1.0);
    assert_eq!(s["depth"], 2);
    assert_eq!(s["nodes"], 7);
    assert!((s["J"].as_f64().unwrap() - 66.4994444631).abs() < 1e-8);
    let tree = DecisionTree::from_json(&fs::read_to_string(out.join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree.accuracy(&toy_task(0).unwrap()).unwrap(), 1.0);
    assert!(fs::read_to_string(out.join("tree.dot")).unwrap().starts_with("digraph"));
}

#[test]
fn solve_iris_with_erpi_and_reload_the_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let iris = data("iris.csv");
    let o = run(&[
        "solve",
        "--data",
        iris.to_str().unwrap(),
        "--label",
        "species",
        "--zeta",
        "0.8",
        "--solver",
        "erpi",
        "-K",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    ok(&o);
    let s = summary(out);
    let accuracy = s["accuracy"].as_f64().unwrap();
    assert!(accuracy >= 0.90);
    assert!(s["bound_at_k"].as_f64().unwrap() > 0.0);
    let dataset = Dataset::load(&iris, &LabelColumn::parse("species")).unwrap();
    let tree = DecisionTree::from_json(&fs::read_to_string(out.join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree.accuracy(&dataset).unwrap(), accuracy);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("iteration,J,best_J,bound,update_sup_norm,normalized_J\n"));
    assert_eq!(report.lines().count(), 501);
}

#[test]
fn bound_optimal_step_size_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "solve",
        "--toy",
        "2",
        "--solver",
        "erpi",
        "-K",
        "50",
        "--alpha",
        "theorem1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    ok(&o);
    let report = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    let first: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "1");
    assert!(!first[3].is_empty());
}

#[test]
fn identical_runs_write_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |dir: &Path| {
        vec![
            "sweep".to_string(),
            "--toy".into(),
            "4".into(),
            "--zeta-grid".into(),
            "-1:0.9:0.3".into(),
            "--solver".into(),
            "erpi".into(),
            "-K".into(),
            "30".into(),
            "--noise-sigma".into(),
            "1.0".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            dir.to_str().unwrap().to_string(),
        ]
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&bin().args(args(&a)).output().unwrap());
    ok(&bin().args(args(&b)).output().unwrap());
    for file in [
        "tradeoff.csv",
        "summary.json",
        "trees/zeta_-1.json",
        "trees/zeta_0.8.txt",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn sweep_table_is_sorted_and_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let wine = data("wine.csv");
    let o = run(&[
        "sweep",
        "--data",
        wine.to_str().unwrap(),
        "--label",
        "class",
        "--zeta-grid",
        "-1:0.8:0.2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    ok(&o);
    let table = fs::read_to_string(tmp.path().join("tradeoff.csv")).unwrap();
    let rows: Vec<Vec<String>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    let zetas: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    let js: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(zetas.windows(2).all(|w| w[0] < w[1]));
    assert!(js.windows(2).all(|w| w[0] <= w[1] + 1e-9));
    assert_eq!(summary(tmp.path())["monotone"], true);
    let tree = |z: &str| {
        DecisionTree::from_json(&fs::read_to_string(tmp.path().join(format!("trees/zeta_{z}.json"))).unwrap()).unwrap()
    };
    let (a, b, c) = (tree("-1"), tree("-0.6"), tree("0.8"));
    assert!(a != b && b != c && a != c);
    let root_feature = |t: &DecisionTree| match t.node(t.root()) {
        ibmdp::trees::Node::Split { feature, .. } => Some(feature),
        ibmdp::trees::Node::Leaf { .. } => None,
    };
    assert_ne!(root_feature(&b), root_feature(&c));
}

#[test]
fn toy_sweep_switches_from_stump_to_depth_two() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(&[
        "sweep",
        "--toy",
        "0",
        "--zeta-grid",
        "-1:0.9:0.1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    let table = fs::read_to_string(tmp.path().join("tradeoff.csv")).unwrap();
    let depths: Vec<usize> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(depths[0], 0);
    assert_eq!(*depths.last().unwrap(), 2);
    let switch = depths.iter().position(|&d| d == 2).unwrap();
    assert!(depths[..switch].iter().all(|&d| d == 0));
    assert!(depths[switch..].iter().all(|&d| d == 2));
}

#[test]
fn singleton_sweep_matches_solve() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&run(&[
        "sweep",
        "--toy",
        "5",
        "--zeta-grid",
        "0.3:0.3:1",
        "--out",
        a.to_str().unwrap(),
    ]));
    ok(&run(&[
        "solve",
        "--toy",
        "5",
        "--zeta",
        "0.3",
        "--out",
        b.to_str().unwrap(),
    ]));
    let sweep_j = summary(&a)["solves"][0]["J"].as_f64().unwrap();
    assert_eq!(sweep_j, summary(&b)["J"].as_f64().unwrap());
}

#[test]
fn toy_suite_value_iteration_matches_brute_force() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(&[
        "toy-suite",
        "--solver",
        "vi",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    let s = summary(tmp.path());
    let tasks = s["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 7);
    for t in tasks {
        assert_eq!(t["accuracy"], 1.0);
        assert!((t["final_j"].as_f64().unwrap() - t["brute_force_j"].as_f64().unwrap()).abs() <= 1e-8);
    }
}

#[test]
fn toy_suite_erpi_reaches_the_optimum() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(&[
        "toy-suite",
        "--solver",
        "erpi",
        "-K",
        "500",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    let s = summary(tmp.path());
    for t in s["tasks"].as_array().unwrap() {
        assert!(t["j_star"].as_f64().unwrap() - t["best_j"].as_f64().unwrap() <= 1e-3);
        assert!(t["max_bound_violation"].as_f64().unwrap() <= 0.0);
    }
    let curve = fs::read_to_string(tmp.path().join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 501);
}

#[test]
fn noisy_toy_suite_favours_erpi() {
    let tmp = tempfile::tempdir().unwrap();
    let mean_final = |solver: &str| {
        let dir = tmp.path().join(solver);
        ok(&run(&[
            "toy-suite",
            "--solver",
            solver,
            "-K",
            "200",
            "--noise-sigma",
            "5",
            "--seeds",
            "10",
            "--out",
            dir.to_str().unwrap(),
        ]));
        let s = summary(&dir);
        assert_eq!(s["seeds"], 10);
        let tasks = s["tasks"].as_array().unwrap();
        tasks.iter().map(|t| t["final_j"].as_f64().unwrap()).sum::<f64>() / tasks.len() as f64
    };
    assert!(mean_final("erpi") >= mean_final("pg"));
}

#[test]
fn greedy_solver_reports_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let iris = data("iris.csv");
    ok(&run(&[
        "solve",
        "--data",
        iris.to_str().unwrap(),
        "--label",
        "species",
        "--solver",
        "greedy",
        "-M",
        "2",
        "--threshold-mode",
        "data_values",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    let s = summary(tmp.path());
    assert_eq!(s["accuracy"], 0.96);
    assert_eq!(s["J"], Value::Null);
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "toy = 1\nsolver = \"erpi\"\nK = 20\nzeta = 0.25\nalpha = 0.5\n").unwrap();
    let out = tmp.path().join("o");
    ok(&run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--zeta",
        "0.4",
        "--out",
        out.to_str().unwrap(),
    ]));
    let s = summary(&out);
    assert_eq!(s["solver"], "erpi");
    assert_eq!(s["iterations"], 20);
    assert_eq!(s["zeta"], 0.4);

    fs::write(&cfg, "toy = 1\nbogus = 3\n").unwrap();
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("from-env");
    let o = bin()
        .args(["solve", "--toy", "3"])
        .env("IBMDP_OUT", &out)
        .output()
        .unwrap();
    ok(&o);
    assert!(out.join("summary.json").exists());
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let code = |args: &[&str]| run(args).status.code();
    assert_eq!(code(&["solve", "--toy", "0", "--zeta", "1.5", "--out", out]), Some(2));
    assert_eq!(
        code(&["solve", "--toy", "0", "--solver", "magic", "--out", out]),
        Some(2)
    );
    assert_eq!(
        code(&["solve", "--toy", "0", "--alpha", "-1", "--solver", "erpi", "--out", out]),
        Some(2)
    );
    assert_eq!(code(&["solve", "--out", out]), Some(2));
    assert_eq!(code(&["solve", "--toy", "0", "--gamma", "1", "--out", out]), Some(2));
    assert_eq!(code(&["solve", "--data", "/does/not/exist.csv", "--out", out]), Some(4));
    assert_eq!(code(&["solve", "--toy", "0", "--unknown-flag"]), Some(2));
    let o = run(&["solve", "--toy", "0", "--zeta", "2", "--out", out]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("zeta"));
}

#[test]
fn dataset_export_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let wine = data("wine.csv");
    ok(&run(&[
        "dataset",
        "--data",
        wine.to_str().unwrap(),
        "--label",
        "class",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    let original = Dataset::load(&wine, &LabelColumn::parse("class")).unwrap();
    let exported = Dataset::load(tmp.path().join("dataset.csv"), &LabelColumn::parse("label")).unwrap();
    let a: Vec<u64> = original.rows().flatten().map(|x| x.to_bits()).collect();
    let b: Vec<u64> = exported.rows().flatten().map(|x| x.to_bits()).collect();
    assert_eq!(a, b);
    assert_eq!(original.labels(), exported.labels());
    let norm: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("normalization.json")).unwrap()).unwrap();
    assert!(norm["alcohol"]["min"].as_f64().unwrap() < norm["alcohol"]["max"].as_f64().unwrap());
}

#[test]
fn dump_writes_the_observation_mdp() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(&["dump", "--toy", "0", "--out", tmp.path().to_str().unwrap()]));
    let obs: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("observations.json")).unwrap()).unwrap();
    assert_eq!(obs.as_array().unwrap().len(), 17);
    assert_eq!(obs[0]["count"], 16);
    let mdp: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("mdp.json")).unwrap()).unwrap();
    assert!(mdp.is_object());
}
