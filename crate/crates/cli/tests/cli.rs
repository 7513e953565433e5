use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &[&str] = &["--n", "60", "--steps", "6"];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decay-cluster"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn generate_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &with(&["generate", "--seed", "1,2", "--out", "a"], SMALL));
    ok(d, &with(&["generate", "--seed", "1", "--out", "b"], SMALL));
    assert_eq!(read(d.join("a/seed-1/edges.txt")), read(d.join("b/seed-1/edges.txt")));
    assert_eq!(read(d.join("a/seed-1/labels.txt")), read(d.join("b/seed-1/labels.txt")));
    assert_ne!(read(d.join("a/seed-1/edges.txt")), read(d.join("a/seed-2/edges.txt")));
}

#[test]
fn defaults_are_the_reference_model() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["generate", "--seed", "3"]);
    let cfg: toml::Table = read(tmp.path().join("results/config.toml")).parse().unwrap();
    let m = &cfg["model"];
    assert_eq!(m["n"].as_integer(), Some(200));
    assert_eq!(m["k"].as_integer(), Some(2));
    assert_eq!(m["steps"].as_integer(), Some(50));
    assert_eq!(m["alpha"].as_float(), Some(0.02));
    let eps: Vec<f64> = m["epsilon"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_float().unwrap())
        .collect();
    assert_eq!(eps, [0.05, 0.1]);
    assert_eq!(cfg["version"].as_integer(), Some(1));
}

#[test]
fn cluster_output_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    for out in ["a", "b"] {
        ok(d, &with(&["cluster", "--seed", "4", "--out", out], SMALL));
    }
    for ext in ["json", "csv"] {
        let name = format!("seed-4/spectral-optimal-matrix.result.{ext}");
        assert_eq!(read(d.join("a").join(&name)), read(d.join("b").join(&name)));
    }
    let r = json(d.join("a/seed-4/spectral-optimal-matrix.result.json"));
    assert_eq!(r["decay_source"], "ORACLE");
    assert_eq!(r["report"]["per_step"].as_array().unwrap().len(), 6);
    assert_eq!(r["report"]["accuracy_mode"], "matched");
    assert_eq!(
        read(d.join("a/seed-4/spectral-optimal-matrix.result.csv"))
            .lines()
            .count(),
        7
    );
}

#[test]
fn estimated_decay_is_labelled() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &with(&["cluster", "--seed", "1", "--estimated"], SMALL));
    let r = json(tmp.path().join("results/seed-1/spectral-optimal-matrix.result.json"));
    assert_eq!(r["decay_source"], "ESTIMATED");
}

#[test]
fn unit_scalar_decay_equals_a_unit_matrix() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("ones.txt"), "1 1\n1 1\n").unwrap();
    ok(
        d,
        &with(&["cluster", "--seed", "2", "--decay", "scalar=1", "--out", "s"], SMALL),
    );
    ok(
        d,
        &with(
            &["cluster", "--seed", "2", "--decay", "matrix=ones.txt", "--out", "m"],
            SMALL,
        ),
    );
    let s = json(d.join("s/seed-2/spectral-scalar-1.result.json"));
    let m = json(d.join("m/seed-2/spectral-matrix.result.json"));
    assert_eq!(s["report"]["per_step"], m["report"]["per_step"]);
}

#[test]
fn written_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &with(
            &["cluster", "--seed", "5", "--decay", "scalar=0.3", "--out", "a"],
            SMALL,
        ),
    );
    let cfg = read(d.join("a/config.toml")).replace("out = \"a\"", "out = \"b\"");
    std::fs::write(d.join("b.toml"), cfg).unwrap();
    ok(d, &["cluster", "--config", "b.toml"]);
    let name = "seed-5/spectral-scalar-0.3.result.json";
    assert_eq!(read(d.join("a").join(name)), read(d.join("b").join(name)));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("c.toml"),
        "version = 1\nmethod = \"static-spectral\"\nseeds = [1]\nout = \"from-file\"\n\
         [decay]\nkind = \"none\"\n[model]\nn = 40\nsteps = 4\n",
    )
    .unwrap();
    ok(
        d,
        &["cluster", "--config", "c.toml", "--seed", "2", "--out", "from-flag"],
    );
    assert!(d.join("from-flag/seed-2/spectral-static.result.json").exists());
    assert!(!d.join("from-file").exists());
    let cfg: toml::Table = read(d.join("from-flag/config.toml")).parse().unwrap();
    assert_eq!(cfg["model"]["n"].as_integer(), Some(40));
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(code(d, &["cluster", "--jobs", "many"]), 1);
    assert_eq!(code(d, &["cluster", "--decay", "scalar=1.5"]), 1);
    assert_eq!(
        code(d, &["cluster", "--method", "static-spectral", "--decay", "optimal"]),
        1
    );
    assert_eq!(code(d, &["train", "--method", "decayed-spectral"]), 1);
    std::fs::write(d.join("v2.toml"), "version = 2\n").unwrap();
    assert_eq!(code(d, &["cluster", "--config", "v2.toml"]), 1);
    std::fs::write(d.join("typo.toml"), "version = 1\nmethdo = \"rnngcn\"\n").unwrap();
    assert_eq!(code(d, &["cluster", "--config", "typo.toml"]), 1);
    assert_eq!(code(d, &["cluster", "--edges", "missing.txt"]), 2);
    std::fs::write(d.join("bad.txt"), "not a graph\n").unwrap();
    assert_eq!(code(d, &["cluster", "--edges", "bad.txt"]), 2);
    let diverge = with(
        &[
            "train",
            "--method",
            "rnngcn",
            "--learning-rate",
            "1e300",
            "--iterations",
            "5",
        ],
        &["--n", "40", "--steps", "3"],
    );
    assert_eq!(code(d, &diverge), 3);
}

#[test]
fn loaded_data_matches_generated_data() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &with(&["generate", "--seed", "6", "--out", "g"], SMALL));
    ok(
        d,
        &with(
            &["cluster", "--method", "static-spectral", "--seed", "6", "--out", "a"],
            SMALL,
        ),
    );
    let args = [
        "cluster",
        "--method",
        "static-spectral",
        "--seed",
        "6",
        "--out",
        "b",
        "--edges",
        "g/seed-6/edges.txt",
        "--labels",
        "g/seed-6/labels.txt",
    ];
    ok(d, &args);
    let name = "seed-6/spectral-static.result.json";
    assert_eq!(read(d.join("a").join(name)), read(d.join("b").join(name)));
}

#[test]
fn grid_search_parallel_equals_serial() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let base = with(&["grid-search", "--seed", "1,2", "--values", "0.2,0.5,0.8"], SMALL);
    ok(d, &with(&base, &["--jobs", "1", "--out", "serial"]));
    ok(d, &with(&base, &["--jobs", "4", "--out", "parallel"]));
    for f in ["grid.json", "grid.csv", "grid.svg"] {
        assert_eq!(read(d.join("serial").join(f)), read(d.join("parallel").join(f)), "{f}");
    }
    assert_eq!(read(d.join("serial/grid.csv")).lines().count(), 10);
}

#[test]
fn unit_grid_cell_equals_per_snapshot_clustering() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &with(&["grid-search", "--seed", "3", "--values", "1", "--out", "g"], SMALL),
    );
    ok(
        d,
        &with(&["cluster", "--seed", "3", "--decay", "scalar=1", "--out", "c"], SMALL),
    );
    let grid = json(d.join("g/grid.json"));
    let cells = grid["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 1);
    let cluster = json(d.join("c/seed-3/spectral-scalar-1.result.json"));
    let a = cells[0]["accuracy"].as_f64().unwrap();
    let b = cluster["report"]["accuracy"].as_f64().unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn sweep_with_one_rate_gives_single_points() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &with(
            &["sweep-lambda", "--seed", "1", "--lambdas", "1", "--n-values", "60"],
            &["--steps", "6"],
        ),
    );
    let curves = json(d.join("results/sweep.json"));
    let curves = curves.as_array().unwrap();
    assert_eq!(curves.len(), 1);
    assert_eq!(curves[0]["points"].as_array().unwrap().len(), 1);
    assert!(d.join("results/sweep-norm.svg").exists());
    assert!(d.join("results/sweep-accuracy.svg").exists());
    assert_eq!(read(d.join("results/sweep.csv")).lines().count(), 2);
}

const TRAIN: &[&str] = &[
    "--n",
    "40",
    "--steps",
    "4",
    "--iterations",
    "30",
    "--checkpoint-every",
    "10",
];

#[test]
fn train_resume_reproduces_an_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = with(&["train", "--method", "trnngcn", "--seed", "7"], TRAIN);
    ok(d, &with(&args, &["--out", "full"]));
    ok(d, &with(&args, &["--out", "cut"]));
    let progress = d.join("cut/seed-7/trnngcn.progress.json");
    let mut p = json(&progress);
    p["done"].as_array_mut().unwrap().truncate(1);
    p["validation"].as_array_mut().unwrap().truncate(1);
    std::fs::write(&progress, serde_json::to_string(&p).unwrap()).unwrap();
    std::fs::remove_file(d.join("cut/seed-7/trnngcn.result.json")).unwrap();
    ok(d, &with(&args, &["--out", "cut", "--resume"]));
    for f in ["trnngcn.result.json", "trnngcn.result.csv", "trnngcn.checkpoint.json"] {
        let path = format!("seed-7/{f}");
        assert_eq!(read(d.join("full").join(&path)), read(d.join("cut").join(&path)), "{f}");
    }
}

#[test]
fn resume_rejects_a_different_configuration() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let args = with(&["train", "--method", "rnngcn", "--seed", "1"], TRAIN);
    ok(d, &args);
    let changed = with(&args, &["--learning-rate", "0.1", "--resume"]);
    assert_eq!(code(d, &changed), 1);
}

#[test]
fn train_reports_learned_decay_and_split_accuracy() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &with(&["train", "--method", "trnngcn", "--seed", "2"], TRAIN));
    let r = json(d.join("results/seed-2/trnngcn.result.json"));
    assert_eq!(r["decay_source"], "LEARNED");
    let rows = r["decay"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(r["report"]["accuracy_mode"], "split");
    assert_eq!(r["report"]["per_step"].as_array().unwrap().len(), 4);
    let notes = r["notes"].to_string();
    assert!(notes.contains("validation"), "{notes}");
}

#[test]
fn report_standard_errors_follow_the_direct_formula() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &with(&["cluster", "--method", "static-spectral", "--seed", "1..4"], SMALL),
    );
    ok(d, &["report", "--out", "rep", "results"]);
    let accs: Vec<f64> = (1..4)
        .map(|s| {
            json(d.join(format!("results/seed-{s}/spectral-static.result.json")))["report"]["accuracy"]
                .as_f64()
                .unwrap()
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / 3.0;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 2.0;
    let se = (var / 3.0).sqrt();
    let csv = read(d.join("rep/summary.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0], "spectral-static");
    assert_eq!(fields[2], "3");
    let (m, s): (f64, f64) = (fields[3].parse().unwrap(), fields[4].parse().unwrap());
    assert!(
        (m - mean).abs() < 1e-12 && (s - se).abs() < 1e-12,
        "{m} {s} vs {mean} {se}"
    );
    for f in [
        "summary.json",
        "accuracy-over-time.csv",
        "accuracy-over-time.svg",
        "comparison.svg",
    ] {
        assert!(d.join("rep").join(f).exists(), "{f}");
    }
}

#[test]
fn report_rejects_mixed_schema_versions() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &with(&["cluster", "--method", "static-spectral", "--seed", "1,2"], SMALL),
    );
    let path = d.join("results/seed-2/spectral-static.result.json");
    let mut r = json(&path);
    r["schema_version"] = 99.into();
    std::fs::write(&path, serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(code(d, &["report", "--out", "rep", "results"]), 2);
}

#[test]
fn report_without_results_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    assert_eq!(code(tmp.path(), &["report", "empty"]), 1);
}
