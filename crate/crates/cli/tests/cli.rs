use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_MAX: &str = r#"
model = "max"
seed = 11
n = 2000

[instance]
d = 3
k = 2
c = 0.5
big_c = 1.5

[warm_start]
radius = 0.2

[psgd]
eps = 0.2
eta = 0.4
gamma_divisor = 5.0
t_cap = 2000

[boost]
reps = 3
radius = 1.0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_selfsel"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("max.toml", SMALL_MAX.to_string()),
        ("sp.toml", SMALL_MAX.replace("\"max\"", "\"second-price\"").replace("k = 2", "k = 3")),
    ] {
        let cfg = write_config(tmp.path(), name, &text);
        let a = tmp.path().join(format!("{name}.a"));
        let b = tmp.path().join(format!("{name}.b"));
        assert!(run(&["simulate"], &cfg, &a).status.success());
        assert!(run(&["simulate"], &cfg, &b).status.success());
        let da = fs::read(a.join("dataset.ndjson")).unwrap();
        assert_eq!(da, fs::read(b.join("dataset.ndjson")).unwrap());

        let text = String::from_utf8(da).unwrap();
        let mut lines = text.lines();
        let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        let h = &header["header"];
        assert_eq!(h["d"], 3);
        assert_eq!(h["k"], if name == "max.toml" { 2 } else { 3 });
        assert_eq!(h["n"], 2000);
        assert_eq!(h["seed"], 11);
        assert_eq!(h["config_hash"].as_str().unwrap().len(), 64);
        assert_eq!(lines.count(), 2000);
    }
}

#[test]
fn coarse_simulate_writes_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    assert!(run(&["simulate"], &configs().join("coarse_diagnose.toml"), &out).status.success());
    let text = fs::read_to_string(out.join("dataset.ndjson")).unwrap();
    assert_eq!(text.lines().count(), 1001);
    assert!(text.lines().nth(1).unwrap().starts_with("{\"set\":"));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "max.toml", SMALL_MAX);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&["simulate"], &cfg, &a).status.success());
    let out = bin()
        .args(["simulate", "--seed", "12", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(out.status.success());
    let da = fs::read(a.join("dataset.ndjson")).unwrap();
    let db = fs::read(b.join("dataset.ndjson")).unwrap();
    assert_ne!(da, db);
    assert!(String::from_utf8(db).unwrap().contains("\"seed\":12"));
}

#[test]
fn estimate_is_deterministic_and_echoes_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "max.toml", SMALL_MAX);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = run(&["estimate", "--trace"], &cfg, out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = fs::read(a.join("result.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("result.json")).unwrap());
    let ta = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert_eq!(ta, fs::read_to_string(b.join("trace.csv")).unwrap());
    assert!(ta.starts_with("# version="));
    assert_eq!(ta.lines().nth(1).unwrap(), "stage,step,gamma,slack,grad_norm");
    assert!(ta.lines().count() > 2);

    let v: Value = serde_json::from_slice(&ra).unwrap();
    for key in [
        "version",
        "config_hash",
        "seed",
        "model",
        "n",
        "d",
        "k",
        "estimate",
        "w_star",
        "warm_start",
        "error",
        "permutation",
        "g",
        "eps0",
        "chosen",
        "support",
        "reps",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["seed"], 11);
    assert_eq!(v["estimate"].as_array().unwrap().len(), 2);
    assert_eq!(v["reps"].as_array().unwrap().len(), 3);
    assert!(v["error"].as_f64().unwrap().is_finite());
}

#[test]
fn estimate_reads_a_simulated_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "max.toml", SMALL_MAX);
    let sim = tmp.path().join("sim");
    assert!(run(&["simulate"], &cfg, &sim).status.success());
    let with_data = SMALL_MAX.replace("n = 2000", "n = 2000\ndata = \"sim/dataset.ndjson\"");
    let cfg2 = write_config(tmp.path(), "max_data.toml", &with_data);
    let a = tmp.path().join("a");
    let o = run(&["estimate"], &cfg2, &a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&fs::read(a.join("result.json")).unwrap()).unwrap();
    assert_eq!(v["n"], 2000);
}

#[test]
fn shipped_diagnose_configs_pass() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["max_diagnose", "second_price_diagnose", "coarse_diagnose"] {
        let out = tmp.path().join(name);
        let o = run(&["diagnose"], &configs().join(format!("{name}.toml")), &out);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stdout));
        let v: Value = serde_json::from_slice(&fs::read(out.join("diagnostics.json")).unwrap()).unwrap();
        assert!(v["reports"].as_array().unwrap().iter().all(|r| r["pass"] == true));
    }
}

#[test]
fn failing_check_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("max_diagnose.toml"))
        .unwrap()
        .replace("[diagnose]", "[diagnose]\nhessian_floor = -100.0");
    let cfg = write_config(tmp.path(), "bad.toml", &text);
    let o = run(&["diagnose"], &cfg, &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        SMALL_MAX.replace("seed = 11\n", ""),
        SMALL_MAX.replace("n = 2000", "n = 2000\nbogus = 1"),
        SMALL_MAX.replace("n = 2000", "n = 2000\ndata = \"missing.ndjson\""),
        SMALL_MAX.replace("\"max\"", "\"second-price\"").replace("k = 2", "k = 1"),
        // column norm 0.1 violates the lower bound c = 0.5
        SMALL_MAX.replace("big_c = 1.5", "big_c = 1.5\nw_star = [[0.1, 0.0, 0.0], [0.0, 1.0, 0.0]]"),
        SMALL_MAX.replace("eps = 0.2", "eps = -1.0"),
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("c{i}.toml"), text);
        let o = run(&["estimate"], &cfg, &tmp.path().join(format!("o{i}")));
        assert_eq!(o.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["estimate"], &tmp.path().join("absent.toml"), &tmp.path().join("x"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_reports_throughput() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "max.toml", SMALL_MAX);
    let out = tmp.path().join("b");
    let o = bin()
        .args(["bench", "--steps", "1000", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&fs::read(out.join("bench.json")).unwrap()).unwrap();
    assert!(v["steps_per_second"].as_f64().unwrap() > 0.0);
}
