use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_lrd-deconv");

const BASE: &str = r#"
name = "small"
seed = 11

[design]
n = 4096
theta = 0.5
noise_kind = "farima"
noise_scale = 0.05
points = { rule = "interval", a = 0.0, b = 1.0 }
memory = { rule = "linear", a1 = 0.2, a2 = 0.1 }

[kernel]
kind = "box_car"

[truth]
name = "bump_mix"
width = 0.1
amplitude = 1.0
band = 20

[estimator]
mu = 1.0
nu = 1.0
level_override = [2, 5]

[bench]
n_grid = [4096, 16384, 65536, 262144]
reps = 30
ball = { s = 1.5, p = 2.0, q = 2.0, radius = 10.0 }

[eigencheck]
sizes = [32, 64, 128]
models = [{ kind = "farima", d = 0.25, scale = 1.0 }, { kind = "fgn", d = 0.1, scale = 1.0 }]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("LRD_DECONV_THREADS")
        .output()
        .unwrap()
}

fn ok(output: &Output) {
    assert!(
        output.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn memory_above_half_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BASE.replace(r#"{ rule = "linear", a1 = 0.2, a2 = 0.1 }"#, r#"{ rule = "constant", d = 0.6 }"#);
    let cfg = write_config(tmp.path(), "bad.toml", &text);
    let out = run(&cfg, &tmp.path().join("out"), &["simulate"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("1/2"), "{stderr}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn help_exits_zero_and_missing_config_exits_one() {
    let help = Command::new(BIN).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    let bare = Command::new(BIN).arg("simulate").output().unwrap();
    assert_eq!(bare.status.code(), Some(1));
    let unknown = Command::new(BIN).arg("frobnicate").output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", BASE);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&run(&cfg, &a, &["--threads", "1", "simulate"]));
    ok(&run(&cfg, &a, &["--threads", "1", "estimate"]));
    ok(&run(&cfg, &b, &["--threads", "4", "simulate"]));
    ok(&run(&cfg, &b, &["--threads", "4", "estimate"]));
    for f in ["y.csv", "truth.csv", "design.csv", "fhat.dat", "coefficients.csv", "decisions.csv", "diagnostics.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("estimate.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["library_version"], lrd_deconv::VERSION);
    let hash = manifest["config_hash"].as_str().unwrap();
    assert_eq!(first_line(&a.join("fhat.dat")), format!("# config_hash={hash}"));
}

#[test]
fn seed_override_changes_data_and_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", BASE);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&run(&cfg, &a, &["simulate"]));
    ok(&run(&cfg, &b, &["--seed", "12", "simulate"]));
    assert_ne!(fs::read(a.join("y.csv")).unwrap(), fs::read(b.join("y.csv")).unwrap());
    assert_ne!(first_line(&a.join("y.csv")), first_line(&b.join("y.csv")));
}

#[test]
fn manifest_hash_tracks_config_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let variants = [
        BASE.to_string(),
        BASE.replace("noise_scale = 0.05", "noise_scale = 0.06"),
        BASE.replace("width = 0.1", "width = 0.12"),
        BASE.replace("mu = 1.0", "mu = 1.5"),
        BASE.replace("reps = 30", "reps = 31"),
    ];
    let mut hashes = Vec::new();
    for (i, text) in variants.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("v{i}.toml"), text);
        let out = tmp.path().join(format!("o{i}"));
        ok(&run(&cfg, &out, &["simulate"]));
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("simulate.manifest.json")).unwrap()).unwrap();
        hashes.push(manifest["config_hash"].as_str().unwrap().to_string());
    }
    let mut unique = hashes.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), hashes.len(), "{hashes:?}");
}

#[test]
fn estimate_refuses_inputs_from_another_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", BASE);
    let other = write_config(tmp.path(), "other.toml", &BASE.replace("mu = 1.0", "mu = 2.0"));
    let data = tmp.path().join("data");
    ok(&run(&cfg, &data, &["simulate"]));
    let out = run(&other, &tmp.path().join("est"), &["estimate", "--input", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config hash"));

    let mixed = tmp.path().join("mixed");
    ok(&run(&other, &mixed, &["simulate"]));
    fs::copy(data.join("truth.csv"), mixed.join("truth.csv")).unwrap();
    let out = run(&other, &mixed, &["estimate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", BASE);
    let out = run(&cfg, &tmp.path().join("est"), &["estimate", "--input", "/nonexistent/dir"]);
    assert_eq!(out.status.code(), Some(3));
    let missing_cfg = run(&tmp.path().join("nope.toml"), &tmp.path().join("x"), &["simulate"]);
    assert_eq!(missing_cfg.status.code(), Some(3));
}

#[test]
fn dry_run_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", BASE);
    let out_dir = tmp.path().join("out");
    for cmd in ["simulate", "bench", "eigencheck", "characterize"] {
        let out = run(&cfg, &out_dir, &["--dry-run", cmd]);
        ok(&out);
        assert!(!out_dir.exists(), "{cmd} wrote output in dry-run mode");
    }
}

#[test]
fn diagnostics_and_bench_write_stamped_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", BASE);
    let out = tmp.path().join("out");
    ok(&run(&cfg, &out, &["eigencheck"]));
    ok(&run(&cfg, &out, &["characterize"]));
    ok(&run(&cfg, &out, &["bench"]));
    let eigen = fs::read_to_string(out.join("eigen.csv")).unwrap();
    assert_eq!(eigen.lines().count(), 2 + 2 * 3);
    let hash = first_line(&out.join("eigen.csv"));
    for f in ["slopes.csv", "characterize.csv", "tau1.dat", "risk.csv", "risk.dat", "summary.txt"] {
        assert_eq!(first_line(&out.join(f)), hash, "{f}");
    }
    let risk = fs::read_to_string(out.join("risk.csv")).unwrap();
    assert_eq!(risk.lines().nth(1).unwrap(), "n,M,N,n_star,risk_mean,risk_se,reps");
    assert_eq!(risk.lines().count(), 2 + 4);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["report"]["fit"]["slope"].is_number());
    for cmd in ["eigencheck", "characterize", "bench"] {
        assert!(out.join(format!("{cmd}.manifest.json")).exists());
    }
}
