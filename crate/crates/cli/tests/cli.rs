use std::fs;
use std::path::{Path, PathBuf};

use assert_cmd::Command;

const SINGLE: &str = r#"
[simulate]
model = "single"
n = 600
beta = [0.5, -1.5]
gamma = [[2.0], [-1.7]]
x = ["normal(0,2)"]
"#;

const TWOSTAGE: &str = r#"
[simulate]
model = "twostage"
n = 800
beta = [1.0, -2.0]
gamma1 = [[1.5], [-1.5]]
gamma2 = [[[1.0], [-1.0]], [[2.0], [-2.0]]]
x = ["normal(0,2)"]
"#;

const MEDIATION: &str = r#"
[simulate]
model = "mediation"
n = 600
beta = [-0.5, 2.0, 0.5]
gamma = [[1.4], [-2.2]]
theta = [1.0, 0.5, 1.0, 0.3]
sigma = 1.0
x = ["normal(0,1)"]
c = ["normal(0,1)"]
"#;

fn bin() -> Command {
    let mut c = Command::cargo_bin("miscorr").unwrap();
    c.env_remove("MISCORR_THREADS");
    c
}

fn simulate(dir: &Path, name: &str, cfg: &str) -> PathBuf {
    let cfg_path = dir.join(format!("{name}.toml"));
    fs::write(&cfg_path, cfg).unwrap();
    let out = dir.join(name);
    bin()
        .args(["simulate", "--seed", "11", "-c"])
        .arg(&cfg_path)
        .arg("-o")
        .arg(&out)
        .assert()
        .success();
    dir.join(format!("{name}.csv"))
}

/// Every file written under `prefix`, sorted by name.
fn outputs(dir: &Path, prefix: &str) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name().to_string_lossy().starts_with(prefix))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

fn run_in(dir: &Path, prefix: &str, args: &[&str], threads: Option<&str>) -> Vec<(String, Vec<u8>)> {
    let mut c = bin();
    c.current_dir(dir).args(args).args(["-o", prefix]);
    if let Some(t) = threads {
        c.args(["--n-parallel", t]);
    }
    c.assert().success();
    outputs(dir, &format!("{prefix}."))
        .into_iter()
        .chain(outputs(dir, &format!("{prefix}_")))
        .map(|(n, b)| (n.trim_start_matches(prefix).to_string(), b))
        .collect()
}

#[test]
fn em_fit_writes_parameter_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", SINGLE);
    bin()
        .current_dir(dir.path())
        .arg("combo-em")
        .arg("--data")
        .arg(&data)
        .args(["--ystar", "ystar", "--x", "x1", "-o", "fit"])
        .assert()
        .success();
    let csv = fs::read_to_string(dir.path().join("fit.csv")).unwrap();
    let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(csv.lines().next().unwrap(), "Parameter,Estimates,SE,Convergence");
    assert_eq!(&names[..4], ["beta1", "beta2", "gamma11", "gamma12"]);
    assert!(names.contains(&"naive_beta2"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["ystar"], "ystar");
    assert_eq!(report["data"]["n"], 600);
    assert!(report["fit"]["sensitivity"].as_f64().unwrap() > 0.5);
}

#[test]
fn unknown_column_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", SINGLE);
    let out = bin()
        .current_dir(dir.path())
        .arg("combo-em")
        .arg("--data")
        .arg(&data)
        .args(["--ystar", "ystar", "--x", "not_there"])
        .assert()
        .code(1);
    let err = String::from_utf8_lossy(&out.get_output().stderr).into_owned();
    assert!(err.contains("not_there"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    bin().arg("no-such-command").args(["--data", "x.csv"]).assert().code(1);
    bin().arg("combo-em").args(["--set", "bogus_key=1", "--data", "x.csv"]).assert().code(1);
    bin().arg("combo-em").args(["--data", "missing.csv", "--ystar", "y", "--x", "a"]).assert().code(1);
    bin().arg("simulate").assert().code(1);
    bin()
        .arg("combo-em")
        .env("MISCORR_THREADS", "zero")
        .args(["--data", "x.csv"])
        .assert()
        .code(1);
}

#[test]
fn non_convergence_exits_two_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", SINGLE);
    bin()
        .current_dir(dir.path())
        .arg("combo-em")
        .arg("--data")
        .arg(&data)
        .args(["--ystar", "ystar", "--x", "x1", "--max-iter", "1", "--accel", "plain", "-o", "nc"])
        .assert()
        .code(2);
    let csv = fs::read_to_string(dir.path().join("nc.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with("FALSE"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("nc.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], false);
}

#[test]
fn simulate_write_load_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", SINGLE);
    let table = miscorr::io::read_table(&data, None).unwrap();
    let again = miscorr::io::sim_table_csv(&miscorr::sim::SimTable {
        names: table.names.clone(),
        columns: table.columns.clone(),
    })
    .unwrap();
    assert_eq!(again, fs::read_to_string(&data).unwrap());
}

#[test]
fn zero_one_coding_matches_one_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", SINGLE);
    let text = fs::read_to_string(&data).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let k = header.split(',').position(|h| h == "ystar").unwrap();
    let mut recoded = vec![header.to_string()];
    for l in lines {
        let mut cells: Vec<String> = l.split(',').map(String::from).collect();
        if cells[k] == "2" {
            cells[k] = "0".into();
        }
        recoded.push(cells.join(","));
    }
    fs::write(dir.path().join("d01.csv"), recoded.join("\n") + "\n").unwrap();
    let a = run_in(dir.path(), "a", &["combo-em", "--data", "d.csv", "--ystar", "ystar", "--x", "x1"], None);
    let b = run_in(
        dir.path(),
        "b",
        &["combo-em", "--data", "d01.csv", "--ystar", "ystar", "--x", "x1", "--coding", "zero-one"],
        None,
    );
    assert_eq!(a[0].1, b[0].1, "parameter tables differ");
}

#[test]
fn roc_from_fit_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d", SINGLE);
    let csv = fs::read_to_string(&data).unwrap();
    // Use -x1 as a risk score so that higher means more likely an event.
    let mut out = String::from("x1,y,ystar,score\n");
    for l in csv.lines().skip(1) {
        let x: f64 = l.split(',').next().unwrap().parse().unwrap();
        out.push_str(&format!("{l},{}\n", 1.0 / (1.0 + (1.5 * x).exp())));
    }
    fs::write(dir.path().join("r.csv"), out).unwrap();
    let base = ["--data", "r.csv", "--ystar", "ystar", "--x", "x1"];
    run_in(dir.path(), "fit", &[&["combo-em"][..], &base].concat(), None);
    let files = run_in(
        dir.path(),
        "roc",
        &[&["roc", "--fit", "fit.csv", "--risk", "score", "--label", "y"][..], &base].concat(),
        None,
    );
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, [".csv", ".json", "_subset.csv"]);
    let roc = String::from_utf8(files[0].1.clone()).unwrap();
    assert_eq!(roc.lines().next().unwrap(), "cutoff,FPR,TPR");
    assert_eq!(roc.lines().count(), 102);
    let report: serde_json::Value = serde_json::from_slice(&files[1].1).unwrap();
    let auc = report["roc"]["auc"].as_f64().unwrap();
    let subset = report["roc"]["subset_auc"].as_f64().unwrap();
    assert!(auc > 0.7 && auc < 1.0, "{auc}");
    assert!((auc - subset).abs() < 0.05, "{auc} vs {subset}");
}

fn assert_deterministic(dir: &Path, tag: &str, args: &[&str]) {
    let a = run_in(dir, &format!("{tag}_a"), args, Some("1"));
    let b = run_in(dir, &format!("{tag}_b"), args, Some("1"));
    let c = run_in(dir, &format!("{tag}_c"), args, Some("4"));
    assert!(!a.is_empty());
    assert_eq!(a, b, "{tag}: repeated runs differ");
    assert_eq!(a, c, "{tag}: output depends on --n-parallel");
}

#[test]
fn every_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    simulate(p, "s", SINGLE);
    simulate(p, "t", TWOSTAGE);
    simulate(p, "m", MEDIATION);
    for (name, cfg) in [("s", SINGLE), ("t", TWOSTAGE), ("m", MEDIATION)] {
        fs::write(p.join(format!("{name}.toml")), cfg).unwrap();
        assert_deterministic(p, &format!("sim{name}"), &["simulate", "--seed", "5", "-c", &format!("{name}.toml")]);
    }
    let single = ["--data", "s.csv", "--ystar", "ystar", "--x", "x1", "--seed", "9"];
    let two = ["--data", "t.csv", "--ystar1", "ystar1", "--ystar2", "ystar2", "--x", "x1", "--seed", "9"];
    let med = ["--data", "m.csv", "--mstar", "mstar", "--outcome", "y", "--x", "x", "--c", "c1"];
    let mcmc = ["--chains", "3", "--samples", "300", "--burn-in", "300"];
    assert_deterministic(p, "em", &[&["combo-em"][..], &single].concat());
    assert_deterministic(p, "em2", &[&["combo-em-2stage"][..], &two].concat());
    assert_deterministic(p, "mc", &[&["combo-mcmc"][..], &single, &mcmc].concat());
    assert_deterministic(p, "mc2", &[&["combo-mcmc-2stage"][..], &two, &mcmc].concat());
    for m in ["comma-em", "comma-pvw", "comma-ols"] {
        assert_deterministic(p, m, &[&[m][..], &med].concat());
    }
    let boot = ["bootstrap", "--n-bootstrap", "40"];
    assert_deterministic(p, "bs", &[&boot[..], &["--method", "combo-em"], &single].concat());
    assert_deterministic(p, "bs2", &[&boot[..], &["--method", "combo-em-2stage"], &two].concat());
    assert_deterministic(p, "bsm", &[&boot[..], &["--method", "comma-ols"], &med].concat());
    run_in(p, "fitt", &[&["combo-em-2stage"][..], &two].concat(), None);
    assert_deterministic(
        p,
        "roc2",
        &[&["roc", "--fit", "fitt.csv", "--risk", "x1", "--label", "y"][..], &two].concat(),
    );
}

#[test]
fn thread_env_overrides_flag_without_changing_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    simulate(p, "s", SINGLE);
    let args = ["bootstrap", "--method", "combo-em", "--n-bootstrap", "30", "--data", "s.csv", "--ystar", "ystar", "--x", "x1"];
    let a = run_in(p, "one", &args, Some("1"));
    let mut c = bin();
    c.current_dir(p).env("MISCORR_THREADS", "3").args(args).args(["-o", "env"]);
    c.assert().success();
    let b: Vec<_> = outputs(p, "env.")
        .into_iter()
        .map(|(n, b)| (n.trim_start_matches("env").to_string(), b))
        .collect();
    assert_eq!(a, b);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    simulate(p, "s", SINGLE);
    fs::write(p.join("fit.toml"), "data = \"s.csv\"\nystar = \"ystar\"\nx = [\"x1\"]\ntolerance = 1e-9\n").unwrap();
    let files = run_in(p, "cfg", &["combo-em", "-c", "fit.toml", "--set", "accel=\"plain\""], None);
    let report: serde_json::Value = serde_json::from_slice(&files[1].1).unwrap();
    assert_eq!(report["config"]["accel"], "plain");
    assert_eq!(report["config"]["tolerance"], 1e-9);
    assert_eq!(report["config"]["x"][0], "x1");
}
