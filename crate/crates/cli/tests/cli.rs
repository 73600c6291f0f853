use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use obstacle_lab::ExperimentConfig;
use tempfile::TempDir;

const BENCHMARK: &str = r#"
[problem]
domain = { shape = "interval", a = -1.0, b = 1.0 }
h = 0.00390625
p = 2.0
gamma = 0.5
obstacle = { kind = "zero" }
boundary = { kind = "dead_core" }

[analysis]
rho_max = 0.5
levels = 6
"#;

const TRIVIAL: &str = r#"
[problem]
domain = { shape = "interval", a = 0.0, b = 1.0 }
h = 0.0625
p = 2.0
gamma = 0.5
delta = 0.0
obstacle = { kind = "constant", value = -1.0 }
boundary = { kind = "zero" }
"#;

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obstacle-lab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn config_round_trips() {
    let mut text = BENCHMARK.to_string();
    text.push_str("\n[sweep]\npairs = [[2.0, 0.25], [3.0, 0.5]]\n\n[density]\nkind = \"p_power\"\np = 2.0\n");
    let a = ExperimentConfig::from_toml(&text).unwrap();
    let b = ExperimentConfig::from_toml(&a.to_toml().unwrap()).unwrap();
    assert_eq!(a, b);
    for file in ["benchmark", "trivial", "obstacle_limited", "sweep", "disc", "density_p_power", "density_nonconvex"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{file}.toml"));
        let a = ExperimentConfig::load(&path).unwrap();
        assert_eq!(a, ExperimentConfig::from_toml(&a.to_toml().unwrap()).unwrap(), "{file}");
    }
}

#[test]
fn unknown_keys_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("{TRIVIAL}\nspeed = 3\n"));
    let out = run(&["solve"], &config, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn gamma_outside_the_unit_interval_is_rejected() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &TRIVIAL.replace("gamma = 0.5", "gamma = 1.5"));
    let out = run(&["solve"], &config, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gamma") && stderr.contains("(0,1)"), "{stderr}");
}

#[test]
fn trivial_solve_writes_zero_solution() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, TRIVIAL);
    let out_dir = dir.path().join("out");
    let out = run(&["solve"], &config, &out_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let mut reader = csv::Reader::from_path(out_dir.join("solution.csv")).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), ["x1", "value"]);
    let mut rows = 0;
    for record in reader.records() {
        let value: f64 = record.unwrap()[1].parse().unwrap();
        assert!(value.abs() < 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 17);
    assert_eq!(json(&out_dir.join("result.json"))["converged"], true);
}

#[test]
fn benchmark_solve_reports_the_closed_form_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BENCHMARK);
    let out_dir = dir.path().join("out");
    let out = run(&["solve"], &config, &out_dir);
    assert_eq!(out.status.code(), Some(0));
    let err = json(&out_dir.join("result.json"))["benchmark_error"].as_f64().unwrap();
    assert!(err < 0.5 * (1.0f64 / 64.0).powf(0.9), "error {err}");
}

#[test]
fn benchmark_exponent_matches_prediction() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BENCHMARK);
    let out_dir = dir.path().join("out");
    let out = run(&["exponents"], &config, &out_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&out_dir.join("exponents.json"));
    let slope = report["designated"]["slope"].as_f64().unwrap();
    assert!((slope - 4.0 / 3.0).abs() <= 0.1);
    assert!((report["predicted_slope"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-12);
    for file in ["classification.csv", "fit.csv"] {
        assert!(out_dir.join(file).exists());
    }

    // Re-analysis of a stored solution gives the same report.
    let solved = dir.path().join("solved");
    assert_eq!(run(&["solve"], &config, &solved).status.code(), Some(0));
    let again = dir.path().join("again");
    let from = solved.join("solution.csv");
    let out = run(&["exponents", "--from", from.to_str().unwrap()], &config, &again);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&again.join("exponents.json")), report);
}

#[test]
fn no_free_boundary_is_vacuous() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, TRIVIAL);
    let out = run(&["exponents"], &config, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("vacuous"));
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("{BENCHMARK}\n[sweep]\n"));
    let out = run(&["sweep"], &config, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_predictions_and_single_cell_consistency() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("{BENCHMARK}\n[sweep]\npairs = [[2.0, 0.25], [2.0, 0.5], [2.0, 0.75]]\n"));
    let out_dir = dir.path().join("out");
    let out = run(&["sweep"], &config, &out_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let mut reader = csv::Reader::from_path(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["p", "gamma", "beta", "h", "tau_pred", "slope", "pass"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    let taus: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    for (t, want) in taus.iter().zip([1.0 / 7.0, 1.0 / 3.0, 0.6]) {
        assert!((t - want).abs() < 1e-12);
    }

    let single = write_config(&dir, &format!("{BENCHMARK}\n[sweep]\ngamma = [0.5]\n"));
    let sweep_dir = dir.path().join("single");
    assert_eq!(run(&["sweep"], &single, &sweep_dir).status.code(), Some(0));
    let row = csv::Reader::from_path(sweep_dir.join("sweep.csv")).unwrap().records().next().unwrap().unwrap();
    let exp_dir = dir.path().join("exp");
    assert_eq!(run(&["exponents"], &single, &exp_dir).status.code(), Some(0));
    let slope = json(&exp_dir.join("exponents.json"))["designated"]["slope"].as_f64().unwrap();
    assert_eq!(row[5].parse::<f64>().unwrap(), slope);
}

#[test]
fn energy_checks_pass_and_fail_as_expected() {
    let dir = TempDir::new().unwrap();
    let quadratic = write_config(&dir, "[density]\nkind = \"p_power\"\np = 2.0\n\n[analysis]\nconvexity_pairs = 2000\n");
    let out_dir = dir.path().join("quadratic");
    let out = run(&["check-energy"], &quadratic, &out_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&out_dir.join("energy.json"));
    for key in ["Upsilon_hat", "Lambda_hat", "lambda_hat"] {
        assert!((report[key].as_f64().unwrap() - 1.0).abs() < 1e-9, "{key}: {report}");
    }

    let bumped = "[density]\nkind = \"convexified\"\np = 3.0\nscale = 1.0\ntilt = [0.0, 0.0]\nbump_radius = 1.0\n";
    let nonconvex = write_config(&dir, &format!("{bumped}bump_weight = 1.5\n"));
    assert_eq!(run(&["check-energy"], &nonconvex, &dir.path().join("bad")).status.code(), Some(1));
    let admissible = dir.path().join("ok.toml");
    std::fs::write(&admissible, format!("{bumped}bump_weight = 1.0\n")).unwrap();
    assert_eq!(run(&["check-energy"], &admissible, &dir.path().join("good")).status.code(), Some(0));
}

#[test]
fn outputs_are_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BENCHMARK);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["exponents"], &config, &a).status.code(), Some(0));
    assert_eq!(run(&["exponents"], &config, &b).status.code(), Some(0));
    for file in ["exponents.json", "classification.csv", "fit.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
}
