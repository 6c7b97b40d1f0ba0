//! End-to-end checks of the binary: artifact layout, exit codes, error
//! reporting. Grids are kept tiny; these test plumbing, not numerics.

use std::path::Path;
use std::process::{Command, Output};

fn chns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chns"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn schema_roundtrips_through_the_parser() {
    let out = chns(&["--config-schema"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[model]"));
    // The template must itself be a valid config.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &text);
    let out = chns(&["verify", "--config", &cfg]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_prints_table_and_json_summary() {
    let out = chns(&["verify", "--jobs", "1"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    // Pass/fail table rows, then one machine-readable summary line.
    for row in ["ellipticity probe", "grad/div adjointness", "trivial cell tensor"] {
        assert!(text.contains(row), "missing row {row:?} in:\n{text}");
    }
    assert_eq!(text.matches("PASS").count(), 4, "{text}");
    assert!(!text.contains("FAIL"), "{text}");
    let v: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(v["ok"], serde_json::Value::Bool(true));
    assert!(v["lambda_min"].as_f64().unwrap() > 0.0);
    assert!(v["adjointness"].as_f64().unwrap() < 1e-13);
}

#[test]
fn out_of_range_value_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[physics]\nkappa = -1.0\n");
    let out = chns(&["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(v["error"]["type"], "config");
    assert!(
        v["error"]["message"].as_str().unwrap().contains("physics.kappa"),
        "{err}"
    );
}

#[test]
fn cell_writes_tensor_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[cell]\nn = 16\ntol = 1e-8\n",
    );
    let out_dir = dir.path().join("out");
    let out = chns(&["cell", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let tensor: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("tensor.json")).unwrap())
            .unwrap();
    let flat = tensor["tensor_flat"].as_array().unwrap();
    assert_eq!(flat.len(), 16);
    // Layered default: slot (1,1) is the harmonic mean, below the arithmetic
    // slot (0,0); both within the coefficient range.
    let d00 = flat[0].as_f64().unwrap();
    let d11 = flat[5].as_f64().unwrap();
    assert!(d11 < d00, "{d11} vs {d00}");
    assert!(d00 > 1.0 && d00 < 2.0 && d11 > 1.0);
    assert!(tensor["major_symmetry_defect"].as_f64().unwrap() < 1e-7);
    assert_eq!(tensor["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_writes_energy_series_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[grid]\nn = 24\n[time]\ndt = 5e-4\nt_end = 2e-3\n[simulate]\nmode = \"heterogeneous\"\nepsilon = 0.5\n",
    );
    let out_dir = dir.path().join("out");
    let out = chns(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let energy = std::fs::read_to_string(out_dir.join("energy.csv")).unwrap();
    let lines: Vec<_> = energy.lines().collect();
    assert!(lines[0].starts_with("t,kinetic,interfacial"));
    assert_eq!(lines.len(), 1 + 4 + 1); // header + initial + 4 steps

    for f in ["phi.f64", "phi.json", "mu.f64", "p.f64", "vel_ux.f64", "vel_uy.json"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }

    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("run.json")).unwrap()).unwrap();
    assert!(run["mass_drift_rel"].as_f64().unwrap() < 1e-10);
    assert!(run["max_div_linf"].as_f64().unwrap() < 1e-10);
    assert!(run["energy_final"].as_f64().unwrap() <= run["energy_initial"].as_f64().unwrap());
}

#[test]
fn converge_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        concat!(
            "[model]\nkind = \"constant\"\nnu = 1.5\n",
            "[time]\ndt = 5e-4\nt_end = 1e-3\n",
            "[cell]\nn = 16\n",
            "[converge]\nepsilons = [0.5]\nn_fine = 24\nn_coarse = 12\n",
        ),
    );
    let out_dir = dir.path().join("out");
    let out = chns(&["converge", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
    assert!(out_dir.join("tensor.json").exists());
}

#[test]
fn meanvalue_writes_doubling_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[meanvalue]\nr0 = 1.0\nr_max = 8.0\npts_per_unit = 32\ndim = 1\n",
    );
    let out_dir = dir.path().join("out");
    let out = chns(&["meanvalue", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let means = std::fs::read_to_string(out_dir.join("means.csv")).unwrap();
    let lines: Vec<_> = means.lines().collect();
    assert_eq!(lines[0], "r,mean,increment");
    assert_eq!(lines.len(), 1 + 4); // r = 1, 2, 4, 8
    // Layered default has mean (a_minus + a_plus)/2 on unit boxes.
    let last = lines.last().unwrap().split(',').nth(1).unwrap();
    let m: f64 = last.parse().unwrap();
    assert!((m - 1.5).abs() < 1e-6, "mean {m}");
}

#[test]
fn bad_config_exits_2_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[grid]\nn = 24\nnonsense = true\n");
    let out = chns(&["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(v["error"]["type"], "config");
}

#[test]
fn under_resolved_simulation_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[grid]\nn = 16\n[simulate]\nmode = \"heterogeneous\"\nepsilon = 0.5\n[time]\ndt = 5e-4\nt_end = 1e-3\n",
    );
    let out_dir = dir.path().join("out");
    let out = chns(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert!(v["error"]["message"].as_str().unwrap().contains("period"));
}
