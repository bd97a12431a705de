//! End-to-end checks of the four subcommand pipelines and the binary's exit
//! codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cghydro_cli::config::RunConfig;
use cghydro_cli::runner::{run_command, run_diagnose, run_evolve, run_kernels, run_sweep};

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cghydro_test_{tag}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn scalar_f64(man: &cghydro_cli::Manifest, key: &str) -> f64 {
    man.scalars[key].as_f64().unwrap_or_else(|| panic!("missing scalar {key}"))
}

const FREE_GAUSSIAN: &str = r#"
[grid]
box_length = 40.0
points_per_dim = 128

[physics]
m = 1.0
l_av = 0.0

[time]
dt = 1e-3
t_final = 0.25
snapshot_stride = 50

[initial_state]
kind = "gaussian_packet"
center = [20.0]
sigma = 2.0
momentum = [0.314159265358979]
"#;

#[test]
fn evolve_free_run_matches_reference_in_manifest() {
    let cfg = RunConfig::parse(FREE_GAUSSIAN).unwrap();
    let out = temp_dir("evolve_free");
    let man = run_evolve(&cfg, &out, None).unwrap();
    assert!(scalar_f64(&man, "schrodinger_match_sup") <= 1e-8);
    assert!((scalar_f64(&man, "norm_drift") - 1.0).abs() < 1e-10);
    assert!(out.join("manifest.json").exists());
    assert!(out.join("norms.csv").exists());
    assert!(out.join("field_rho.cgh").exists());
    // every recorded file exists and checksums are 64 hex chars
    for entry in &man.outputs {
        assert!(out.join(&entry.path).exists(), "{}", entry.path);
        assert_eq!(entry.sha256.len(), 64);
    }
}

#[test]
fn evolve_homogeneous_run_has_zero_residuals() {
    let text = r#"
[grid]
box_length = 20.0
points_per_dim = 32

[physics]
m = 1.0
l_av = 0.5

[time]
dt = 5e-3
t_final = 0.1

[initial_state]
kind = "plane_wave"
mode = [0]
"#;
    let cfg = RunConfig::parse(text).unwrap();
    let out = temp_dir("evolve_dc");
    let man = run_evolve(&cfg, &out, None).unwrap();
    for name in ["varphi", "lambda", "mu", "rho", "kappa"] {
        let sup = scalar_f64(&man, &format!("residual_{name}_sup"));
        assert!(sup <= 1e-12, "{name}: {sup}");
    }
    assert!((scalar_f64(&man, "norm_drift") - 1.0).abs() < 1e-12);
}

#[test]
fn identical_runs_are_bit_identical() {
    let text = r#"
[grid]
box_length = 20.0
points_per_dim = 32

[physics]
m = 1.0
l_av = 0.4

[time]
dt = 5e-3
t_final = 0.1
snapshot_stride = 10

[initial_state]
kind = "gaussian_packet"
center = [10.0]
sigma = 1.5

[fluctuation]
mode = "ensemble"
seed = 42
irrelevant_amplitude = 0.05
"#;
    let cfg = RunConfig::parse(text).unwrap();
    let out_a = temp_dir("det_a");
    let out_b = temp_dir("det_b");
    run_evolve(&cfg, &out_a, None).unwrap();
    run_evolve(&cfg, &out_b, None).unwrap();
    let mut names: Vec<String> = fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().to_string())
        .filter(|n| n.ends_with(".cgh") || n.ends_with(".csv"))
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let a = fs::read(out_a.join(&name)).unwrap();
        let b = fs::read(out_b.join(&name)).unwrap();
        assert_eq!(a, b, "file {name} differs between identical runs");
    }
}

#[test]
fn sweep_homogeneous_state_keeps_all_interior_candidates() {
    let text = r#"
[grid]
box_length = 20.0
points_per_dim = 32

[physics]
m = 1.0

[time]
dt = 5e-3
t_final = 0.1

[initial_state]
kind = "plane_wave"
mode = [0]

[sweep]
l_values = [0.2, 0.4, 0.6, 0.8]
t_probe = 0.1
"#;
    let cfg = RunConfig::parse(text).unwrap();
    let out = temp_dir("sweep_dc");
    let man = run_sweep(&cfg, &out, None).unwrap();
    let candidates: Vec<f64> = man.scalars["stationary_candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(candidates, vec![0.4, 0.6]);
    assert_eq!(man.scalars["verdict_chosen_l"].as_f64(), Some(0.4));
    assert!(man.scalars["verdict_temperature"].as_f64().unwrap() > 0.0);
    assert!(out.join("sweep.csv").exists());
}

#[test]
fn diagnose_constant_state_is_trivial() {
    let text = r#"
[grid]
box_length = 20.0
points_per_dim = 32

[physics]
m = 1.0
l_av = 0.3

[time]
dt = 5e-3
t_final = 0.05

[initial_state]
kind = "plane_wave"
mode = [0]
"#;
    let cfg = RunConfig::parse(text).unwrap();
    let out = temp_dir("diag_dc");
    let man = run_diagnose(&cfg, &out, None).unwrap();
    for name in ["varphi", "rho"] {
        assert!(scalar_f64(&man, &format!("residual_{name}_sup")) <= 1e-12);
    }
    assert!(scalar_f64(&man, "pressure_min_eigenvalue") >= -1e-15);
    assert_eq!(man.scalars["bound_satisfied_l2"].as_bool(), Some(true));
    assert!(out.join("pressure.csv").exists());
}

#[test]
fn kernels_at_zero_length_dump_free_tables() {
    let text = r#"
[grid]
box_length = 20.0
points_per_dim = 16

[physics]
m = 1.0
l_av = 0.0

[time]
dt = 1e-3
t_final = 0.0

[initial_state]
kind = "plane_wave"
mode = [0]
"#;
    let cfg = RunConfig::parse(text).unwrap();
    let out = temp_dir("kernels0");
    let man = run_kernels(&cfg, &out, None).unwrap();
    let csv = fs::read_to_string(out.join("kernels.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let omega: f64 = fields[col("omega")].parse().unwrap();
        let h: f64 = fields[col("h")].parse().unwrap();
        let g: f64 = fields[col("g_amp")].parse().unwrap();
        let f: f64 = fields[col("f_amp")].parse().unwrap();
        assert_eq!(h, omega);
        assert_eq!(g, 0.0);
        assert_eq!(f, 0.0);
    }
    assert!(out.join("expansion.csv").exists());
    assert_eq!(man.scalars["g_discrepancy"].as_bool(), Some(true));
}

#[test]
fn file_state_round_trips_through_a_run() {
    // write a state with the binary format, load it via kind = "file"
    let out = temp_dir("filestate");
    let state_path = out.join("input_state.cgh");
    let grid = cghydro_core::Grid::new(20.0, 32, 1, 1, u128::MAX).unwrap();
    let w = cghydro_core::states::gaussian_packet(&grid, &[10.0], 1.0, &[0.0]).unwrap();
    cghydro_cli::format::write_complex_array(
        &state_path,
        &[32],
        w.values.as_slice().unwrap(),
    )
    .unwrap();
    let text = format!(
        r#"
[grid]
box_length = 20.0
points_per_dim = 32

[physics]
m = 1.0
l_av = 0.0

[time]
dt = 1e-3
t_final = 0.05

[initial_state]
kind = "file"
path = "{}"
"#,
        state_path.display()
    );
    let cfg = RunConfig::parse(&text).unwrap();
    let man = run_command("evolve", &cfg, &out.join("run"), None).unwrap();
    assert!(scalar_f64(&man, "schrodinger_match_sup") <= 1e-8);
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_cghydro");
    let dir = temp_dir("exit_codes");

    // config error: unknown key
    let bad = FREE_GAUSSIAN.replace("[physics]", "[phyiscs]");
    let cfg_path = write_config(&dir, &bad);
    let status = Command::new(bin)
        .args(["evolve", "--config"])
        .arg(&cfg_path)
        .args(["--out"])
        .arg(dir.join("o1"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // numeric/runtime error: memory budget exceeded (top-level key must
    // precede the first table)
    let big = format!("budget = 1024\n{FREE_GAUSSIAN}");
    let cfg_path = write_config(&dir, &big);
    let status = Command::new(bin)
        .args(["evolve", "--config"])
        .arg(&cfg_path)
        .args(["--out"])
        .arg(dir.join("o2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // success path with explicit thread count
    let cfg_path = write_config(&dir, FREE_GAUSSIAN);
    let status = Command::new(bin)
        .args(["evolve", "--config"])
        .arg(&cfg_path)
        .args(["--out"])
        .arg(dir.join("o3"))
        .args(["--threads", "2", "--seed", "7"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}
