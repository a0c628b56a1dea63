use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shishkin-cd")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_grid(path: &Path) -> Vec<(f64, f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect()
}

#[test]
fn solve_writes_grid_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["solve", "--problem", "example1", "--epsilon", "1e-2", "--N", "128", "--out-dir", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("example1_eps1e-2_N128.dat")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.is_empty()).count(), 129 * 129);
    assert_eq!(text.lines().filter(|l| l.is_empty()).count(), 128);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("example1_eps1e-2_N128.json")).unwrap()).unwrap();
    assert!(meta["sigma_x"].as_f64().unwrap() > 0.0);
    assert!(meta["sigma_y"].as_f64().unwrap() > 0.0);
    assert!(meta["residual"].as_f64().unwrap() <= 1e-10);
    assert!(meta["seconds"].as_f64().is_some());
}

#[test]
fn solve_rejects_bad_n() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--N", "30", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("divisible by 8"), "{}", stderr(&o));
}

#[test]
fn solve_rejects_several_cases() {
    let o = run(&["solve", "-e", "1e-2", "-e", "1e-3", "-n", "16"]);
    assert_eq!(o.status.code(), Some(2));
}

/// Steepest differences away from the boundary layers sit on the fine
/// pieces next to `x = 0.4` and around `y = 0.6`.
#[test]
fn example2_interior_layers_in_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["solve", "--problem", "example2", "-e", "1e-2", "-n", "128", "--out-dir", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let grid = read_grid(&dir.path().join("example2_eps1e-2_N128.dat"));
    let side = 129;
    let at = |i: usize, j: usize| grid[j * side + i];
    let (mut best_x, mut best_y) = ((0.0, 0.0), (0.0, 0.0));
    for j in 1..side - 1 {
        for i in 1..side - 1 {
            let (x0, y0, u0) = at(i, j);
            let (x1, _, u1) = at(i + 1, j);
            let (_, y1, u2) = at(i, j + 1);
            let gx = ((u1 - u0) / (x1 - x0)).abs();
            let gy = ((u2 - u0) / (y1 - y0)).abs();
            if (0.1..0.9).contains(&y0) && x1 < 0.9 && gx > best_x.0 {
                best_x = (gx, x0);
            }
            if (0.1..0.9).contains(&x0) && (0.1..0.9).contains(&y1) && gy > best_y.0 {
                best_y = (gy, y0);
            }
        }
    }
    assert!((best_x.1 - 0.4).abs() < 0.01, "steepest x-difference at x = {}", best_x.1);
    assert!((best_y.1 - 0.6).abs() < 0.05, "steepest y-difference at y = {}", best_y.1);
}

#[test]
fn sweep_single_cell_has_no_order_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["sweep", "-e", "1e-2", "-n", "16", "--out-dir", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("example1_transformed_bisect.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "epsilon,16");
    assert!(lines[2].starts_with("D^N,"));
    assert_eq!(String::from_utf8_lossy(&o.stdout), csv);
}

#[test]
fn sweep_rejects_empty_epsilon_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "epsilons = []\nns = [16]\n").unwrap();
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon list is empty"));
}

#[test]
fn sweep_output_is_deterministic_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "problem = \"example1\"\nepsilons = [0.1, 1e-4]\nns = [16, 32]\nworkers = 2\n").unwrap();
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--problem", "example2", "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(out.join("example2_transformed_bisect.csv")).unwrap());
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("example2_transformed_bisect.json")).unwrap()).unwrap();
        assert_eq!(json["cells"].as_array().unwrap().len(), 4);
        assert_eq!(json["problem"], "example2");
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs.remove(0)).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().starts_with("E^N,"));
}

#[test]
fn desk_preset_caps_n() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "epsilons = [0.1]\nns = [16, 512]\n").unwrap();
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--desk", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("epsilon,16\n"));
}

#[test]
fn verify_flags_raw_variant() {
    let o = run(&["verify", "--problem", "example1", "--variant", "raw", "-n", "16", "-e", "1e-2"]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout);
    let line = text.lines().find(|l| l.contains("m-matrix")).unwrap();
    assert!(line.starts_with("FAIL"), "{line}");
    assert!(line.contains("InterfaceXRaw") && line.contains("min inverse entry"), "{line}");
    assert!(text.lines().any(|l| l.starts_with("PASS stability")));
}
