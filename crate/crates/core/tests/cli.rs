//! CLI-level contracts: flag parsing, config-file merging, exit codes, CSV
//! formats, and output determinism.

use msem_vms::cli::run;

fn run_cli(args: &[&str]) -> i32 {
    let mut full = vec!["msem-vms"];
    full.extend_from_slice(args);
    run(full)
}

fn read_csv(path: &std::path::Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|c| c.to_string()).collect())
        .collect()
}

fn col(rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let idx = rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[idx].parse().unwrap()).collect()
}

#[test]
fn solve_vms_tracks_projection() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = run_cli(&[
        "solve", "--dim", "1", "--form", "direct", "--nu", "0.01", "--N", "4", "--p", "2", "--k",
        "4", "--out", out,
    ]);
    assert_eq!(code, 0);
    let rows = read_csv(&dir.path().join("solution.csv"));
    assert_eq!(
        rows[0],
        vec!["x", "phi_exact", "phi_projection", "phi_galerkin", "phi_vms", "phi_prime_exact", "phi_prime_computed"]
    );
    assert_eq!(rows.len(), 201);
    let proj = col(&rows, "phi_projection");
    let glk = col(&rows, "phi_galerkin");
    let vms = col(&rows, "phi_vms");
    let dist = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
    };
    assert!(dist(&vms, &proj) < dist(&glk, &proj), "vms must track the projection");
}

#[test]
fn solve_k0_equals_galerkin() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_cli(&[
        "solve", "--nu", "0.01", "--N", "4", "--p", "2", "--k", "0", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows = read_csv(&dir.path().join("solution.csv"));
    let glk = col(&rows, "phi_galerkin");
    let vms = col(&rows, "phi_vms");
    let scale = glk.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    for (a, b) in glk.iter().zip(&vms) {
        assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
    }
}

#[test]
fn invalid_nu_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_cli(&["solve", "--nu", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(!dir.path().join("solution.csv").exists());
}

#[test]
fn unknown_flag_exits_2() {
    assert_eq!(run_cli(&["solve", "--frobnicate", "1"]), 2);
    assert_eq!(run_cli(&["explode"]), 2);
}

#[test]
fn config_file_merging_and_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "dim = 1\nform = \"direct\"\nnu = 0.05\nN = 4\np = 2\nk = 3\n").unwrap();
    let out = dir.path().join("a");
    let code = run_cli(&[
        "solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.join("solution.csv").exists());

    // flags win over the config file: force an invalid nu through the flag
    let code = run_cli(&["solve", "--config", cfg.to_str().unwrap(), "--nu", "0"]);
    assert_eq!(code, 2);

    // unknown keys are rejected
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "nu = 0.05\nwhatever = 3\n").unwrap();
    assert_eq!(run_cli(&["solve", "--config", bad.to_str().unwrap()]), 2);
}

#[test]
fn deterministic_output() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let code = run_cli(&[
            "solve", "--form", "mixed", "--nu", "0.02", "--N", "4", "--p", "3", "--k", "2",
            "--out", d.path().to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    let a = std::fs::read(d1.path().join("solution.csv")).unwrap();
    let b = std::fs::read(d2.path().join("solution.csv")).unwrap();
    assert_eq!(a, b, "identical configs must give bitwise-identical CSVs");
    assert!(!a.contains(&b'\r'), "LF line endings only");
}

#[test]
fn converge_single_point_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_cli(&[
        "converge", "--axis", "k", "--grid", "2", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn converge_k_sweep_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_cli(&[
        "converge", "--axis", "k", "--grid", "1,2,3,4", "--nu", "0.01", "--N", "4", "--p", "2",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows = read_csv(&dir.path().join("convergence.csv"));
    assert_eq!(
        rows[0],
        vec!["axis_value", "err_galerkin", "err_projection", "err_vms", "err_vms_vs_projection", "err_fine_scales"]
    );
    let dist = col(&rows, "err_vms_vs_projection");
    for w in dist.windows(2) {
        assert!(w[1] < w[0], "err_vms_vs_projection must strictly decrease: {dist:?}");
    }
    let rates = read_csv(&dir.path().join("rates.csv"));
    assert_eq!(rates[0], vec!["column", "slope"]);
    assert_eq!(rates.len(), 6);
}

#[test]
fn greens_1d_nodal_source_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_cli(&[
        "greens", "--dim", "1", "--form", "direct", "--N", "4", "--p", "3", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows = read_csv(&dir.path().join("greens.csv"));
    assert_eq!(rows[0], vec!["s", "x", "g_exact", "g_h", "abs_diff"]);
    let diffs = col(&rows, "abs_diff");
    let worst = diffs.iter().fold(0.0f64, |m, &v| m.max(v));
    assert!(worst < 1e-10, "max |g_h - g| = {worst:.3e}");
    // boundary rows carry zero in both kernels
    let xs = col(&rows, "x");
    let ge = col(&rows, "g_exact");
    let gh = col(&rows, "g_h");
    for i in 0..xs.len() {
        if xs[i] == 0.0 || xs[i] == 1.0 {
            assert!(ge[i].abs() < 1e-13 && gh[i].abs() < 1e-13);
        }
    }
}

#[test]
fn ortho_table_format_and_magnitude() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_cli(&[
        "ortho", "--form", "direct", "--nu", "0.01", "--N", "4", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(dir.path().join("ortho.csv")).unwrap();
    assert!(text.starts_with("p,k1,k2,k3,k4\n"));
    let rows = read_csv(&dir.path().join("ortho.csv"));
    assert_eq!(rows.len(), 4); // header + p in {1, 2, 4}
    for row in &rows[1..] {
        for cell in &row[1..] {
            let v: f64 = cell.parse().unwrap();
            assert!(v.abs() < 1e-10);
        }
    }
}
