use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

const SMALL: [&str; 6] = ["--set", "scene.n_elements=16", "--set", "grid.K=4", "--set", "grid.M=8"];

fn nfcrb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfcrb")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn compute(extra: &[&str]) -> String {
    let mut args = vec!["compute"];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    let out = nfcrb(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    stdout(&out)
}

fn value(report: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    report.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap_or_else(|| panic!("{key} missing")).parse().unwrap()
}

fn bounds(report: &str) -> Vec<(String, f64, f64)> {
    report
        .lines()
        .filter(|l| l.starts_with("bound "))
        .map(|l| {
            let c: Vec<&str> = l.split_whitespace().collect();
            (c[2].to_string(), c[3].parse().unwrap(), c[4].parse().unwrap())
        })
        .collect()
}

fn temp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nfcrb-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn compute_reports_six_bounds_for_one_target() {
    let report = compute(&[]);
    let b = bounds(&report);
    let names: Vec<&str> = b.iter().map(|(n, _, _)| n.as_str()).collect();
    assert_eq!(names, ["x", "y", "vx", "vy", "alpha_r", "alpha_i"]);
    // joint estimation never beats the conditional bound
    assert!(b.iter().all(|(_, cond, full)| full >= cond && *cond > 0.0));
    for key in ["condition_number", "isi_margin_s", "fresnel_tx_radiative_m", "fresnel_rx_reactive_m"] {
        assert!(value(&report, key).is_finite());
    }
}

#[test]
fn single_subcarrier_has_narrowband_sums() {
    // a small array at K = 1 cannot separate range from RCS phase, so use a 256-element array
    let report = compute(&["--set", "grid.K=1", "--set", "scene.n_elements=256"]);
    let (wide, narrow) = (value(&report, "lambda2_sum"), value(&report, "k_lambda_c2"));
    assert!((wide - narrow).abs() <= 1e-15 * narrow);
}

#[test]
fn noise_in_dbm_scales_every_bound() {
    let base = compute(&["--set", "scene.noise_dbm=-114"]);
    let noisy = compute(&["--set", "scene.noise_dbm=-108"]);
    let factor = 10f64.powf(0.6);
    // 10^0.6 is not a power of two: full bounds carry entry rounding amplified by the conditioning
    let full_tol = value(&base, "condition_number") * 1e-15;
    for ((_, c0, f0), (_, c1, f1)) in bounds(&base).iter().zip(&bounds(&noisy)) {
        assert!((c1 / c0 / factor - 1.0).abs() < 1e-12);
        assert!((f1 / f0 / factor - 1.0).abs() < full_tol);
    }
}

#[test]
fn compute_echoes_resolved_config() {
    let report = compute(&[]);
    for line in ["# preset = none", "# seed = 1", "# scene.n_elements = 16", "# grid.M = 8", "# grid.c_mps = 3e8"] {
        assert!(report.lines().any(|l| l == line), "missing {line}");
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let first = compute(&["--set", "target.0.vx_mps=-3", "--set", "closedform.delta_form=printed"]);
    let config: String = first
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter(|l| l.contains(" = "))
        .map(|l| format!("{l}\n"))
        .collect();
    let path = temp_path("echo.conf");
    fs::write(&path, config).unwrap();
    let again = nfcrb(&["compute", "--config", path.to_str().unwrap()]);
    assert_eq!(stdout(&again), first);
}

#[test]
fn unknown_config_key_is_a_config_error_with_location() {
    let path = temp_path("bad.conf");
    fs::write(&path, "# comment\ngrid.K = 4\n  scene.n_elemnts = 8\n").unwrap();
    let out = nfcrb(&["compute", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.conf:3:3: unknown key `scene.n_elemnts`"), "{}", stderr(&out));
}

#[test]
fn malformed_value_is_a_config_error() {
    let out = nfcrb(&["compute", "--set", "grid.M=many"]);
    assert_eq!(out.status.code(), Some(2));
    let out = nfcrb(&["compute", "--set", "grid.M=0"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn singular_fim_exits_three_with_parameter_names() {
    let out = nfcrb(&["compute", "--set", "scene.n_elements=1", "--set", "grid.K=1", "--set", "grid.M=1"]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("singular") && err.contains("x[0]") && err.contains("y[0]"), "{err}");
}

#[test]
fn fig1_sweep_has_four_k_series_over_the_range_grid() {
    let path = temp_path("fig1.csv");
    let out = nfcrb(&["sweep", "--preset", "fig1", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("# preset = fig1"));
    let csv = fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sweep_var,sweep_value,K,parameter,crb_true,crb_ff,crb_nf,relerr_ff,relerr_nf,cond_number,flags"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 25 * 4);
    let mut ks: Vec<&str> = rows.iter().map(|r| r[2]).collect();
    ks.dedup();
    ks.sort();
    ks.dedup();
    assert_eq!(ks.len(), 4);
    assert!(rows.iter().all(|r| r[0] == "range" && r[3] == "alpha" && r.len() == 11));
}

#[test]
fn sweep_output_is_deterministic_across_runs_and_workers() {
    let args = ["sweep", "--preset", "fig7", "--set", "sweep.values=8,16", "--set", "sweep.k_values=2,4"];
    let a = nfcrb(&args);
    let mut with_workers = args.to_vec();
    with_workers.extend(["--workers", "3"]);
    let b = nfcrb(&with_workers);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, nfcrb(&args).stdout);
}

#[test]
fn bistatic_preset_reports_totals() {
    let out = nfcrb(&["sweep", "--preset", "fig6", "--set", "sweep.values=16", "--set", "sweep.k_values=2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("# scene.targets = 3"));
    assert!(stderr(&out).contains("# scene.tx_center_m = -2"));
    let csv = stdout(&out);
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("antennas,1.6e1,2,alpha,"));
}

#[test]
fn sweep_rejects_bad_values() {
    let out = nfcrb(&["sweep", "--set", "sweep.values=100,50"]);
    assert_eq!(out.status.code(), Some(2));
    let out = nfcrb(&["sweep", "--set", "sweep.values=log:50:650"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixed_symbols_follow_the_seed() {
    let a = compute(&["--set", "fim.symbol_model=fixed", "--seed", "5"]);
    let b = compute(&["--set", "fim.symbol_model=fixed", "--seed", "5"]);
    let c = compute(&["--set", "fim.symbol_model=fixed", "--seed", "6"]);
    assert_eq!(a, b);
    assert_ne!(bounds(&a), bounds(&c));
}

#[test]
fn validate_ci_passes_with_json_summary() {
    let out = nfcrb(&["validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["scale"], "ci");
    let checks = summary["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 5);
    let derivatives = checks.iter().find(|c| c["name"] == "derivatives").unwrap();
    assert!(derivatives["worst"].as_f64().unwrap() < 1e-6);
    let identity = checks.iter().find(|c| c["name"] == "alpha_identity").unwrap();
    assert!(identity["worst"].as_f64().unwrap() < 1e-10);
    assert!(summary["seconds"].as_f64().unwrap() < 60.0);
}

#[test]
fn preset_flag_beats_config_file_preset() {
    let path = temp_path("preset.conf");
    fs::write(&path, "preset = fig2\nsweep.values = 8\nsweep.k_values = 2\n").unwrap();
    let out = nfcrb(&["sweep", "--config", path.to_str().unwrap(), "--preset", "fig5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = stdout(&out);
    let params: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(params, ["x", "y"]);
}
