//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use nfcrb::closedform::{
    array_gain, crb_alpha_exact, element_ranges, ApproxInputs, Approximations, CorrectionTerms, DeltaForm,
};
use nfcrb::derivatives::{d_channel, ParamFamily, ParamIndex};
use nfcrb::experiments::{
    default_grid, evaluate_point, log_space, preset, run_sweep, scenario_monostatic_single, PresetScale, Quantity,
    ScenarioConfig, SweepAxis, SweepResult, SymbolChoice,
};
use nfcrb::fim::{crb_conditional, fim_total, SymbolModel};
use nfcrb::model::ForwardModel;
use nfcrb::oracle::{
    analytic_mean_jacobian, fd_mean_jacobian, fim_bruteforce, fim_mismatch, mc_expected_energy, random_small_scenes,
    random_symbols, FdConfig, McConfig,
};
use nfcrb::scene::{
    cm_factor, fresnel_bounds, isi_margin, lambda_sums, subcarrier_grid, GridConvention, OfdmGrid, Point2D, Scene,
    TargetState, UlaSpec,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 1;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn nfcrb(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nfcrb")).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).expect("utf-8 stdout"),
        String::from_utf8(out.stderr).expect("utf-8 stderr"),
    )
}

fn value_of(report: &str, key: &str) -> Option<String> {
    let prefix = format!("{key} = ");
    report.lines().find_map(|l| l.strip_prefix(&prefix).map(str::to_string))
}

/// Every bound reported by `compute`: conditional, full, exact, FF, NF and
/// the closed-form RCS bound. Relative errors are left out.
fn reported_bounds(report: &str) -> Vec<f64> {
    let mut values = Vec::new();
    for line in report.lines() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        let numeric: &[&str] = match cols.first() {
            Some(&"bound") => &cols[3..5],
            Some(&"approx") => &cols[3..6],
            Some(c) if c.starts_with("alpha_closed_form") => &cols[2..3],
            _ => &[],
        };
        values.extend(numeric.iter().filter_map(|s| s.parse::<f64>().ok()));
    }
    values
}

fn small_scenes() -> Vec<ForwardModel> {
    random_small_scenes(100, SEED).expect("random scenes build")
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, model) in small_scenes().iter().enumerate() {
        let symbols = random_symbols(model, SEED + 1000 + i as u64);
        let fd = fd_mean_jacobian(model, &symbols, &FdConfig::default()).expect("fd jacobian");
        let an = analytic_mean_jacobian(model, &symbols).expect("analytic jacobian");
        for (a, b) in fd.column_iter().zip(an.column_iter()) {
            let scale = b.norm();
            let err = if scale > 0.0 { (a - b).norm() / scale } else { a.norm() };
            worst = worst.max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-6 && secs < 60.0,
        format!("worst column error {worst:.2e} < 1e-6 over 100 scenes in {secs:.1} s"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for (i, model) in small_scenes().iter().enumerate() {
        let symbols = random_symbols(model, SEED + 1000 + i as u64);
        let brute = fim_bruteforce(model, &symbols, &FdConfig::fourth_order()).expect("brute force FIM");
        let fim = fim_total(model, &SymbolModel::Fixed(symbols)).expect("FIM");
        worst = worst.max(fim_mismatch(&brute, fim.matrix(), 1e-5, 1e-12));
    }
    outcome(worst <= 1.0, format!("worst |dF| / (1e-5 |F| + 1e-12) on the normalized scale = {worst:.3} <= 1"))
}

fn criterion_3() -> Outcome {
    let (mut psd_fail, mut block_worst) = (0usize, 0.0f64);
    let mut count = 0;
    for (i, model) in small_scenes().iter().enumerate() {
        for symbols in [SymbolModel::Expected, SymbolModel::Fixed(random_symbols(model, SEED + 1000 + i as u64))] {
            let fim = fim_total(model, &symbols).expect("FIM");
            let f = fim.matrix();
            let eig = f.clone().symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            if (f - f.transpose()).amax() > 1e-12 * f.amax() || lo < -1e-10 * hi {
                psd_fail += 1;
            }
            for q in 0..model.n_targets() {
                let r = ParamIndex::new(ParamFamily::AlphaR, q).flat(model.n_targets());
                let j = ParamIndex::new(ParamFamily::AlphaI, q).flat(model.n_targets());
                let c = f[(r, r)];
                block_worst = block_worst.max((f[(j, j)] - c).abs() / c).max(f[(r, j)].abs() / c);
            }
            count += 1;
        }
    }
    outcome(
        psd_fail == 0 && block_worst < 1e-12,
        format!("{count} FIMs: {psd_fail} not symmetric PSD, worst alpha-block defect {block_worst:.2e} < 1e-12"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let range = rng.random_range(50.0..600.0);
        let angle = rng.random_range(-60.0..60.0);
        for convention in [GridConvention::Centered, GridConvention::Offset] {
            let mut grid = OfdmGrid::new(15e9, 120e3, 16, 8).unwrap();
            grid.convention = convention;
            grid.per_subcarrier_power_w = 0.1;
            let array = UlaSpec::new(32, grid.carrier_wavelength() / 2.0, 0.0).unwrap();
            let target =
                TargetState::new(Point2D::from_polar_deg(angle, range), [0.0, 0.0], Complex64::new(1.0, 0.1)).unwrap();
            let scene = Scene::monostatic(array, vec![target], 3.981e-15).unwrap();
            let model = ForwardModel::new(scene.clone(), grid).unwrap();
            let fim = fim_total(&model, &SymbolModel::Expected).unwrap();
            let exact = crb_conditional(&fim, ParamIndex::new(ParamFamily::AlphaR, 0)).unwrap()
                + crb_conditional(&fim, ParamIndex::new(ParamFamily::AlphaI, 0)).unwrap();
            let g = array_gain(grid.carrier_wavelength(), &element_ranges(&array, target.position)).unwrap().g;
            let closed = crb_alpha_exact(&grid, scene.noise_power_w(), g, g).unwrap();
            worst = worst.max((closed - exact).abs() / exact);
        }
    }
    outcome(worst < 1e-10, format!("worst relative gap {worst:.2e} < 1e-10 over 10 ranges x 2 conventions"))
}

fn criterion_5() -> Outcome {
    let scenes = small_scenes();
    let mut worst = 0.0f64;
    for (i, model) in scenes.iter().enumerate().take(20) {
        let matrix: DMatrix<Complex64> = if i % 2 == 0 {
            model.channel_matrix(0, 1).unwrap().entries
        } else {
            d_channel(model, 0, 1, ParamIndex::new(ParamFamily::ALL[(i / 2) % 6], 0)).unwrap().entries
        };
        let power = model.grid().per_subcarrier_power_w;
        let frobenius: f64 = matrix.iter().map(|z| z.norm_sqr()).sum();
        let est = mc_expected_energy(&matrix, power, &McConfig { n_trials: 100_000, seed: SEED + 100_000 + i as u64 })
            .unwrap();
        let z = (est.estimate - power * frobenius).abs() / est.std_error;
        worst = worst.max(z);
    }
    outcome(
        worst < 3.0,
        format!("worst |estimate - P ||A||_F^2| = {worst:.2} standard errors < 3 (20 matrices, 1e5 trials)"),
    )
}

/// The reduced monostatic scene: N = 64, K = 16, M = 32.
fn reduced_scene() -> ScenarioConfig {
    let mut c = scenario_monostatic_single();
    c.template.n_elements = 64;
    c.grid.n_subcarriers = 16;
    c.grid.n_symbols = 32;
    c.k_values = vec![16];
    c
}

fn far_field_range(c: &ScenarioConfig) -> f64 {
    let aperture = (c.template.n_elements - 1) as f64 * c.template.spacing(&c.grid);
    5.0 * fresnel_bounds(aperture, c.grid.carrier_wavelength()).unwrap().radiative_m
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut c = reduced_scene();
    let r_ff = far_field_range(&c);
    c.quantities = vec![Quantity::Alpha];
    c.sweep_values = vec![r_ff];
    let at_ff = run_sweep(&c, None).unwrap().rows[0].relerr_ff.unwrap();
    c.sweep_values = log_space(50.0, 650.0, 25);
    let sweep = run_sweep(&c, None).unwrap();
    let dominated =
        sweep.rows.iter().filter(|r| matches!((r.relerr_nf, r.relerr_ff), (Some(nf), Some(ff)) if nf <= ff)).count();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        at_ff < 0.05 && dominated == 25 && secs < 300.0,
        format!("FF error {at_ff:.2e} at r = {r_ff:.1} m; NF <= FF at {dominated}/25 points; {secs:.1} s"),
    )
}

fn criterion_7() -> Outcome {
    let mut c = reduced_scene();
    let r_ff = far_field_range(&c);
    c.quantities = vec![Quantity::X, Quantity::Y, Quantity::Vx, Quantity::Vy];
    c.sweep_values = vec![r_ff, 2.0 * r_ff, 3.0 * r_ff];
    let rows = run_sweep(&c, None).unwrap().rows;
    let worst_ff = rows.iter().map(|r| r.relerr_ff.unwrap()).fold(0.0, f64::max);

    let vx_at = |m: usize| {
        let mut c = reduced_scene();
        c.grid.n_symbols = m;
        let scene = c.template.build(&c.grid, None, Some(r_ff)).unwrap();
        let eval = evaluate_point(&scene, &c.grid, SymbolChoice::Expected, c.closed_form).unwrap();
        let approx = eval.approximations.unwrap()[0];
        (eval.report.targets[0].conditional_of(ParamFamily::Vx), approx.vx_ff)
    };
    let (exact_m, cf_m) = vx_at(32);
    let (exact_2m, cf_2m) = vx_at(64);
    let expected = cm_factor(32).unwrap() as f64 / cm_factor(64).unwrap() as f64;
    let cf_gap = ((cf_2m / cf_m) / expected - 1.0).abs();
    let exact_gap = ((exact_2m / exact_m) / expected - 1.0).abs();
    outcome(
        worst_ff < 0.10 && cf_gap < 1e-12 && exact_gap < 0.05,
        format!(
            "worst FF error {worst_ff:.2e} < 10% for x, y, vx, vy at r >= {r_ff:.1} m; M -> 2M: closed form off C_M/C_2M by {cf_gap:.1e}, exact by {exact_gap:.2e} < 5%"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut violations = Vec::new();
    for k in [2usize, 8, 32, 128] {
        let grid = default_grid(k, 256);
        let lc = grid.carrier_wavelength();
        let sums = lambda_sums(&subcarrier_grid(&grid).unwrap().wavelengths).unwrap();
        if !(sums.lambda2 > k as f64 * lc * lc && sums.lambda4 > k as f64 * lc.powi(4)) {
            violations.push(format!("K={k}: sums"));
        }
        let c = scenario_monostatic_single();
        let scene = c.template.build(&grid, Some(64), None).unwrap();
        let wide = ApproxInputs::for_target(&scene, &grid, 0).unwrap();
        let narrow = wide.narrowband(k, lc);
        let eval = |inputs: &ApproxInputs| {
            let a = Approximations::new(inputs, &CorrectionTerms::from_inputs(inputs, DeltaForm::Squared));
            [a.alpha_ff, a.alpha_nf.unwrap(), a.x_ff, a.x_nf, a.y_ff, a.y_nf, a.vx_ff, a.vx_nf, a.vy_ff, a.vy_nf]
        };
        let (w, n) = (eval(&wide), eval(&narrow));
        if w.iter().zip(&n).any(|(w, n)| n <= w || n.is_nan()) {
            violations.push(format!("K={k}: closed forms"));
        }
    }
    outcome(
        violations.is_empty(),
        if violations.is_empty() {
            "Lambda_2 > K lc^2, Lambda_4 > K lc^4 and all 10 closed forms grow under K lc^p for K in {2, 8, 32, 128}"
                .into()
        } else {
            violations.join("; ")
        },
    )
}

fn reduced(name: &str) -> SweepResult {
    run_sweep(&preset(name, PresetScale::Reduced).unwrap(), None).unwrap()
}

fn strictly_monotone(values: &[f64], increasing: bool) -> bool {
    values.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
}

fn criterion_9() -> Outcome {
    let mut failures = Vec::new();
    let mut results = Vec::new();
    for name in ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"] {
        results.push((name, preset(name, PresetScale::Reduced).unwrap(), reduced(name)));
    }
    let series = |r: &SweepResult, k: usize, q: Quantity, field: fn(&nfcrb::experiments::SweepRow) -> Option<f64>| {
        r.series(k, q).iter().map(|row| field(row).unwrap()).collect::<Vec<f64>>()
    };
    // (a) range trend
    let fig1 = &results[0].2;
    for k in [8, 16] {
        if !strictly_monotone(&series(fig1, k, Quantity::Alpha, |r| r.crb_true), true) {
            failures.push(format!("(a) fig1 K={k}"));
        }
    }
    // (b) antenna trend on the monostatic antenna sweeps
    for (name, config, result) in &results[..5] {
        if config.axis != SweepAxis::Antennas || *name == "fig4" {
            continue;
        }
        for &k in &config.k_values {
            for &q in &config.quantities {
                if !strictly_monotone(&series(result, k, q, |r| r.crb_true), false) {
                    failures.push(format!("(b) {name} K={k} {q}"));
                }
            }
        }
    }
    // (c) K trend at every point of every preset
    for (name, config, result) in &results {
        for &v in &config.sweep_values {
            for &q in &config.quantities {
                let by_k: Vec<f64> = config
                    .k_values
                    .iter()
                    .map(|&k| result.rows.iter().find(|r| r.sweep_value == v && r.k == k && r.quantity == q).unwrap())
                    .map(|r| r.crb_true.unwrap())
                    .collect();
                if !by_k.windows(2).all(|w| w[1] <= w[0]) {
                    failures.push(format!("(c) {name} {v} {q}"));
                }
            }
        }
    }
    // (d) bistatic FF error grows with N
    for (name, config, result) in &results[5..] {
        for &k in &config.k_values {
            for &q in &config.quantities {
                if !strictly_monotone(&series(result, k, q, |r| r.relerr_ff), true) {
                    failures.push(format!("(d) {name} K={k} {q}"));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "range/antenna/K trends and bistatic FF-error growth hold on all reduced presets".into()
        } else {
            format!("violations: {}", failures.join(", "))
        },
    )
}

fn criterion_10() -> Outcome {
    let base = ["--set", "scene.n_elements=32", "--set", "grid.K=8", "--set", "grid.M=16"];
    let run = |extra: &[&str]| {
        let mut args = vec!["compute"];
        args.extend_from_slice(&base);
        args.extend_from_slice(extra);
        let (code, out, err) = nfcrb(&args);
        assert_eq!(code, 0, "compute failed: {err}");
        reported_bounds(&out)
    };
    let reference = run(&["--set", "grid.power_w=0.1", "--set", "scene.noise_w=4e-15"]);
    let double_p = run(&["--set", "grid.power_w=0.2", "--set", "scene.noise_w=4e-15"]);
    let double_n = run(&["--set", "grid.power_w=0.1", "--set", "scene.noise_w=8e-15"]);
    let worst_gap = |scaled: &[f64], factor: f64| {
        assert_eq!(scaled.len(), reference.len());
        reference.iter().zip(scaled).map(|(r, s)| (s / (factor * r) - 1.0).abs()).fold(0.0, f64::max)
    };
    let (gap_p, gap_n) = (worst_gap(&double_p, 0.5), worst_gap(&double_n, 2.0));

    let sweep = |power: &str| {
        let (code, out, err) =
            nfcrb(&["sweep", "--preset", "fig3", "--set", "sweep.values=50,100,200", "--set", power]);
        assert_eq!(code, 0, "sweep failed: {err}");
        out.lines()
            .skip(1)
            .flat_map(|l| l.split(',').skip(4).take(3).filter_map(|s| s.parse::<f64>().ok()).collect::<Vec<_>>())
            .collect::<Vec<f64>>()
    };
    let (a, b) = (sweep("grid.power_w=0.1"), sweep("grid.power_w=0.2"));
    let gap_sweep = a.iter().zip(&b).map(|(x, y)| (y / (0.5 * x) - 1.0).abs()).fold(0.0, f64::max);
    let n = reference.len();
    outcome(
        n > 0 && gap_p < 1e-12 && gap_n < 1e-12 && gap_sweep < 1e-12 && a.len() == b.len() && !a.is_empty(),
        format!("{n} compute bounds: 2P gap {gap_p:.1e}, 2 sigma^2 gap {gap_n:.1e}; {} sweep bounds: 2P gap {gap_sweep:.1e}", a.len()),
    )
}

fn criterion_11(full_report: &str) -> Outcome {
    let (code, out, err) = nfcrb(&[
        "compute",
        "--set",
        "scene.n_elements=16",
        "--set",
        "grid.K=4",
        "--set",
        "grid.M=4",
        "--set",
        "scene.targets=2",
        "--set",
        "target.0.range_m=50",
        "--set",
        "target.1.angle_deg=-30",
        "--set",
        "target.1.range_m=5000",
    ]);
    assert_eq!(code, 0, "compute failed: {err}");
    let flagged = value_of(&out, "isi_ok").as_deref() == Some("false");
    let spread = value_of(&out, "isi_delay_spread_s").unwrap_or_default();
    let c = scenario_monostatic_single();
    let scene = c.template.build(&c.grid, None, None).unwrap();
    let margin = isi_margin(&scene, &c.grid);
    let cli_ok = value_of(full_report, "isi_ok").as_deref() == Some("true");
    outcome(
        flagged && margin.ok && cli_ok,
        format!(
            "50 m + 5 km scene flagged (spread {spread} s); monostatic scene passes (spread {:.2e} s < cp {:.2e} s)",
            margin.delay_spread_s, margin.cp_s
        ),
    )
}

fn criterion_12() -> (Outcome, String) {
    let start = Instant::now();
    let (code, out, err) = nfcrb(&["compute"]);
    let secs = start.elapsed().as_secs_f64();
    let finite = !reported_bounds(&out).is_empty() && reported_bounds(&out).iter().all(|v| v.is_finite());
    let psd = value_of(&out, "fim_symmetric_psd").as_deref() == Some("true");
    let shape = ["scene.n_elements = 256", "grid.K = 128", "grid.M = 256", "scene.targets = 1"]
        .iter()
        .all(|s| out.contains(&format!("# {s}\n")));
    let o = outcome(
        code == 0 && finite && psd && shape && secs < 300.0,
        format!(
            "N=256, K=128, M=256, Q=1 compute in {secs:.1} s (exit {code}); finite bounds {finite}; PSD {psd}{err}"
        ),
    );
    (o, out)
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n, name, o| results.push((n, name, o));
    record(1, "derivative correctness", criterion_1());
    record(2, "FIM oracle equivalence", criterion_2());
    record(3, "Slepian-Bangs structure", criterion_3());
    record(4, "closed-form RCS identity", criterion_4());
    record(5, "expectation oracle", criterion_5());
    record(6, "RCS regime behavior", criterion_6());
    record(7, "velocity/location far field", criterion_7());
    record(8, "wide-band gain", criterion_8());
    record(9, "figure trends", criterion_9());
    record(10, "scaling laws", criterion_10());
    let (c12, full_report) = criterion_12();
    record(11, "ISI guard", criterion_11(&full_report));
    record(12, "full-scale smoke run", c12);

    results.sort_by_key(|(n, _, _)| *n);
    let mut failed = 0;
    for (n, name, o) in &results {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {status} {name}: {}", o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
