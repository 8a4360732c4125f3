//! Oracle suite behind `nfcrb validate`.

use std::time::Instant;

use nfcrb::closedform::{array_gain, crb_alpha_exact, element_ranges};
use nfcrb::derivatives::{d_channel, ParamFamily, ParamIndex};
use nfcrb::fim::{crb_conditional, fim_total, SymbolModel};
use nfcrb::model::ForwardModel;
use nfcrb::oracle::{
    analytic_mean_jacobian, fd_mean_jacobian, fim_bruteforce, max_column_error, mc_expected_energy,
    random_small_scenes, random_symbols, FdConfig, McConfig, RNG_ALGORITHM,
};
use nfcrb::scene::{GridConvention, OfdmGrid, Point2D, Scene, TargetState, UlaSpec};
use nfcrb::Result;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Resolved, ValidateScale};
use crate::CliError;

pub const DERIVATIVE_TOL: f64 = 1e-6;
pub const FIM_RTOL: f64 = 1e-5;
pub const FIM_ATOL: f64 = 1e-12;
pub const IDENTITY_TOL: f64 = 1e-10;
pub const MC_SIGMAS: f64 = 3.0;

struct Sizes {
    scenes: usize,
    mc_matrices: usize,
    mc_trials: usize,
    identity_ranges: usize,
}

fn sizes(scale: ValidateScale) -> Sizes {
    match scale {
        ValidateScale::Ci => Sizes { scenes: 100, mc_matrices: 20, mc_trials: 100_000, identity_ranges: 10 },
        ValidateScale::Full => Sizes { scenes: 1000, mc_matrices: 100, mc_trials: 1_000_000, identity_ranges: 100 },
    }
}

struct Check {
    name: &'static str,
    worst: f64,
    threshold: f64,
    cases: usize,
    failures: usize,
    seconds: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.failures == 0
    }

    fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "passed": self.passed(),
            "cases": self.cases,
            "failures": self.failures,
            "worst": self.worst,
            "threshold": self.threshold,
            "seconds": self.seconds,
        })
    }
}

/// Runs `metric` over every case; a case fails when its metric exceeds
/// `threshold` or it returns an error.
fn check<T: Sync>(
    name: &'static str,
    threshold: f64,
    cases: &[T],
    metric: impl Fn(usize, &T) -> Result<f64> + Sync,
) -> Check {
    let start = Instant::now();
    let values: Vec<Option<f64>> = cases.par_iter().enumerate().map(|(i, c)| metric(i, c).ok()).collect();
    let failures = values.iter().filter(|v| !matches!(v, Some(x) if *x <= threshold)).count();
    let worst = values.iter().flatten().fold(0.0, |a: f64, b| a.max(*b));
    Check { name, worst, threshold, cases: cases.len(), failures, seconds: start.elapsed().as_secs_f64() }
}

fn derivative_error(model: &ForwardModel, seed: u64) -> Result<f64> {
    let symbols = random_symbols(model, seed);
    let fd = fd_mean_jacobian(model, &symbols, &FdConfig::default())?;
    let analytic = analytic_mean_jacobian(model, &symbols)?;
    Ok(max_column_error(&fd, &analytic))
}

fn bruteforce_mismatch(model: &ForwardModel, seed: u64) -> Result<f64> {
    let symbols = random_symbols(model, seed);
    let brute = fim_bruteforce(model, &symbols, &FdConfig::fourth_order())?;
    let fim = fim_total(model, &SymbolModel::Fixed(symbols))?;
    Ok(nfcrb::oracle::fim_mismatch(&brute, fim.matrix(), FIM_RTOL, FIM_ATOL))
}

/// Worst of: asymmetry, negative eigenvalue and RCS-block defects, each
/// normalized by its tolerance.
fn structure_defect(model: &ForwardModel, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for symbols in [SymbolModel::Expected, SymbolModel::Fixed(random_symbols(model, seed))] {
        let fim = fim_total(model, &symbols)?;
        let f = fim.matrix();
        let asym = (f - f.transpose()).amax() / (1e-12 * f.amax());
        let ev = fim.eigenvalues();
        let neg = (-ev[0]).max(0.0) / (1e-10 * ev[ev.len() - 1]);
        worst = worst.max(asym).max(neg);
        for q in 0..fim.n_targets() {
            let r = ParamIndex::new(ParamFamily::AlphaR, q);
            let i = ParamIndex::new(ParamFamily::AlphaI, q);
            let c = fim.entry(r, r);
            let diag = (fim.entry(i, i) - c).abs() / (1e-12 * c);
            let cross = fim.entry(r, i).abs() / (1e-12 * c);
            worst = worst.max(diag).max(cross);
        }
    }
    Ok(worst)
}

/// Static monostatic single-target scenes at random ranges in [50, 600] m.
pub fn identity_scenes(count: usize, seed: u64) -> Result<Vec<ForwardModel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut models = Vec::with_capacity(2 * count);
    for _ in 0..count {
        let range = rng.random_range(50.0..600.0);
        let angle = rng.random_range(-60.0..60.0);
        let rcs = Complex64::new(rng.random_range(0.2..2.0), rng.random_range(-1.0..1.0));
        for convention in [GridConvention::Centered, GridConvention::Offset] {
            let mut grid = OfdmGrid::new(15e9, 120e3, 8, 4)?;
            grid.convention = convention;
            grid.per_subcarrier_power_w = 0.1;
            let array = UlaSpec::new(16, grid.carrier_wavelength() / 2.0, 0.0)?;
            let target = TargetState::new(Point2D::from_polar_deg(angle, range), [0.0, 0.0], rcs)?;
            let scene = Scene::monostatic(array, vec![target], 3.981e-15)?;
            models.push(ForwardModel::new(scene, grid)?);
        }
    }
    Ok(models)
}

pub fn identity_error(model: &ForwardModel) -> Result<f64> {
    let fim = fim_total(model, &SymbolModel::Expected)?;
    let exact = crb_conditional(&fim, ParamIndex::new(ParamFamily::AlphaR, 0))?
        + crb_conditional(&fim, ParamIndex::new(ParamFamily::AlphaI, 0))?;
    let scene = model.scene();
    let target = scene.targets()[0].position;
    let lambda_c = model.grid().carrier_wavelength();
    let g_tx = array_gain(lambda_c, &element_ranges(scene.tx(), target))?.g;
    let g_rx = array_gain(lambda_c, &element_ranges(scene.rx(), target))?.g;
    let closed = crb_alpha_exact(model.grid(), scene.noise_power_w(), g_tx, g_rx)?;
    Ok((closed - exact).abs() / exact)
}

fn mc_z_score(models: &[ForwardModel], i: usize, seed: u64, trials: usize) -> Result<f64> {
    let model = &models[i % models.len()];
    // alternate between a channel matrix and one of its derivatives
    let matrix = if i.is_multiple_of(2) {
        model.channel_matrix(0, 1)?.entries
    } else {
        let family = ParamFamily::ALL[(i / 2) % 6];
        d_channel(model, 0, 1, ParamIndex::new(family, 0))?.entries
    };
    let est = mc_expected_energy(&matrix, model.grid().per_subcarrier_power_w, &McConfig { n_trials: trials, seed })?;
    Ok(est.z_score())
}

fn run_checks(seed: u64, scale: ValidateScale) -> std::result::Result<Vec<Check>, CliError> {
    let size = sizes(scale);
    let scenes = random_small_scenes(size.scenes, seed).map_err(|e| CliError::Numerical(e.to_string()))?;
    let identity =
        identity_scenes(size.identity_ranges, seed.wrapping_add(1)).map_err(|e| CliError::Numerical(e.to_string()))?;
    let symbol_seed = |i: usize| seed.wrapping_add(1_000 + i as u64);
    let mc_cases: Vec<usize> = (0..size.mc_matrices).collect();
    Ok(vec![
        check("derivatives", DERIVATIVE_TOL, &scenes, |i, m| derivative_error(m, symbol_seed(i))),
        check("fim_bruteforce", 1.0, &scenes, |i, m| bruteforce_mismatch(m, symbol_seed(i))),
        check("fim_structure", 1.0, &scenes, |i, m| structure_defect(m, symbol_seed(i))),
        check("alpha_identity", IDENTITY_TOL, &identity, |_, m| identity_error(m)),
        check("expectation_mc", MC_SIGMAS, &mc_cases, |_, &i| {
            mc_z_score(&scenes, i, seed.wrapping_add(100_000 + i as u64), size.mc_trials)
        }),
    ])
}

pub fn cmd_validate(resolved: &Resolved) -> std::result::Result<(), CliError> {
    eprint!("{}", resolved.echo_block());
    let start = Instant::now();
    let scale = resolved.validate_scale;
    let checks = run_checks(resolved.seed, scale)?;
    let passed = checks.iter().all(Check::passed);
    let summary = json!({
        "scale": scale.to_string(),
        "seed": resolved.seed,
        "rng": RNG_ALGORITHM,
        "passed": passed,
        "seconds": start.elapsed().as_secs_f64(),
        "checks": checks.iter().map(Check::to_json).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
        Err(CliError::Validation(format!("validation failed: {}", failed.join(", "))))
    }
}
