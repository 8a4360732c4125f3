//! Independent numerical checks of the analytic machinery: finite-difference
//! Jacobians of the stacked mean, Monte-Carlo estimates of the symbol
//! expectation, and a brute-force FIM built from the numerical Jacobian.
//!
//! Random draws use ChaCha8 seeded from a single `u64`; Monte-Carlo trials
//! are split into fixed-size chunks, each on its own ChaCha stream, so
//! results do not depend on the number of worker threads.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::derivatives::{d_mean, param_layout, ParamFamily, ParamIndex};
use crate::error::{Error, Result};
use crate::fim::SymbolBlock;
use crate::linalg::CompensatedSum;
use crate::model::{ForwardModel, Side};
use crate::scene::{OfdmGrid, Point2D, Scene, TargetState, UlaSpec};

/// Name of the generator behind every seeded draw.
pub const RNG_ALGORITHM: &str = "ChaCha8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FdScheme {
    /// `(f(h) - f(-h)) / 2h`
    #[default]
    Central,
    /// `(f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / 12h`
    FivePoint,
}

/// Finite-difference step policy.
///
/// Geometric steps are sized by the phase change they cause: a position step
/// moves the two-way path by at most `2h`, so `h = delta * lambda_min / 2`
/// changes every phase by at most `delta` cycles. Velocity enters through
/// `m T_sym`, so its step is further divided by `M T_sym`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    /// Largest phase change of a geometric step, in cycles.
    pub phase_step_cycles: f64,
    /// RCS step relative to `max(1, |alpha|)`. The mean is linear in the RCS,
    /// so a large step costs no truncation error and keeps rounding small.
    pub rcs_step_relative: f64,
    pub scheme: FdScheme,
    /// Step halvings attempted when a perturbation would cross `y = 0`.
    pub max_retries: u32,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { phase_step_cycles: 1e-4, rcs_step_relative: 1.0, scheme: FdScheme::Central, max_retries: 4 }
    }
}

impl FdConfig {
    /// Fourth-order stencil with a step balancing truncation against the
    /// rounding of absolute phases; used where small FIM couplings matter.
    pub fn fourth_order() -> Self {
        Self { phase_step_cycles: 3e-3, scheme: FdScheme::FivePoint, ..Self::default() }
    }

    pub fn step(&self, model: &ForwardModel, param: ParamIndex) -> f64 {
        let lambda_min = model.subcarriers().wavelengths.iter().copied().fold(f64::INFINITY, f64::min);
        let target = &model.scene().targets()[param.target];
        let slow_time = model.n_symbols() as f64 * model.t_sym();
        match param.family {
            ParamFamily::X | ParamFamily::Y => self.phase_step_cycles * lambda_min / 2.0,
            ParamFamily::Vx | ParamFamily::Vy => self.phase_step_cycles * lambda_min / (2.0 * slow_time),
            ParamFamily::AlphaR | ParamFamily::AlphaI => self.rcs_step_relative * target.rcs.norm().max(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.phase_step_cycles > 0.0) || !(self.rcs_step_relative > 0.0) {
            return Err(Error::domain("finite-difference steps must be positive"));
        }
        Ok(())
    }
}

/// Copy of the model with one parameter shifted by `delta`.
pub fn perturbed_model(model: &ForwardModel, param: ParamIndex, delta: f64) -> Result<ForwardModel> {
    let mut targets = model.scene().targets().to_vec();
    let t = targets
        .get_mut(param.target)
        .ok_or_else(|| Error::Contract(format!("parameter {param} refers to a missing target")))?;
    match param.family {
        ParamFamily::X => t.position.x += delta,
        ParamFamily::Y => {
            let y = t.position.y + delta;
            if y == 0.0 || y.signum() != t.position.y.signum() {
                return Err(Error::domain(format!("step on {param} crosses the array line")));
            }
            t.position.y = y;
        }
        ParamFamily::Vx => t.velocity_x += delta,
        ParamFamily::Vy => t.velocity_y += delta,
        ParamFamily::AlphaR => t.rcs.re += delta,
        ParamFamily::AlphaI => t.rcs.im += delta,
    }
    ForwardModel::new(model.scene().with_targets(targets)?, *model.grid())
}

/// Row of `(n_r, m, k)` in the stacked mean, `m` 1-based.
pub fn stacked_row(model: &ForwardModel, n_r: usize, m: usize, k: usize) -> usize {
    (k * model.n_symbols() + (m - 1)) * model.n_elements(Side::Rx) + n_r
}

/// All `mu_{k,m}` stacked as in [`stacked_row`].
pub fn stacked_mean(model: &ForwardModel, symbols: &SymbolBlock) -> Result<DVector<Complex64>> {
    let n_r = model.n_elements(Side::Rx);
    let mut out = DVector::zeros(n_r * model.n_symbols() * model.n_subcarriers());
    for k in 0..model.n_subcarriers() {
        for m in 1..=model.n_symbols() {
            let mu = model.mean_signal(k, m, symbols.get(k, m))?;
            let start = stacked_row(model, 0, m, k);
            out.rows_mut(start, n_r).copy_from(&mu);
        }
    }
    Ok(out)
}

fn fd_column(
    model: &ForwardModel,
    symbols: &SymbolBlock,
    param: ParamIndex,
    fd: &FdConfig,
) -> Result<DVector<Complex64>> {
    let mut h = fd.step(model, param);
    let mut last_err = None;
    for _ in 0..=fd.max_retries {
        let at =
            |s: f64| -> Result<DVector<Complex64>> { stacked_mean(&perturbed_model(model, param, s * h)?, symbols) };
        let attempt = match fd.scheme {
            FdScheme::Central => at(1.0).and_then(|p| Ok((p - at(-1.0)?) / Complex64::new(2.0 * h, 0.0))),
            FdScheme::FivePoint => (|| {
                let num = (at(-2.0)? - at(2.0)?) + (at(1.0)? - at(-1.0)?) * Complex64::new(8.0, 0.0);
                Ok(num / Complex64::new(12.0 * h, 0.0))
            })(),
        };
        match attempt {
            Ok(col) => return Ok(col),
            Err(e @ Error::Domain(_)) => {
                last_err = Some(e);
                h *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt was made"))
}

/// Finite-difference Jacobian of the stacked mean, one column per parameter.
pub fn fd_mean_jacobian(model: &ForwardModel, symbols: &SymbolBlock, fd: &FdConfig) -> Result<DMatrix<Complex64>> {
    fd.validate()?;
    let layout = param_layout(model.n_targets());
    let columns: Vec<DVector<Complex64>> =
        layout.par_iter().map(|p| fd_column(model, symbols, *p, fd)).collect::<Result<_>>()?;
    Ok(DMatrix::from_columns(&columns))
}

/// Analytic Jacobian of the stacked mean in the same layout.
pub fn analytic_mean_jacobian(model: &ForwardModel, symbols: &SymbolBlock) -> Result<DMatrix<Complex64>> {
    let layout = param_layout(model.n_targets());
    let n_r = model.n_elements(Side::Rx);
    let rows = n_r * model.n_symbols() * model.n_subcarriers();
    let mut out = DMatrix::zeros(rows, layout.len());
    for (c, p) in layout.iter().enumerate() {
        for k in 0..model.n_subcarriers() {
            for m in 1..=model.n_symbols() {
                let col = d_mean(model, k, m, symbols.get(k, m), *p)?;
                out.view_mut((stacked_row(model, 0, m, k), c), (n_r, 1)).copy_from(&col);
            }
        }
    }
    Ok(out)
}

/// `(2 / sigma^2) Re(J^H J)` from the finite-difference Jacobian.
pub fn fim_bruteforce(model: &ForwardModel, symbols: &SymbolBlock, fd: &FdConfig) -> Result<DMatrix<f64>> {
    let j = fd_mean_jacobian(model, symbols, fd)?;
    let scale = 2.0 / model.scene().noise_power_w();
    let n = j.ncols();
    let mut out = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let re: CompensatedSum =
                j.column(a).iter().zip(j.column(b).iter()).map(|(x, y)| (x.conj() * y).re).collect();
            out[(a, b)] = scale * re.value();
            out[(b, a)] = out[(a, b)];
        }
    }
    Ok(out)
}

/// Circularly symmetric complex Gaussian sample with `E|z|^2 = power`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let s = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Random symbols with `E{x x^H} = P I` for every subcarrier and slot.
pub fn random_symbols(model: &ForwardModel, seed: u64) -> SymbolBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_t = model.n_elements(Side::Tx);
    let p = model.grid().per_subcarrier_power_w;
    SymbolBlock::from_fn(model.n_subcarriers(), model.n_symbols(), |_, _| {
        DVector::from_fn(n_t, |_, _| complex_gaussian(&mut rng, p))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub n_trials: usize,
    pub seed: u64,
}

impl McConfig {
    const CHUNK: usize = 4096;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    /// Sample mean of `||A x||^2`.
    pub estimate: f64,
    /// `P ||A||_F^2`
    pub reference: f64,
    pub std_error: f64,
}

impl McEstimate {
    /// Distance between estimate and reference in standard errors.
    pub fn z_score(&self) -> f64 {
        let diff = (self.estimate - self.reference).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.std_error
        }
    }
}

/// Monte-Carlo estimate of `E{||A x||^2}` for `x ~ CN(0, P I)`.
pub fn mc_expected_energy(matrix: &DMatrix<Complex64>, power: f64, mc: &McConfig) -> Result<McEstimate> {
    if mc.n_trials == 0 {
        return Err(Error::domain("Monte-Carlo needs at least one trial"));
    }
    if !(power >= 0.0) {
        return Err(Error::domain(format!("power must be non-negative, got {power}")));
    }
    let n_chunks = mc.n_trials.div_ceil(McConfig::CHUNK);
    let chunks: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
            rng.set_stream(c as u64);
            let trials = McConfig::CHUNK.min(mc.n_trials - c * McConfig::CHUNK);
            let mut sum = CompensatedSum::default();
            let mut sq = CompensatedSum::default();
            for _ in 0..trials {
                let x = DVector::from_fn(matrix.ncols(), |_, _| complex_gaussian(&mut rng, power));
                let e = (matrix * x).norm_squared();
                sum.add(e);
                sq.add(e * e);
            }
            (sum.value(), sq.value())
        })
        .collect();
    let mut sum = CompensatedSum::default();
    let mut sq = CompensatedSum::default();
    for (s, q) in chunks {
        sum.add(s);
        sq.add(q);
    }
    let n = mc.n_trials as f64;
    let mean = sum.value() / n;
    let var = if mc.n_trials > 1 { ((sq.value() - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    let reference = power * matrix.norm_squared();
    Ok(McEstimate { estimate: mean, reference, std_error: (var / n).sqrt() })
}

/// Random small scene for oracle checks: up to 8 elements per array, `K, M <= 4`,
/// one or two targets between 5 and 200 m, half-wavelength spacing at the carrier.
pub fn random_small_scene<R: Rng + ?Sized>(rng: &mut R) -> Result<ForwardModel> {
    let fc = [3.5e9, 15e9, 28e9][rng.random_range(0..3)];
    let df = [30e3, 60e3, 120e3, 240e3][rng.random_range(0..4)];
    let mut grid = OfdmGrid::new(fc, df, rng.random_range(1..=4), rng.random_range(1..=4))?;
    grid.per_subcarrier_power_w = 10f64.powf(rng.random_range(-3.0..0.0));
    let spacing = grid.carrier_wavelength() / 2.0;
    let tx = UlaSpec::new(rng.random_range(1..=8), spacing, 0.0)?;
    let rx = if rng.random_bool(0.5) {
        tx
    } else {
        UlaSpec::new(rng.random_range(1..=8), spacing, rng.random_range(-3.0..3.0))?
    };
    let n_targets = rng.random_range(1..=2);
    let mut targets = Vec::with_capacity(n_targets);
    for q in 0..n_targets {
        // keep two targets apart in angle so they stay resolvable
        let angle = rng.random_range(-60.0..-5.0) + 65.0 * q as f64;
        let range = rng.random_range(5.0..200.0);
        let v = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
        let rcs = Complex64::from_polar(rng.random_range(0.1..2.0), rng.random_range(0.0..std::f64::consts::TAU));
        targets.push(TargetState::new(Point2D::from_polar_deg(angle, range), v, rcs)?);
    }
    let noise = 10f64.powf(rng.random_range(-16.0..-12.0));
    ForwardModel::new(Scene::new(tx, rx, targets, noise)?, grid)
}

/// Seeded sequence of random small scenes.
pub fn random_small_scenes(count: usize, seed: u64) -> Result<Vec<ForwardModel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_small_scene(&mut rng)).collect()
}

/// Worst column-wise relative error `||fd - analytic|| / ||analytic||`
/// (columns with zero analytic norm compare the FD norm against zero).
pub fn max_column_error(fd: &DMatrix<Complex64>, analytic: &DMatrix<Complex64>) -> f64 {
    fd.column_iter()
        .zip(analytic.column_iter())
        .map(|(a, b)| {
            let diff = (a - b).norm();
            let scale = b.norm();
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        })
        .fold(0.0, f64::max)
}

/// Worst entry-wise `|a - b| / (rtol |b| + atol)` after scaling both matrices
/// by `1 / sqrt(b_ii b_jj)`; values up to 1 mean agreement.
///
/// Scaling makes `atol` dimensionless, so structurally zero entries (such as
/// the real/imaginary RCS cross term) are judged against the size of the
/// diagonal rather than against the physical units of the FIM.
pub fn fim_mismatch(a: &DMatrix<f64>, b: &DMatrix<f64>, rtol: f64, atol: f64) -> f64 {
    let n = b.nrows();
    let s: Vec<f64> = (0..n).map(|i| b[(i, i)].abs().sqrt()).collect();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let scale = s[i] * s[j];
            let (x, y) = if scale > 0.0 { (a[(i, j)] / scale, b[(i, j)] / scale) } else { (a[(i, j)], b[(i, j)]) };
            worst = worst.max((x - y).abs() / (rtol * y.abs() + atol));
        }
    }
    worst
}
