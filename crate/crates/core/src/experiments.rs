//! Scenario templates and parameter sweeps producing bound tables.
//!
//! Each sweep point evaluates the exact bounds through the FIM and the
//! single-target closed forms per target. Multi-target rows report totals:
//! bounds and relative errors are summed over targets.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::closedform::{relative_error, ApproxInputs, Approximations, CorrectionTerms, DeltaForm};
use crate::error::{Error, Result};
use crate::fim::{fim_total, CrbReport, Fim, SymbolModel};
use crate::model::ForwardModel;
use crate::oracle::random_symbols;
use crate::scene::{dbm_to_watts, isi_margin, OfdmGrid, Point2D, Scene, TargetState, UlaSpec};

pub const CSV_HEADER: &str =
    "sweep_var,sweep_value,K,parameter,crb_true,crb_ff,crb_nf,relerr_ff,relerr_nf,cond_number,flags";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Range,
    Antennas,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Range => "range",
            SweepAxis::Antennas => "antennas",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "range" => Ok(SweepAxis::Range),
            "antennas" => Ok(SweepAxis::Antennas),
            other => Err(Error::domain(format!("unknown sweep axis {other:?}, expected range or antennas"))),
        }
    }
}

/// Which diagonal of the information is reported as the exact bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundMode {
    /// `1 / F_ii`, every other parameter known.
    #[default]
    Conditional,
    /// `[F^{-1}]_ii`, all parameters jointly unknown.
    Full,
}

impl fmt::Display for BoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundMode::Conditional => "conditional",
            BoundMode::Full => "full",
        })
    }
}

impl FromStr for BoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional" => Ok(BoundMode::Conditional),
            "full" => Ok(BoundMode::Full),
            other => Err(Error::domain(format!("unknown bound mode {other:?}, expected conditional or full"))),
        }
    }
}

/// Reported quantity; `Alpha` is `CRB_alpha_R + CRB_alpha_I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    Alpha,
    X,
    Y,
    Vx,
    Vy,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [Quantity::Alpha, Quantity::X, Quantity::Y, Quantity::Vx, Quantity::Vy];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Alpha => "alpha",
            Quantity::X => "x",
            Quantity::Y => "y",
            Quantity::Vx => "vx",
            Quantity::Vy => "vy",
        }
    }

    /// Entry of an `[x, y, vx, vy, alpha_r, alpha_i]` bound array; the RCS
    /// bound sums its real and imaginary parts.
    pub fn pick(self, b: &[f64; 6]) -> f64 {
        match self {
            Quantity::Alpha => b[4] + b[5],
            Quantity::X => b[0],
            Quantity::Y => b[1],
            Quantity::Vx => b[2],
            Quantity::Vy => b[3],
        }
    }

    fn approximations(self, a: &Approximations) -> (f64, Option<f64>) {
        match self {
            Quantity::Alpha => (a.alpha_ff, a.alpha_nf),
            Quantity::X => (a.x_ff, Some(a.x_nf)),
            Quantity::Y => (a.y_ff, Some(a.y_nf)),
            Quantity::Vx => (a.vx_ff, Some(a.vx_nf)),
            Quantity::Vy => (a.vy_ff, Some(a.vy_nf)),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown parameter {s:?}, expected one of alpha, x, y, vx, vy")))
    }
}

/// Target placed by broadside angle and range from the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpec {
    pub angle_deg: f64,
    pub range_m: f64,
    pub velocity: [f64; 2],
    pub rcs: Complex64,
}

impl TargetSpec {
    pub fn state(&self) -> Result<TargetState> {
        TargetState::new(Point2D::from_polar_deg(self.angle_deg, self.range_m), self.velocity, self.rcs)
    }
}

/// Arrays and targets with the element count left open for antenna sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTemplate {
    pub n_elements: usize,
    /// Element spacing; `None` means half the carrier wavelength.
    pub spacing_m: Option<f64>,
    pub tx_center_x: f64,
    pub rx_center_x: f64,
    pub targets: Vec<TargetSpec>,
    pub noise_w: f64,
}

impl SceneTemplate {
    pub fn spacing(&self, grid: &OfdmGrid) -> f64 {
        self.spacing_m.unwrap_or(grid.carrier_wavelength() / 2.0)
    }

    /// Scene with optional element-count and range overrides (range applies to every target).
    pub fn build(&self, grid: &OfdmGrid, n_elements: Option<usize>, range_m: Option<f64>) -> Result<Scene> {
        let n = n_elements.unwrap_or(self.n_elements);
        let d = self.spacing(grid);
        let tx = UlaSpec::new(n, d, self.tx_center_x)?;
        let rx = UlaSpec::new(n, d, self.rx_center_x)?;
        let targets = self
            .targets
            .iter()
            .map(|t| TargetSpec { range_m: range_m.unwrap_or(t.range_m), ..*t }.state())
            .collect::<Result<Vec<_>>>()?;
        Scene::new(tx, rx, targets, self.noise_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormOptions {
    pub delta_form: DeltaForm,
    pub psi_x: f64,
    pub psi_y: f64,
}

impl Default for ClosedFormOptions {
    fn default() -> Self {
        Self { delta_form: DeltaForm::Squared, psi_x: 1.0, psi_y: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymbolChoice {
    #[default]
    Expected,
    /// Random symbols drawn from the seed.
    Fixed { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub template: SceneTemplate,
    /// Base grid; `n_subcarriers` is replaced by each entry of `k_values`.
    pub grid: OfdmGrid,
    pub axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub k_values: Vec<usize>,
    pub quantities: Vec<Quantity>,
    pub bound_mode: BoundMode,
    pub closed_form: Option<ClosedFormOptions>,
    pub symbols: SymbolChoice,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() || self.k_values.is_empty() || self.quantities.is_empty() {
            return Err(Error::domain("sweep needs sweep values, K values and parameters"));
        }
        if self.sweep_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("sweep values must be strictly increasing"));
        }
        if self.k_values.contains(&0) {
            return Err(Error::domain("K values must be positive"));
        }
        if self.axis == SweepAxis::Antennas && self.sweep_values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
            return Err(Error::domain("antenna sweep values must be positive integers"));
        }
        if self.axis == SweepAxis::Range && self.sweep_values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::domain("range sweep values must be positive"));
        }
        for &k in &self.k_values {
            OfdmGrid { n_subcarriers: k, ..self.grid }.validate()?;
        }
        Ok(())
    }

    /// Grid and scene for one sweep point.
    pub fn point(&self, sweep_value: f64, k: usize) -> Result<(Scene, OfdmGrid)> {
        let grid = OfdmGrid { n_subcarriers: k, ..self.grid };
        let scene = match self.axis {
            SweepAxis::Range => self.template.build(&grid, None, Some(sweep_value))?,
            SweepAxis::Antennas => self.template.build(&grid, Some(sweep_value as usize), None)?,
        };
        Ok((scene, grid))
    }
}

/// Exact report and per-target closed forms for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEvaluation {
    pub fim: Fim,
    pub report: CrbReport,
    /// One entry per target; `None` when closed forms are disabled.
    pub approximations: Option<Vec<Approximations>>,
    pub isi_ok: bool,
}

pub fn evaluate_point(
    scene: &Scene,
    grid: &OfdmGrid,
    symbols: SymbolChoice,
    closed_form: Option<ClosedFormOptions>,
) -> Result<PointEvaluation> {
    let model = ForwardModel::new(scene.clone(), *grid)?;
    let symbol_model = match symbols {
        SymbolChoice::Expected => SymbolModel::Expected,
        SymbolChoice::Fixed { seed } => SymbolModel::Fixed(random_symbols(&model, seed)),
    };
    let fim = fim_total(&model, &symbol_model)?;
    let report = CrbReport::from_fim(&fim)?;
    let approximations = closed_form
        .map(|opts| {
            (0..scene.n_targets())
                .map(|q| {
                    let inputs = ApproxInputs::for_target(scene, grid, q)?;
                    let corrections =
                        CorrectionTerms::from_inputs(&inputs, opts.delta_form).with_psi(opts.psi_x, opts.psi_y);
                    Ok(Approximations::new(&inputs, &corrections))
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    Ok(PointEvaluation { fim, report, approximations, isi_ok: isi_margin(scene, grid).ok })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub k: usize,
    pub quantity: Quantity,
    pub crb_true: Option<f64>,
    pub crb_ff: Option<f64>,
    pub crb_nf: Option<f64>,
    pub relerr_ff: Option<f64>,
    pub relerr_nf: Option<f64>,
    pub cond_number: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn sum_options(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    values.into_iter().try_fold(0.0, |acc, v| v.map(|x| acc + x))
}

fn rows_for_point(config: &ScenarioConfig, sweep_value: f64, k: usize) -> Vec<SweepRow> {
    let blank = |quantity, flags: Vec<String>| SweepRow {
        sweep_value,
        k,
        quantity,
        crb_true: None,
        crb_ff: None,
        crb_nf: None,
        relerr_ff: None,
        relerr_nf: None,
        cond_number: None,
        flags,
    };
    let evaluated = config
        .point(sweep_value, k)
        .and_then(|(scene, grid)| evaluate_point(&scene, &grid, config.symbols, config.closed_form));
    let eval = match evaluated {
        Ok(e) => e,
        Err(e) => {
            let flag = format!("error={}", sanitize(&e.to_string()));
            return config.quantities.iter().map(|q| blank(*q, vec![flag.clone()])).collect();
        }
    };

    let mut flags = Vec::new();
    if !eval.isi_ok {
        flags.push("isi".to_string());
    }
    if eval.report.near_singular {
        flags.push("near_singular".to_string());
    }
    let singular_flag = eval.report.singular.as_ref().map(|names| format!("error=singular FIM ({})", names.join(" ")));

    config
        .quantities
        .iter()
        .map(|&quantity| {
            let mut row_flags = flags.clone();
            let per_target: Vec<Option<f64>> = eval
                .report
                .targets
                .iter()
                .map(|t| match config.bound_mode {
                    BoundMode::Conditional => Some(quantity.pick(&t.conditional)),
                    BoundMode::Full => t.full.as_ref().map(|b| quantity.pick(b)),
                })
                .collect();
            if config.bound_mode == BoundMode::Full {
                if let Some(f) = &singular_flag {
                    row_flags.push(sanitize(f));
                }
            }
            let crb_true = sum_options(per_target.iter().copied());
            let mut row = blank(quantity, row_flags);
            row.crb_true = crb_true;
            row.cond_number = Some(eval.report.condition_number);
            if let Some(approx) = &eval.approximations {
                let pairs: Vec<(f64, Option<f64>)> = approx.iter().map(|a| quantity.approximations(a)).collect();
                row.crb_ff = Some(pairs.iter().map(|p| p.0).sum());
                row.crb_nf = sum_options(pairs.iter().map(|p| p.1));
                let errors = |pick: &dyn Fn(&(f64, Option<f64>)) -> Option<f64>| {
                    sum_options(pairs.iter().zip(&per_target).map(|(p, exact)| match (pick(p), exact) {
                        (Some(a), Some(e)) => relative_error(a, *e).ok(),
                        _ => None,
                    }))
                };
                row.relerr_ff = errors(&|p| Some(p.0));
                row.relerr_nf = errors(&|p| p.1);
            }
            row
        })
        .collect()
}

fn sanitize(s: &str) -> String {
    s.replace([',', ';', '\n', '\r', '"'], " ")
}

/// Evaluates every `(sweep value, K)` point. Points run in parallel on a pool
/// of `workers` threads (all cores when `None`); rows come out sorted by
/// sweep value, then K, then parameter order, whatever the pool size.
pub fn run_sweep(config: &ScenarioConfig, workers: Option<usize>) -> Result<SweepResult> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..config.sweep_values.len()).flat_map(|s| (0..config.k_values.len()).map(move |k| (s, k))).collect();
    let run = || -> Vec<((usize, usize), Vec<SweepRow>)> {
        jobs.par_iter()
            .map(|&(s, k)| ((s, k), rows_for_point(config, config.sweep_values[s], config.k_values[k])))
            .collect()
    };
    let mut results = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Contract(format!("cannot build worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.sort_by_key(|(key, _)| *key);
    Ok(SweepResult { axis: config.axis, rows: results.into_iter().flat_map(|(_, rows)| rows).collect() })
}

fn float_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.axis,
                float_field(Some(r.sweep_value)),
                r.k,
                r.quantity,
                float_field(r.crb_true),
                float_field(r.crb_ff),
                float_field(r.crb_nf),
                float_field(r.relerr_ff),
                float_field(r.relerr_nf),
                float_field(r.cond_number),
                r.flags.join(";")
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    /// Rows of one K-series and parameter, in sweep order.
    pub fn series(&self, k: usize, quantity: Quantity) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.k == k && r.quantity == quantity).collect()
    }
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i + 1 == count {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Carrier 15 GHz, 120 kHz spacing, 20 dBm per subcarrier, centered grid, `c = 3e8`.
pub fn default_grid(n_subcarriers: usize, n_symbols: usize) -> OfdmGrid {
    let mut grid = OfdmGrid::new(15e9, 120e3, n_subcarriers, n_symbols).expect("default grid is valid");
    grid.per_subcarrier_power_w = dbm_to_watts(20.0);
    grid
}

/// `-114 dBm`
pub fn default_noise_w() -> f64 {
    dbm_to_watts(-114.0)
}

/// Co-located 256-element half-wavelength arrays, one target at
/// (20 deg, 100 m) moving at [1, 4] m/s with `alpha = 1 + 0.1j`.
pub fn scenario_monostatic_single() -> ScenarioConfig {
    ScenarioConfig {
        name: "monostatic_single".into(),
        template: SceneTemplate {
            n_elements: 256,
            spacing_m: None,
            tx_center_x: 0.0,
            rx_center_x: 0.0,
            targets: vec![TargetSpec {
                angle_deg: 20.0,
                range_m: 100.0,
                velocity: [1.0, 4.0],
                rcs: Complex64::new(1.0, 0.1),
            }],
            noise_w: default_noise_w(),
        },
        grid: default_grid(128, 256),
        axis: SweepAxis::Range,
        sweep_values: log_space(50.0, 650.0, 25),
        k_values: vec![128],
        quantities: Quantity::ALL.to_vec(),
        bound_mode: BoundMode::Conditional,
        closed_form: Some(ClosedFormOptions::default()),
        symbols: SymbolChoice::Expected,
    }
}

/// Tx centered at x = -2 m, Rx at x = +2 m, three moving targets.
pub fn scenario_bistatic_three() -> ScenarioConfig {
    let rcs = Complex64::new(1.0, 0.1);
    let mut config = scenario_monostatic_single();
    config.name = "bistatic_three".into();
    config.template.tx_center_x = -2.0;
    config.template.rx_center_x = 2.0;
    config.template.targets = vec![
        TargetSpec { angle_deg: 20.0, range_m: 100.0, velocity: [1.0, 4.0], rcs },
        TargetSpec { angle_deg: -45.0, range_m: 150.0, velocity: [4.0, 3.0], rcs },
        TargetSpec { angle_deg: -5.0, range_m: 50.0, velocity: [10.0, 6.0], rcs },
    ];
    config.axis = SweepAxis::Antennas;
    config.sweep_values = vec![16.0, 32.0, 64.0, 128.0, 256.0];
    config
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PresetScale {
    /// N = 32, M = 32, K in {2, 4, 8, 16}, antenna sweep over {16, 32, 64}.
    #[default]
    Reduced,
    /// N = 256, M = 256, K in {8, 32, 64, 128}, antenna sweep up to 256.
    Full,
}

impl FromStr for PresetScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduced" => Ok(PresetScale::Reduced),
            "full" => Ok(PresetScale::Full),
            other => Err(Error::domain(format!("unknown preset scale {other:?}, expected reduced or full"))),
        }
    }
}

impl fmt::Display for PresetScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PresetScale::Reduced => "reduced",
            PresetScale::Full => "full",
        })
    }
}

pub const PRESET_NAMES: [&str; 8] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

/// Sweep behind each figure: 1 RCS vs range, 2 RCS vs antennas, 3 velocity vs
/// range, 4 velocity vs antennas, 5 location vs antennas (all monostatic);
/// 6-8 RCS, velocity and location vs antennas for the bistatic three-target scene.
pub fn preset(name: &str, scale: PresetScale) -> Result<ScenarioConfig> {
    use Quantity::*;
    let (axis, quantities, bistatic) = match name {
        "fig1" => (SweepAxis::Range, vec![Alpha], false),
        "fig2" => (SweepAxis::Antennas, vec![Alpha], false),
        "fig3" => (SweepAxis::Range, vec![Vx, Vy], false),
        "fig4" => (SweepAxis::Antennas, vec![Vx, Vy], false),
        "fig5" => (SweepAxis::Antennas, vec![X, Y], false),
        "fig6" => (SweepAxis::Antennas, vec![Alpha], true),
        "fig7" => (SweepAxis::Antennas, vec![Vx, Vy], true),
        "fig8" => (SweepAxis::Antennas, vec![X, Y], true),
        other => {
            return Err(Error::domain(format!("unknown preset {other:?}, expected one of {}", PRESET_NAMES.join(", "))))
        }
    };
    let mut config = if bistatic { scenario_bistatic_three() } else { scenario_monostatic_single() };
    config.name = name.to_string();
    config.axis = axis;
    config.quantities = quantities;
    let (n, m, ks, antennas): (usize, usize, Vec<usize>, Vec<f64>) = match scale {
        PresetScale::Reduced => (32, 32, vec![2, 4, 8, 16], vec![16.0, 32.0, 64.0]),
        PresetScale::Full => (256, 256, vec![8, 32, 64, 128], vec![16.0, 32.0, 64.0, 128.0, 256.0]),
    };
    config.template.n_elements = n;
    config.grid.n_symbols = m;
    config.grid.n_subcarriers = *ks.last().expect("preset K set is not empty");
    config.k_values = ks;
    config.sweep_values = match axis {
        SweepAxis::Range => log_space(50.0, 650.0, 25),
        SweepAxis::Antennas => antennas,
    };
    Ok(config)
}
