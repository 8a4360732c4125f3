//! Array geometry, targets, OFDM numerology and the geometric/spectral
//! quantities derived from them.
//!
//! Arrays are uniform linear arrays lying on the x-axis (`y = 0`). Angles are
//! measured from broadside (the +y axis), so a target at range `r` and angle
//! `theta` sits at `(r sin(theta), r cos(theta))` relative to the reference
//! point.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Exact vacuum speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Rounded speed of light used by default so that `c / 15 GHz = 0.02 m`.
pub const SPEED_OF_LIGHT_ROUNDED: f64 = 3.0e8;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Maps a broadside angle (degrees) and range to Cartesian coordinates
    /// relative to the origin.
    pub fn from_polar_deg(angle_deg: f64, range_m: f64) -> Self {
        let theta = angle_deg.to_radians();
        Self::new(range_m * theta.sin(), range_m * theta.cos())
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A uniform linear array along the x-axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlaSpec {
    n_elements: usize,
    spacing: f64,
    center_x: f64,
}

impl UlaSpec {
    pub fn new(n_elements: usize, spacing: f64, center_x: f64) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::domain("array needs at least one element"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::domain(format!("element spacing must be positive, got {spacing}")));
        }
        if !center_x.is_finite() {
            return Err(Error::domain("array center must be finite"));
        }
        Ok(Self { n_elements, spacing, center_x })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn center_x(&self) -> f64 {
        self.center_x
    }

    pub fn center(&self) -> Point2D {
        Point2D::new(self.center_x, 0.0)
    }

    /// Aperture `D = (N - 1) d`.
    pub fn aperture(&self) -> f64 {
        (self.n_elements - 1) as f64 * self.spacing
    }
}

/// Element coordinates `x_n = center + (n - (N-1)/2) d`, `n = 0..N`.
pub fn ula_positions(spec: &UlaSpec) -> Vec<Point2D> {
    let half = (spec.n_elements as f64 - 1.0) / 2.0;
    (0..spec.n_elements).map(|n| Point2D::new(spec.center_x + (n as f64 - half) * spec.spacing, 0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub position: Point2D,
    pub velocity_x: f64,
    pub velocity_y: f64,
    /// Complex reflectivity `alpha = alpha_R + j alpha_I`.
    pub rcs: Complex64,
}

impl TargetState {
    pub fn new(position: Point2D, velocity: [f64; 2], rcs: Complex64) -> Result<Self> {
        let target = Self { position, velocity_x: velocity[0], velocity_y: velocity[1], rcs };
        target.validate()?;
        Ok(target)
    }

    /// Target at a broadside angle and range from the origin.
    pub fn from_polar(angle_deg: f64, range_m: f64, velocity: [f64; 2], rcs: Complex64) -> Result<Self> {
        Self::new(Point2D::from_polar_deg(angle_deg, range_m), velocity, rcs)
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.velocity_x, self.velocity_y]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::domain("target position must be finite"));
        }
        if self.position.y == 0.0 {
            return Err(Error::domain(format!("target at x = {} lies on the array line (y = 0)", self.position.x)));
        }
        if !(self.velocity_x.is_finite() && self.velocity_y.is_finite()) {
            return Err(Error::domain("target velocity must be finite"));
        }
        if !(self.rcs.re.is_finite() && self.rcs.im.is_finite()) {
            return Err(Error::domain("target reflectivity must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridConvention {
    /// `f_k = f_c + k df`, `k = 1..=K`.
    Offset,
    /// `f_k = f_c + (k - (K-1)/2) df`, `k = 0..K`.
    #[default]
    Centered,
}

impl std::fmt::Display for GridConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridConvention::Offset => "offset",
            GridConvention::Centered => "centered",
        })
    }
}

impl std::str::FromStr for GridConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offset" => Ok(GridConvention::Offset),
            "centered" => Ok(GridConvention::Centered),
            other => Err(Error::domain(format!("unknown grid convention `{other}`"))),
        }
    }
}

/// OFDM numerology. Call [`OfdmGrid::validate`] after editing fields directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfdmGrid {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// `T_cp / T_es`.
    pub cp_fraction: f64,
    pub per_subcarrier_power_w: f64,
    pub convention: GridConvention,
    pub speed_of_light: f64,
}

impl OfdmGrid {
    pub const DEFAULT_CP_FRACTION: f64 = 0.07;

    pub fn new(carrier_hz: f64, subcarrier_spacing_hz: f64, n_subcarriers: usize, n_symbols: usize) -> Result<Self> {
        let grid = Self {
            carrier_hz,
            subcarrier_spacing_hz,
            n_subcarriers,
            n_symbols,
            cp_fraction: Self::DEFAULT_CP_FRACTION,
            per_subcarrier_power_w: 0.1,
            convention: GridConvention::Centered,
            speed_of_light: SPEED_OF_LIGHT_ROUNDED,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.carrier_hz) {
            return Err(Error::domain("carrier frequency must be positive"));
        }
        if !positive(self.subcarrier_spacing_hz) {
            return Err(Error::domain("subcarrier spacing must be positive"));
        }
        if self.n_subcarriers == 0 {
            return Err(Error::domain("need at least one subcarrier"));
        }
        if self.n_symbols == 0 {
            return Err(Error::domain("need at least one OFDM symbol"));
        }
        if !(self.cp_fraction > 0.0 && self.cp_fraction < 1.0) {
            return Err(Error::domain(format!("cp_fraction must lie in (0, 1), got {}", self.cp_fraction)));
        }
        if !positive(self.per_subcarrier_power_w) {
            return Err(Error::domain("per-subcarrier power must be positive"));
        }
        if !positive(self.speed_of_light) {
            return Err(Error::domain("speed of light must be positive"));
        }
        subcarrier_grid(self).map(|_| ())
    }

    /// Useful symbol duration `T_es = 1 / df`.
    pub fn t_es(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    pub fn t_cp(&self) -> f64 {
        self.cp_fraction * self.t_es()
    }

    /// Total symbol duration `T_sym = T_cp + T_es`.
    pub fn t_sym(&self) -> f64 {
        self.t_es() * (1.0 + self.cp_fraction)
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.n_subcarriers as f64 * self.subcarrier_spacing_hz
    }

    pub fn carrier_wavelength(&self) -> f64 {
        self.speed_of_light / self.carrier_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subcarriers {
    pub frequencies: Vec<f64>,
    pub wavelengths: Vec<f64>,
}

pub fn subcarrier_grid(grid: &OfdmGrid) -> Result<Subcarriers> {
    let k_count = grid.n_subcarriers;
    let offset = |k: usize| match grid.convention {
        GridConvention::Offset => (k + 1) as f64,
        GridConvention::Centered => k as f64 - (k_count as f64 - 1.0) / 2.0,
    };
    let frequencies: Vec<f64> =
        (0..k_count).map(|k| grid.carrier_hz + offset(k) * grid.subcarrier_spacing_hz).collect();
    if let Some(f) = frequencies.iter().find(|f| **f <= 0.0) {
        return Err(Error::domain(format!("subcarrier frequency {f} Hz is not positive")));
    }
    let wavelengths = frequencies.iter().map(|f| grid.speed_of_light / f).collect();
    Ok(Subcarriers { frequencies, wavelengths })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeAngle {
    pub range: f64,
    pub sin_theta: f64,
    pub cos_theta: f64,
}

/// Range and broadside angle of `target` seen from `array_center`.
pub fn range_angle(target: Point2D, array_center: Point2D) -> Result<RangeAngle> {
    let dx = target.x - array_center.x;
    let dy = target.y - array_center.y;
    let range = dx.hypot(dy);
    if range == 0.0 {
        return Err(Error::Singularity("target coincides with the array center".into()));
    }
    Ok(RangeAngle { range, sin_theta: dx / range, cos_theta: dy / range })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelBounds {
    pub reactive_m: f64,
    pub radiative_m: f64,
}

/// Reactive `0.62 sqrt(D^3 / lambda)` and radiative `2 D^2 / lambda` near-field boundaries.
pub fn fresnel_bounds(aperture_m: f64, wavelength_m: f64) -> Result<FresnelBounds> {
    if !(aperture_m > 0.0) || !(wavelength_m > 0.0) {
        return Err(Error::domain(format!(
            "Fresnel boundaries need positive aperture and wavelength, got D = {aperture_m}, lambda = {wavelength_m}"
        )));
    }
    Ok(FresnelBounds {
        reactive_m: 0.62 * (aperture_m.powi(3) / wavelength_m).sqrt(),
        radiative_m: 2.0 * aperture_m * aperture_m / wavelength_m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavelengthSums {
    /// `sum_k lambda_k^2`
    pub lambda2: f64,
    /// `sum_k lambda_k^4`
    pub lambda4: f64,
}

pub fn lambda_sums(wavelengths: &[f64]) -> Result<WavelengthSums> {
    if wavelengths.is_empty() {
        return Err(Error::domain("wavelength sums need at least one subcarrier"));
    }
    if let Some(l) = wavelengths.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::domain(format!("wavelength {l} is not positive")));
    }
    let lambda2 = wavelengths.iter().map(|l| l * l).sum();
    let lambda4 = wavelengths.iter().map(|l| (l * l) * (l * l)).sum();
    Ok(WavelengthSums { lambda2, lambda4 })
}

/// Slow-time quadratic sum `M (M + 1) (2M + 1) / 6 = sum_{m=1}^{M} m^2`.
pub fn cm_factor(n_symbols: u64) -> Result<u64> {
    if n_symbols < 1 {
        return Err(Error::domain("C_M needs M >= 1"));
    }
    let m = n_symbols as u128;
    u64::try_from(m * (m + 1) * (2 * m + 1) / 6).map_err(|_| Error::domain(format!("C_M overflows for M = {m}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    tx: UlaSpec,
    rx: UlaSpec,
    targets: Vec<TargetState>,
    noise_power_w: f64,
}

impl Scene {
    pub fn new(tx: UlaSpec, rx: UlaSpec, targets: Vec<TargetState>, noise_power_w: f64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::domain("scene needs at least one target"));
        }
        for t in &targets {
            t.validate()?;
        }
        for (i, a) in targets.iter().enumerate() {
            for b in &targets[i + 1..] {
                if a.position == b.position {
                    return Err(Error::domain(format!(
                        "two targets share position ({}, {})",
                        a.position.x, a.position.y
                    )));
                }
            }
        }
        if !(noise_power_w > 0.0 && noise_power_w.is_finite()) {
            return Err(Error::domain("noise power must be positive"));
        }
        Ok(Self { tx, rx, targets, noise_power_w })
    }

    /// Co-located identical transmit and receive arrays.
    pub fn monostatic(array: UlaSpec, targets: Vec<TargetState>, noise_power_w: f64) -> Result<Self> {
        Self::new(array, array, targets, noise_power_w)
    }

    pub fn tx(&self) -> &UlaSpec {
        &self.tx
    }

    pub fn rx(&self) -> &UlaSpec {
        &self.rx
    }

    pub fn targets(&self) -> &[TargetState] {
        &self.targets
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn noise_power_w(&self) -> f64 {
        self.noise_power_w
    }

    pub fn with_targets(&self, targets: Vec<TargetState>) -> Result<Self> {
        Self::new(self.tx, self.rx, targets, self.noise_power_w)
    }

    pub fn with_noise_power(&self, noise_power_w: f64) -> Result<Self> {
        Self::new(self.tx, self.rx, self.targets.clone(), noise_power_w)
    }

    pub fn is_monostatic(&self) -> bool {
        self.tx == self.rx
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsiMargin {
    pub delay_spread_s: f64,
    pub cp_s: f64,
    pub ok: bool,
}

/// Spread of bistatic delays over every (target, Tx element, Rx element)
/// triple, compared with the cyclic prefix.
pub fn isi_margin(scene: &Scene, grid: &OfdmGrid) -> IsiMargin {
    let tx = ula_positions(scene.tx());
    let rx = ula_positions(scene.rx());
    let c = grid.speed_of_light;
    let extremes = |elements: &[Point2D], p: Point2D| {
        elements.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            let r = e.distance(&p);
            (lo.min(r), hi.max(r))
        })
    };
    let (mut min_tau, mut max_tau) = (f64::INFINITY, f64::NEG_INFINITY);
    for target in scene.targets() {
        // delay is separable in (n_t, n_r), so per-side extremes suffice
        let (tx_lo, tx_hi) = extremes(&tx, target.position);
        let (rx_lo, rx_hi) = extremes(&rx, target.position);
        min_tau = min_tau.min((tx_lo + rx_lo) / c);
        max_tau = max_tau.max((tx_hi + rx_hi) / c);
    }
    let delay_spread_s = max_tau - min_tau;
    let cp_s = grid.t_cp();
    IsiMargin { delay_spread_s, cp_s, ok: delay_spread_s <= cp_s }
}
