//! Single-target closed forms: array gains, the exact RCS bound, far-field
//! and near-field approximations for RCS, velocity and location, and the
//! relative-error metric.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::derivatives::Axis;
use crate::error::{Error, Result};
use crate::model::Side;
use crate::scene::{
    cm_factor, lambda_sums, range_angle, subcarrier_grid, ula_positions, OfdmGrid, Point2D, Scene, UlaSpec,
};

/// `G = lambda^2 / (16 pi^2) * g` with the wavelength-free factor `g = sum_n 1 / r_n^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGain {
    pub gain: f64,
    pub g: f64,
}

pub fn array_gain(wavelength_m: f64, element_ranges: &[f64]) -> Result<ArrayGain> {
    if !(wavelength_m > 0.0) {
        return Err(Error::domain(format!("wavelength must be positive, got {wavelength_m}")));
    }
    if element_ranges.is_empty() {
        return Err(Error::domain("array gain needs at least one element"));
    }
    let mut g = 0.0;
    for &r in element_ranges {
        if r == 0.0 {
            return Err(Error::Singularity("zero element range in array gain".into()));
        }
        if !(r > 0.0) {
            return Err(Error::domain(format!("element range must be positive, got {r}")));
        }
        g += 1.0 / (r * r);
    }
    Ok(ArrayGain { gain: wavelength_m * wavelength_m / (16.0 * PI * PI) * g, g })
}

/// Distances from every element of `array` to `point`.
pub fn element_ranges(array: &UlaSpec, point: Point2D) -> Vec<f64> {
    ula_positions(array).iter().map(|p| p.distance(&point)).collect()
}

/// Exact `CRB_alpha = CRB_alpha_R + CRB_alpha_I = 2 * 256 sigma^2 pi^4 / (2 P M g_tx g_rx Lambda_4)`.
///
/// Holds for a single target whatever its velocity, since velocity only
/// rotates the steering phases.
pub fn crb_alpha_exact(grid: &OfdmGrid, noise_w: f64, g_tx: f64, g_rx: f64) -> Result<f64> {
    if !(noise_w > 0.0) || !(g_tx > 0.0) || !(g_rx > 0.0) {
        return Err(Error::domain("exact RCS bound needs positive noise power and gains"));
    }
    grid.validate()?;
    let sums = lambda_sums(&subcarrier_grid(grid)?.wavelengths)?;
    let crb_r = 256.0 * noise_w * PI.powi(4)
        / (2.0 * grid.per_subcarrier_power_w * grid.n_symbols as f64 * g_tx * g_rx * sums.lambda4);
    Ok(2.0 * crb_r)
}

/// Scalar inputs shared by the single-target approximations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxInputs {
    pub r_tx: f64,
    pub r_rx: f64,
    pub sin_tx: f64,
    pub cos_tx: f64,
    pub sin_rx: f64,
    pub cos_rx: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub d_tx: f64,
    pub d_rx: f64,
    pub n_symbols: usize,
    pub t_sym: f64,
    pub alpha_abs2: f64,
    pub power_w: f64,
    pub noise_w: f64,
    pub lambda2: f64,
    pub lambda4: f64,
    pub c_m: f64,
}

impl ApproxInputs {
    /// Ranges and angles are measured from the array centers.
    pub fn for_target(scene: &Scene, grid: &OfdmGrid, q: usize) -> Result<Self> {
        let target = scene.targets().get(q).ok_or_else(|| Error::Contract(format!("target {q} does not exist")))?;
        grid.validate()?;
        let tx = range_angle(target.position, scene.tx().center())?;
        let rx = range_angle(target.position, scene.rx().center())?;
        let sums = lambda_sums(&subcarrier_grid(grid)?.wavelengths)?;
        Ok(Self {
            r_tx: tx.range,
            r_rx: rx.range,
            sin_tx: tx.sin_theta,
            cos_tx: tx.cos_theta,
            sin_rx: rx.sin_theta,
            cos_rx: rx.cos_theta,
            n_tx: scene.tx().n_elements(),
            n_rx: scene.rx().n_elements(),
            d_tx: scene.tx().spacing(),
            d_rx: scene.rx().spacing(),
            n_symbols: grid.n_symbols,
            t_sym: grid.t_sym(),
            alpha_abs2: target.rcs.norm_sqr(),
            power_w: grid.per_subcarrier_power_w,
            noise_w: scene.noise_power_w(),
            lambda2: sums.lambda2,
            lambda4: sums.lambda4,
            c_m: cm_factor(grid.n_symbols as u64)? as f64,
        })
    }

    /// Same inputs with the wavelength sums replaced by their narrow-band
    /// counterparts `K lambda_c^2` and `K lambda_c^4`.
    pub fn narrowband(&self, n_subcarriers: usize, carrier_wavelength: f64) -> Self {
        let k = n_subcarriers as f64;
        Self { lambda2: k * carrier_wavelength.powi(2), lambda4: k * carrier_wavelength.powi(4), ..*self }
    }

    fn side(&self, side: Side) -> (f64, f64, usize, f64) {
        match side {
            Side::Tx => (self.r_tx, self.sin_tx, self.n_tx, self.d_tx),
            Side::Rx => (self.r_rx, self.sin_rx, self.n_rx, self.d_rx),
        }
    }

    fn angle_sum(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.sin_tx + self.sin_rx,
            Axis::Y => self.cos_tx + self.cos_rx,
        }
    }

    fn geometry(&self) -> f64 {
        (self.r_tx * self.r_rx).powi(2)
    }
}

/// Spacing power in the aperture correction `Delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaForm {
    /// `(N^2 - 1) d^2 (4 sin^2 - 1) / (12 r^2)`, the second-order term of `sum_n 1 / r_n^2`.
    #[default]
    Squared,
    /// Same expression with `d` to the first power.
    Printed,
}

impl fmt::Display for DeltaForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeltaForm::Squared => "squared",
            DeltaForm::Printed => "printed",
        })
    }
}

impl FromStr for DeltaForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(DeltaForm::Squared),
            "printed" => Ok(DeltaForm::Printed),
            other => Err(Error::domain(format!("unknown delta form {other:?}, expected squared or printed"))),
        }
    }
}

/// Aperture correction for one array.
pub fn aperture_delta(n_elements: usize, spacing: f64, sin_theta: f64, range: f64, form: DeltaForm) -> f64 {
    let n = n_elements as f64;
    let d = match form {
        DeltaForm::Squared => spacing * spacing,
        DeltaForm::Printed => spacing,
    };
    (n * n - 1.0) * d * (4.0 * sin_theta * sin_theta - 1.0) / (12.0 * range * range)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionTerms {
    pub delta_tx: f64,
    pub delta_rx: f64,
    pub psi_x: f64,
    pub psi_y: f64,
}

impl CorrectionTerms {
    /// Aperture corrections from the inputs, with `psi_x = psi_y = 1`.
    pub fn from_inputs(inputs: &ApproxInputs, form: DeltaForm) -> Self {
        let delta = |side| {
            let (r, s, n, d) = inputs.side(side);
            aperture_delta(n, d, s, r, form)
        };
        Self { delta_tx: delta(Side::Tx), delta_rx: delta(Side::Rx), psi_x: 1.0, psi_y: 1.0 }
    }

    pub fn with_psi(self, psi_x: f64, psi_y: f64) -> Self {
        Self { psi_x, psi_y, ..self }
    }

    fn psi(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.psi_x,
            Axis::Y => self.psi_y,
        }
    }
}

/// `CRB_alpha^FF = 256 sigma^2 pi^4 (r_tx r_rx)^2 / (P M N_t N_r Lambda_4)`.
pub fn crb_alpha_ff(inputs: &ApproxInputs) -> f64 {
    256.0 * inputs.noise_w * PI.powi(4) * inputs.geometry()
        / (inputs.power_w * inputs.n_symbols as f64 * (inputs.n_tx * inputs.n_rx) as f64 * inputs.lambda4)
}

pub fn crb_alpha_nf(inputs: &ApproxInputs, corrections: &CorrectionTerms) -> Result<f64> {
    let (a, b) = (1.0 + corrections.delta_tx, 1.0 + corrections.delta_rx);
    if !(a > 0.0) {
        return Err(Error::CorrectionOutOfRange(corrections.delta_tx));
    }
    if !(b > 0.0) {
        return Err(Error::CorrectionOutOfRange(corrections.delta_rx));
    }
    Ok(crb_alpha_ff(inputs) / (a * b))
}

/// Shared far-field form `32 pi^2 sigma^2 (r_tx r_rx)^2 / (|alpha|^2 P N_t N_r time (angle sum)^2 Lambda_2)`;
/// infinite when the angle sum vanishes.
fn ff_motion(inputs: &ApproxInputs, axis: Axis, time_factor: f64, psi: f64) -> f64 {
    let s = inputs.angle_sum(axis);
    let den = inputs.alpha_abs2
        * inputs.power_w
        * (inputs.n_tx * inputs.n_rx) as f64
        * time_factor
        * s
        * s
        * inputs.lambda2
        * psi;
    if den == 0.0 {
        return f64::INFINITY;
    }
    32.0 * PI * PI * inputs.noise_w * inputs.geometry() / den
}

fn velocity_time(inputs: &ApproxInputs) -> f64 {
    inputs.t_sym * inputs.t_sym * inputs.c_m
}

pub fn crb_velocity_ff(inputs: &ApproxInputs, axis: Axis) -> f64 {
    ff_motion(inputs, axis, velocity_time(inputs), 1.0)
}

pub fn crb_velocity_nf(inputs: &ApproxInputs, corrections: &CorrectionTerms, axis: Axis) -> f64 {
    ff_motion(inputs, axis, velocity_time(inputs), corrections.psi(axis))
}

pub fn crb_location_ff(inputs: &ApproxInputs, axis: Axis) -> f64 {
    ff_motion(inputs, axis, inputs.n_symbols as f64, 1.0)
}

pub fn crb_location_nf(inputs: &ApproxInputs, corrections: &CorrectionTerms, axis: Axis) -> f64 {
    ff_motion(inputs, axis, inputs.n_symbols as f64, corrections.psi(axis))
}

/// `|approx - exact| / exact`.
pub fn relative_error(approx: f64, exact: f64) -> Result<f64> {
    if !(exact > 0.0) {
        return Err(Error::domain(format!("relative error needs a positive reference, got {exact}")));
    }
    Ok(((approx - exact) / exact).abs())
}

/// Far-field and near-field values for every single-target bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Approximations {
    pub alpha_ff: f64,
    /// `None` when a correction leaves `1 + Delta <= 0`.
    pub alpha_nf: Option<f64>,
    pub x_ff: f64,
    pub x_nf: f64,
    pub y_ff: f64,
    pub y_nf: f64,
    pub vx_ff: f64,
    pub vx_nf: f64,
    pub vy_ff: f64,
    pub vy_nf: f64,
}

impl Approximations {
    pub fn new(inputs: &ApproxInputs, corrections: &CorrectionTerms) -> Self {
        Self {
            alpha_ff: crb_alpha_ff(inputs),
            alpha_nf: crb_alpha_nf(inputs, corrections).ok(),
            x_ff: crb_location_ff(inputs, Axis::X),
            x_nf: crb_location_nf(inputs, corrections, Axis::X),
            y_ff: crb_location_ff(inputs, Axis::Y),
            y_nf: crb_location_nf(inputs, corrections, Axis::Y),
            vx_ff: crb_velocity_ff(inputs, Axis::X),
            vx_nf: crb_velocity_nf(inputs, corrections, Axis::X),
            vy_ff: crb_velocity_ff(inputs, Axis::Y),
            vy_nf: crb_velocity_nf(inputs, corrections, Axis::Y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{dbm_to_watts, GridConvention, TargetState};
    use num_complex::Complex64;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    fn inputs() -> ApproxInputs {
        let scene = Scene::monostatic(
            UlaSpec::new(64, 0.01, 0.0).unwrap(),
            vec![TargetState::from_polar(20.0, 100.0, [1.0, 4.0], Complex64::new(1.0, 0.1)).unwrap()],
            dbm_to_watts(-114.0),
        )
        .unwrap();
        ApproxInputs::for_target(&scene, &OfdmGrid::new(15e9, 120e3, 16, 32).unwrap(), 0).unwrap()
    }

    #[test]
    fn array_gain_examples() {
        let one = array_gain(0.02, &[100.0]).unwrap();
        assert!(close(one.g, 1e-4, 1e-15));
        assert!(close(one.gain, 4e-4 / (16.0 * PI * PI) * 1e-4, 1e-15));
        assert!(close(array_gain(0.02, &[5.0; 7]).unwrap().g, 7.0 / 25.0, 1e-15));
        assert!(matches!(array_gain(0.02, &[1.0, 0.0]), Err(Error::Singularity(_))));
    }

    #[test]
    fn alpha_exact_halves_with_doubled_m() {
        let a = crb_alpha_exact(&OfdmGrid::new(15e9, 120e3, 4, 8).unwrap(), 1e-15, 1e-3, 2e-3).unwrap();
        let b = crb_alpha_exact(&OfdmGrid::new(15e9, 120e3, 4, 16).unwrap(), 1e-15, 1e-3, 2e-3).unwrap();
        assert!(close(a, 2.0 * b, 1e-14));
    }

    #[test]
    fn alpha_exact_narrowband_limit() {
        let mut grid = OfdmGrid::new(15e9, 120e3, 1, 4).unwrap();
        grid.convention = GridConvention::Centered;
        let lc = grid.carrier_wavelength();
        let expected = 256.0 * 1e-15 * PI.powi(4) / (grid.per_subcarrier_power_w * 4.0 * 1e-3 * 1e-3 * lc.powi(4));
        assert!(close(crb_alpha_exact(&grid, 1e-15, 1e-3, 1e-3).unwrap(), expected, 1e-13));
    }

    #[test]
    fn delta_vanishes_at_thirty_degrees() {
        let mut i = inputs();
        i.sin_tx = 0.5;
        i.sin_rx = 0.5;
        let c = CorrectionTerms::from_inputs(&i, DeltaForm::Squared);
        assert_eq!(c.delta_tx, 0.0);
        assert_eq!(crb_alpha_nf(&i, &c).unwrap(), crb_alpha_ff(&i));
    }

    #[test]
    fn single_element_alpha_ff() {
        let mut i = inputs();
        i.n_tx = 1;
        i.n_rx = 1;
        let expected = 256.0 * i.noise_w * PI.powi(4) * i.r_tx.powi(2) * i.r_rx.powi(2)
            / (i.power_w * i.n_symbols as f64 * i.lambda4);
        assert!(close(crb_alpha_ff(&i), expected, 1e-15));
    }

    #[test]
    fn correction_out_of_range() {
        let i = inputs();
        let c = CorrectionTerms { delta_tx: -1.5, delta_rx: 0.0, psi_x: 1.0, psi_y: 1.0 };
        assert!(matches!(crb_alpha_nf(&i, &c), Err(Error::CorrectionOutOfRange(_))));
    }

    #[test]
    fn broadside_and_endfire_are_unbounded() {
        let mut i = inputs();
        i.sin_tx = 0.0;
        i.sin_rx = 0.0;
        assert_eq!(crb_velocity_ff(&i, Axis::X), f64::INFINITY);
        assert_eq!(crb_location_ff(&i, Axis::X), f64::INFINITY);
        let mut i = inputs();
        i.cos_tx = 0.0;
        i.cos_rx = 0.0;
        assert_eq!(crb_location_ff(&i, Axis::Y), f64::INFINITY);
    }

    #[test]
    fn velocity_scales_with_symbol_duration() {
        let i = inputs();
        let longer = ApproxInputs { t_sym: 4.0 * i.t_sym, ..i };
        assert!(close(crb_velocity_ff(&longer, Axis::Y), crb_velocity_ff(&i, Axis::Y) / 16.0, 1e-14));
    }

    #[test]
    fn neutral_psi_keeps_far_field() {
        let i = inputs();
        let c = CorrectionTerms::from_inputs(&i, DeltaForm::Squared);
        assert_eq!(crb_velocity_nf(&i, &c, Axis::X), crb_velocity_ff(&i, Axis::X));
        assert_eq!(crb_location_nf(&i, &c, Axis::Y), crb_location_ff(&i, Axis::Y));
        let c = c.with_psi(2.0, 4.0);
        assert!(close(crb_location_nf(&i, &c, Axis::Y), crb_location_ff(&i, Axis::Y) / 4.0, 1e-15));
    }

    #[test]
    fn location_to_velocity_ratio() {
        let i = inputs();
        for axis in [Axis::X, Axis::Y] {
            let ratio = crb_location_ff(&i, axis) / crb_velocity_ff(&i, axis);
            assert!(close(ratio, i.t_sym * i.t_sym * i.c_m / i.n_symbols as f64, 1e-14));
        }
    }

    #[test]
    fn relative_error_examples() {
        assert!(close(relative_error(1.05, 1.0).unwrap(), 0.05, 1e-12));
        assert_eq!(relative_error(3.0, 3.0).unwrap(), 0.0);
        assert!(close(relative_error(2.1e5, 2e5).unwrap(), relative_error(2.1, 2.0).unwrap(), 1e-12));
        assert!(relative_error(1.0, 0.0).is_err());
    }

    #[test]
    fn narrowband_substitution_increases_bounds() {
        let scene = Scene::monostatic(
            UlaSpec::new(16, 0.01, 0.0).unwrap(),
            vec![TargetState::from_polar(20.0, 100.0, [1.0, 4.0], Complex64::new(1.0, 0.1)).unwrap()],
            1e-15,
        )
        .unwrap();
        let grid = OfdmGrid::new(15e9, 120e3, 32, 8).unwrap();
        let wide = ApproxInputs::for_target(&scene, &grid, 0).unwrap();
        let narrow = wide.narrowband(32, grid.carrier_wavelength());
        assert!(crb_alpha_ff(&narrow) > crb_alpha_ff(&wide));
        assert!(crb_velocity_ff(&narrow, Axis::X) > crb_velocity_ff(&wide, Axis::X));
        assert!(crb_location_ff(&narrow, Axis::Y) > crb_location_ff(&wide, Axis::Y));
    }
}
