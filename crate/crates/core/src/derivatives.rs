//! Analytic partial derivatives of the channel matrix with respect to the
//! real parameter vector `theta = [x, y, v_x, v_y, alpha_R, alpha_I]`.
//!
//! Every geometric derivative of a steering vector is an element-wise
//! multiplicative factor on the steering entries. A channel derivative for
//! target `q` is then a sum of at most two rank-one terms built from the
//! steering vectors and their factor-weighted copies (the product rule over
//! the Rx and Tx sides).

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ForwardModel, LineOfSight, Side};

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamFamily {
    X,
    Y,
    Vx,
    Vy,
    AlphaR,
    AlphaI,
}

impl ParamFamily {
    pub const ALL: [ParamFamily; 6] =
        [ParamFamily::X, ParamFamily::Y, ParamFamily::Vx, ParamFamily::Vy, ParamFamily::AlphaR, ParamFamily::AlphaI];

    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamFamily::X => "x",
            ParamFamily::Y => "y",
            ParamFamily::Vx => "vx",
            ParamFamily::Vy => "vy",
            ParamFamily::AlphaR => "alpha_r",
            ParamFamily::AlphaI => "alpha_i",
        }
    }
}

/// Position of one real parameter inside `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamIndex {
    pub family: ParamFamily,
    pub target: usize,
}

impl ParamIndex {
    pub const fn new(family: ParamFamily, target: usize) -> Self {
        Self { family, target }
    }

    /// Flat index `family_rank * Q + q`.
    pub fn flat(&self, n_targets: usize) -> usize {
        self.family.rank() * n_targets + self.target
    }

    pub fn from_flat(index: usize, n_targets: usize) -> Self {
        Self { family: ParamFamily::ALL[index / n_targets], target: index % n_targets }
    }
}

impl fmt::Display for ParamIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.family.name(), self.target)
    }
}

/// All `6Q` parameters in flat order.
pub fn param_layout(n_targets: usize) -> Vec<ParamIndex> {
    (0..6 * n_targets).map(|i| ParamIndex::from_flat(i, n_targets)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Steering vector and its four geometric derivatives for one target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BasisKind {
    Steering = 0,
    DX = 1,
    DY = 2,
    DVx = 3,
    DVy = 4,
}

pub(crate) const BASIS_PER_TARGET: usize = 5;

pub(crate) fn basis_slot(q: usize, kind: BasisKind) -> usize {
    q * BASIS_PER_TARGET + kind as usize
}

/// `d a_n / d v_axis = j 2 pi (f_k/c) m T_sym (offset / r) a_n`.
fn velocity_factor(f_over_c: f64, slow_time: f64, los: &LineOfSight, axis: Axis) -> Complex64 {
    let offset = match axis {
        Axis::X => los.dx,
        Axis::Y => los.dy,
    };
    J * (2.0 * PI * f_over_c * slow_time * offset / los.range)
}

/// Location factor: phase and delay term, amplitude term, and the
/// Doppler-location coupling term.
fn location_factor(f_over_c: f64, slow_time: f64, v: [f64; 2], los: &LineOfSight, axis: Axis) -> Complex64 {
    let (own, other, v_own, v_other) = match axis {
        Axis::X => (los.dx, los.dy, v[0], v[1]),
        Axis::Y => (los.dy, los.dx, v[1], v[0]),
    };
    let r = los.range;
    let w = 2.0 * PI * f_over_c;
    let phase = w * (v_own * slow_time - own) / r;
    let amplitude = -own / (r * r);
    let coupling = -w * slow_time * (v_own * own * own + v_other * own * other) / (r * r * r);
    Complex64::new(amplitude, phase + coupling)
}

fn factors_with<F>(model: &ForwardModel, side: Side, k: usize, m: usize, q: usize, f: F) -> Result<Vec<Complex64>>
where
    F: Fn(f64, f64, &LineOfSight) -> Complex64,
{
    model.check_km(k, m)?;
    model.check_q(q)?;
    let f_over_c = model.subcarriers().frequencies[k] / model.speed_of_light();
    let slow_time = m as f64 * model.t_sym();
    Ok(model.lines_of_sight(side, q)?.iter().map(|los| f(f_over_c, slow_time, los)).collect())
}

/// Element-wise factors `(d a_n / d v_axis) / a_n`.
pub fn d_steering_velocity(
    model: &ForwardModel,
    side: Side,
    k: usize,
    m: usize,
    q: usize,
    axis: Axis,
) -> Result<Vec<Complex64>> {
    factors_with(model, side, k, m, q, |fc, st, los| velocity_factor(fc, st, los, axis))
}

/// Element-wise factors `(d a_n / d position_axis) / a_n`.
pub fn d_steering_location(
    model: &ForwardModel,
    side: Side,
    k: usize,
    m: usize,
    q: usize,
    axis: Axis,
) -> Result<Vec<Complex64>> {
    let v = model.scene().targets().get(q).map(|t| t.velocity()).unwrap_or_default();
    factors_with(model, side, k, m, q, |fc, st, los| location_factor(fc, st, v, los, axis))
}

/// Fills the five basis vectors of target `q` for one (k, m) cell.
pub(crate) fn fill_target_basis(
    model: &ForwardModel,
    k: usize,
    m: usize,
    q: usize,
    los: &[LineOfSight],
    out: &mut [DVector<Complex64>],
) {
    let f_over_c = model.subcarriers().frequencies[k] / model.speed_of_light();
    let slow_time = m as f64 * model.t_sym();
    let v = model.scene().targets()[q].velocity();
    let steering = model.steering_from_los(k, m, los);
    for (n, l) in los.iter().enumerate() {
        let a = steering[n];
        out[BasisKind::DX as usize][n] = a * location_factor(f_over_c, slow_time, v, l, Axis::X);
        out[BasisKind::DY as usize][n] = a * location_factor(f_over_c, slow_time, v, l, Axis::Y);
        out[BasisKind::DVx as usize][n] = a * velocity_factor(f_over_c, slow_time, l, Axis::X);
        out[BasisKind::DVy as usize][n] = a * velocity_factor(f_over_c, slow_time, l, Axis::Y);
    }
    out[BasisKind::Steering as usize] = steering;
}

/// Steering vectors and their derivatives for every target on one side,
/// laid out by [`basis_slot`].
#[derive(Debug, Clone)]
pub(crate) struct SteeringBasis {
    pub vectors: Vec<DVector<Complex64>>,
}

impl SteeringBasis {
    pub(crate) fn zeros(n_targets: usize, n_elements: usize) -> Self {
        Self { vectors: vec![DVector::zeros(n_elements); n_targets * BASIS_PER_TARGET] }
    }

    pub(crate) fn fill(&mut self, model: &ForwardModel, k: usize, m: usize, los: &[Vec<LineOfSight>]) {
        for (q, target_los) in los.iter().enumerate() {
            let start = basis_slot(q, BasisKind::Steering);
            fill_target_basis(model, k, m, q, target_los, &mut self.vectors[start..start + BASIS_PER_TARGET]);
        }
    }
}

/// One rank-one contribution `coeff * rx_basis[rx] * tx_basis[tx]^T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Term {
    pub coeff: Complex64,
    pub rx: usize,
    pub tx: usize,
}

/// Product-rule structure of `dA/d theta_i`; independent of (k, m).
pub(crate) fn derivative_terms(param: ParamIndex, alpha: Complex64) -> Vec<Term> {
    let q = param.target;
    let plain = basis_slot(q, BasisKind::Steering);
    let geometric = |kind| {
        let d = basis_slot(q, kind);
        vec![Term { coeff: alpha, rx: d, tx: plain }, Term { coeff: alpha, rx: plain, tx: d }]
    };
    match param.family {
        ParamFamily::AlphaR => vec![Term { coeff: Complex64::new(1.0, 0.0), rx: plain, tx: plain }],
        ParamFamily::AlphaI => vec![Term { coeff: J, rx: plain, tx: plain }],
        ParamFamily::X => geometric(BasisKind::DX),
        ParamFamily::Y => geometric(BasisKind::DY),
        ParamFamily::Vx => geometric(BasisKind::DVx),
        ParamFamily::Vy => geometric(BasisKind::DVy),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDerivative {
    /// `N_r x N_t`
    pub entries: DMatrix<Complex64>,
    pub with_respect_to: ParamIndex,
    pub k: usize,
    pub m: usize,
}

fn target_bases(
    model: &ForwardModel,
    k: usize,
    m: usize,
    q: usize,
) -> Result<(Vec<DVector<Complex64>>, Vec<DVector<Complex64>>)> {
    model.check_km(k, m)?;
    model.check_q(q)?;
    let build = |side| -> Result<Vec<DVector<Complex64>>> {
        let los = model.lines_of_sight(side, q)?;
        let mut out = vec![DVector::zeros(los.len()); BASIS_PER_TARGET];
        fill_target_basis(model, k, m, q, &los, &mut out);
        Ok(out)
    };
    Ok((build(Side::Rx)?, build(Side::Tx)?))
}

/// `dA_{k,m} / d theta_i` for any parameter.
pub fn d_channel(model: &ForwardModel, k: usize, m: usize, param: ParamIndex) -> Result<ChannelDerivative> {
    let q = param.target;
    let (rx, tx) = target_bases(model, k, m, q)?;
    let alpha = model.scene().targets()[q].rcs;
    let offset = basis_slot(q, BasisKind::Steering);
    let mut entries = DMatrix::zeros(model.n_elements(Side::Rx), model.n_elements(Side::Tx));
    for term in derivative_terms(param, alpha) {
        entries += &rx[term.rx - offset] * tx[term.tx - offset].transpose() * term.coeff;
    }
    Ok(ChannelDerivative { entries, with_respect_to: param, k, m })
}

/// Derivatives with respect to `alpha_R` and `alpha_I`; the latter is `j` times the former.
pub fn d_channel_rcs(
    model: &ForwardModel,
    k: usize,
    m: usize,
    q: usize,
) -> Result<(ChannelDerivative, ChannelDerivative)> {
    Ok((
        d_channel(model, k, m, ParamIndex::new(ParamFamily::AlphaR, q))?,
        d_channel(model, k, m, ParamIndex::new(ParamFamily::AlphaI, q))?,
    ))
}

pub fn d_channel_velocity(model: &ForwardModel, k: usize, m: usize, q: usize, axis: Axis) -> Result<ChannelDerivative> {
    let family = match axis {
        Axis::X => ParamFamily::Vx,
        Axis::Y => ParamFamily::Vy,
    };
    d_channel(model, k, m, ParamIndex::new(family, q))
}

pub fn d_channel_location(model: &ForwardModel, k: usize, m: usize, q: usize, axis: Axis) -> Result<ChannelDerivative> {
    let family = match axis {
        Axis::X => ParamFamily::X,
        Axis::Y => ParamFamily::Y,
    };
    d_channel(model, k, m, ParamIndex::new(family, q))
}

/// `d mu_{k,m} / d theta_i = (dA_{k,m} / d theta_i) x_{k,m}`.
pub fn d_mean(
    model: &ForwardModel,
    k: usize,
    m: usize,
    symbols: &DVector<Complex64>,
    param: ParamIndex,
) -> Result<DVector<Complex64>> {
    model.check_symbols(symbols)?;
    if param.target >= model.n_targets() {
        return Err(Error::Contract(format!("parameter {param} refers to a missing target")));
    }
    Ok(d_channel(model, k, m, param)?.entries * symbols)
}
