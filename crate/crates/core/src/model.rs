//! Exact wide-band near-field frequency-domain channel.
//!
//! For subcarrier `k` and OFDM symbol `m` (1-based), target `q` contributes
//! `alpha_q a_Rx(k,m,q) a_Tx(k,m,q)^T` to the channel matrix `A_{k,m}`. Each
//! steering entry is `g_{n,k} exp(j 2 pi phi_n(k,m,q))` with the spherical
//! path gain `g = lambda_k / (4 pi r_n)` and the element-wise phase
//! `phi_n = (f_k / c) (<v, I_q - I_n> / r_n * m T_sym - r_n)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scene::{subcarrier_grid, ula_positions, OfdmGrid, Point2D, Scene, Subcarriers, TargetState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Tx,
    Rx,
}

/// Free-space path amplitude `lambda / (4 pi r)`.
pub fn path_gain(wavelength_m: f64, range_m: f64) -> Result<f64> {
    if !(range_m > 0.0) {
        return Err(Error::Singularity(format!("path gain at range {range_m}")));
    }
    if !(wavelength_m > 0.0) {
        return Err(Error::domain(format!("wavelength must be positive, got {wavelength_m}")));
    }
    Ok(wavelength_m / (4.0 * PI * range_m))
}

/// Offset, distance and radial velocity of a target seen from one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LineOfSight {
    pub dx: f64,
    pub dy: f64,
    pub range: f64,
    /// `<v, I_q - I_n> / ||I_q - I_n||`
    pub radial_velocity: f64,
}

impl LineOfSight {
    pub(crate) fn new(target: &TargetState, element: Point2D) -> Result<Self> {
        let dx = target.position.x - element.x;
        let dy = target.position.y - element.y;
        let range = dx.hypot(dy);
        if range == 0.0 {
            return Err(Error::Singularity(format!("target coincides with element at ({}, {})", element.x, element.y)));
        }
        let radial_velocity = (target.velocity_x * dx + target.velocity_y * dy) / range;
        Ok(Self { dx, dy, range, radial_velocity })
    }
}

/// Element-wise bistatic Doppler shift of `target` on a carrier `f_k_hz`.
pub fn doppler_shift(f_k_hz: f64, target: &TargetState, tx_pos: Point2D, rx_pos: Point2D, c: f64) -> Result<f64> {
    let tx = LineOfSight::new(target, tx_pos)?;
    let rx = LineOfSight::new(target, rx_pos)?;
    Ok(f_k_hz / c * (tx.radial_velocity + rx.radial_velocity))
}

/// Bistatic propagation delay `(r_tx + r_rx) / c`.
pub fn propagation_delay(target: &TargetState, tx_pos: Point2D, rx_pos: Point2D, c: f64) -> Result<f64> {
    let tx = LineOfSight::new(target, tx_pos)?;
    let rx = LineOfSight::new(target, rx_pos)?;
    Ok((tx.range + rx.range) / c)
}

/// One-way phase of a steering entry, in cycles, kept as its delay and
/// Doppler parts so each can be reduced modulo one cycle separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementPhase {
    /// `-(f_k / c) r_n`
    pub delay_cycles: f64,
    /// `(f_k / c) v_radial m T_sym`
    pub doppler_cycles: f64,
}

impl ElementPhase {
    pub fn total(&self) -> f64 {
        self.delay_cycles + self.doppler_cycles
    }

    /// `exp(j 2 pi phi)` with each part wrapped to `[-1/2, 1/2]` first.
    pub fn phasor(&self) -> Complex64 {
        cis_cycles(self.delay_cycles) * cis_cycles(self.doppler_cycles)
    }
}

fn cis_cycles(cycles: f64) -> Complex64 {
    let wrapped = cycles - cycles.round();
    Complex64::cis(2.0 * PI * wrapped)
}

/// Phase of the steering entry for one element, symbol index `m >= 1`.
pub fn element_phase(
    f_k_hz: f64,
    m: usize,
    t_sym_s: f64,
    target: &TargetState,
    element_pos: Point2D,
    c: f64,
) -> Result<ElementPhase> {
    if m == 0 {
        return Err(Error::Contract("symbol index m is 1-based".into()));
    }
    let los = LineOfSight::new(target, element_pos)?;
    Ok(phase_from_los(f_k_hz / c, m as f64 * t_sym_s, &los))
}

pub(crate) fn phase_from_los(f_over_c: f64, slow_time: f64, los: &LineOfSight) -> ElementPhase {
    ElementPhase { delay_cycles: -f_over_c * los.range, doppler_cycles: f_over_c * los.radial_velocity * slow_time }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub entries: DVector<Complex64>,
    pub side: Side,
    pub k: usize,
    pub m: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    /// `N_r x N_t`
    pub entries: DMatrix<Complex64>,
    pub k: usize,
    pub m: usize,
}

/// A scene and OFDM grid with element positions and subcarrier frequencies
/// resolved once.
///
/// Subcarrier indices `k` are 0-based positions in the subcarrier list;
/// symbol indices `m` run over `1..=M`; target indices `q` are 0-based.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    scene: Scene,
    grid: OfdmGrid,
    tx_positions: Vec<Point2D>,
    rx_positions: Vec<Point2D>,
    subcarriers: Subcarriers,
    t_sym: f64,
}

impl ForwardModel {
    pub fn new(scene: Scene, grid: OfdmGrid) -> Result<Self> {
        grid.validate()?;
        let subcarriers = subcarrier_grid(&grid)?;
        let tx_positions = ula_positions(scene.tx());
        let rx_positions = ula_positions(scene.rx());
        Ok(Self { t_sym: grid.t_sym(), scene, grid, tx_positions, rx_positions, subcarriers })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn grid(&self) -> &OfdmGrid {
        &self.grid
    }

    pub fn subcarriers(&self) -> &Subcarriers {
        &self.subcarriers
    }

    pub fn positions(&self, side: Side) -> &[Point2D] {
        match side {
            Side::Tx => &self.tx_positions,
            Side::Rx => &self.rx_positions,
        }
    }

    pub fn n_elements(&self, side: Side) -> usize {
        self.positions(side).len()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.subcarriers.frequencies.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.grid.n_symbols
    }

    pub fn n_targets(&self) -> usize {
        self.scene.n_targets()
    }

    pub fn t_sym(&self) -> f64 {
        self.t_sym
    }

    pub fn speed_of_light(&self) -> f64 {
        self.grid.speed_of_light
    }

    pub(crate) fn check_km(&self, k: usize, m: usize) -> Result<()> {
        if k >= self.n_subcarriers() {
            return Err(Error::Contract(format!("subcarrier index {k} out of range 0..{}", self.n_subcarriers())));
        }
        if m == 0 || m > self.n_symbols() {
            return Err(Error::Contract(format!("symbol index {m} out of range 1..={}", self.n_symbols())));
        }
        Ok(())
    }

    pub(crate) fn check_q(&self, q: usize) -> Result<()> {
        if q >= self.n_targets() {
            return Err(Error::Contract(format!("target index {q} out of range 0..{}", self.n_targets())));
        }
        Ok(())
    }

    /// Line-of-sight geometry from every element on `side` to target `q`.
    pub(crate) fn lines_of_sight(&self, side: Side, q: usize) -> Result<Vec<LineOfSight>> {
        let target = &self.scene.targets()[q];
        self.positions(side).iter().map(|p| LineOfSight::new(target, *p)).collect()
    }

    pub(crate) fn steering_from_los(&self, k: usize, m: usize, los: &[LineOfSight]) -> DVector<Complex64> {
        let f_over_c = self.subcarriers.frequencies[k] / self.grid.speed_of_light;
        let wavelength = self.subcarriers.wavelengths[k];
        let slow_time = m as f64 * self.t_sym;
        DVector::from_iterator(
            los.len(),
            los.iter().map(|l| {
                let gain = wavelength / (4.0 * PI * l.range);
                phase_from_los(f_over_c, slow_time, l).phasor() * gain
            }),
        )
    }

    pub fn steering_vector(&self, side: Side, k: usize, m: usize, q: usize) -> Result<SteeringVector> {
        self.check_km(k, m)?;
        self.check_q(q)?;
        let los = self.lines_of_sight(side, q)?;
        Ok(SteeringVector { entries: self.steering_from_los(k, m, &los), side, k, m, q })
    }

    /// `A_{k,m} = A_Rx diag(alpha) A_Tx^T`.
    pub fn channel_matrix(&self, k: usize, m: usize) -> Result<ChannelMatrix> {
        self.check_km(k, m)?;
        let mut entries = DMatrix::zeros(self.n_elements(Side::Rx), self.n_elements(Side::Tx));
        for (q, target) in self.scene.targets().iter().enumerate() {
            let a_rx = self.steering_vector(Side::Rx, k, m, q)?.entries;
            let a_tx = self.steering_vector(Side::Tx, k, m, q)?.entries;
            entries += a_rx * a_tx.transpose() * target.rcs;
        }
        Ok(ChannelMatrix { entries, k, m })
    }

    /// Noise-free received vector `A_{k,m} x_{k,m}`.
    pub fn mean_signal(&self, k: usize, m: usize, symbols: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        self.check_symbols(symbols)?;
        Ok(self.channel_matrix(k, m)?.entries * symbols)
    }

    pub(crate) fn check_symbols(&self, symbols: &DVector<Complex64>) -> Result<()> {
        let n_t = self.n_elements(Side::Tx);
        if symbols.len() != n_t {
            return Err(Error::Contract(format!("symbol vector has length {}, expected N_t = {n_t}", symbols.len())));
        }
        Ok(())
    }
}
