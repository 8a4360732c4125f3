//! Fisher information via the Slepian-Bangs formula for a Gaussian mean
//! with white noise, summed over subcarriers, and the conditional and full
//! Cramér-Rao bounds extracted from it.
//!
//! With `C_k = sigma^2 I` the covariance term vanishes and
//! `F_k(i, j) = (2 / sigma^2) sum_m Re <d mu_{k,m}/d theta_i, d mu_{k,m}/d theta_j>`.
//! Under the expected-symbol model `E{x x^H} = P I` this becomes
//! `(2 P / sigma^2) sum_m Re tr[(dA_{k,m}/d theta_i)^H dA_{k,m}/d theta_j]`.
//!
//! Channel derivatives are never materialized here: each is a sum of
//! rank-one terms over steering-vector bases, so traces reduce to products
//! of Gram entries of those bases.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::derivatives::{derivative_terms, param_layout, ParamFamily, ParamIndex, SteeringBasis, Term};
use crate::error::{Error, Result};
use crate::linalg::{ordered_sum, BunchKaufman, CompensatedSum, MatrixAccumulator};
use crate::model::{ForwardModel, LineOfSight, Side};

/// Condition number (of the unit-diagonal scaled FIM) above which results are flagged.
pub const NEAR_SINGULAR_CONDITION: f64 = 1e12;

/// Condition number treated as exact singularity.
pub const SINGULAR_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymbolModelKind {
    /// Average over symbols with `E{x x^H} = P I`.
    #[default]
    Expected,
    /// A specific realization of the transmitted symbols.
    Fixed,
}

impl std::fmt::Display for SymbolModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SymbolModelKind::Expected => "expected",
            SymbolModelKind::Fixed => "fixed",
        })
    }
}

/// Transmit symbols `x_{k,m}` for every subcarrier and symbol slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    n_symbols: usize,
    data: Vec<DVector<Complex64>>,
}

impl SymbolBlock {
    /// Builds the block from `f(k, m)` with `k` 0-based and `m` in `1..=M`.
    pub fn from_fn(
        n_subcarriers: usize,
        n_symbols: usize,
        mut f: impl FnMut(usize, usize) -> DVector<Complex64>,
    ) -> Self {
        let mut data = Vec::with_capacity(n_subcarriers * n_symbols);
        for k in 0..n_subcarriers {
            for m in 1..=n_symbols {
                data.push(f(k, m));
            }
        }
        Self { n_symbols, data }
    }

    pub fn get(&self, k: usize, m: usize) -> &DVector<Complex64> {
        &self.data[k * self.n_symbols + (m - 1)]
    }

    fn check(&self, model: &ForwardModel) -> Result<()> {
        let expected = model.n_subcarriers() * model.n_symbols();
        if self.n_symbols != model.n_symbols() || self.data.len() != expected {
            return Err(Error::Contract(format!(
                "symbol block holds {} vectors, model needs {expected}",
                self.data.len()
            )));
        }
        let n_t = model.n_elements(Side::Tx);
        if let Some(bad) = self.data.iter().find(|x| x.len() != n_t) {
            return Err(Error::Contract(format!("symbol vector length {} != N_t = {n_t}", bad.len())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SymbolModel {
    Expected,
    Fixed(SymbolBlock),
}

impl SymbolModel {
    pub fn kind(&self) -> SymbolModelKind {
        match self {
            SymbolModel::Expected => SymbolModelKind::Expected,
            SymbolModel::Fixed(_) => SymbolModelKind::Fixed,
        }
    }
}

/// Real symmetric `6Q x 6Q` Fisher information with its parameter ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Fim {
    matrix: DMatrix<f64>,
    index_map: Vec<ParamIndex>,
    sigma2: f64,
    symbol_model: SymbolModelKind,
}

impl Fim {
    pub fn from_matrix(
        matrix: DMatrix<f64>,
        n_targets: usize,
        sigma2: f64,
        symbol_model: SymbolModelKind,
    ) -> Result<Self> {
        let n = 6 * n_targets;
        if n_targets == 0 || matrix.shape() != (n, n) {
            return Err(Error::Contract(format!("FIM shape {:?} does not match 6Q = {n}", matrix.shape())));
        }
        Ok(Self { matrix, index_map: param_layout(n_targets), sigma2, symbol_model })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn index_map(&self) -> &[ParamIndex] {
        &self.index_map
    }

    pub fn n_targets(&self) -> usize {
        self.index_map.len() / 6
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn symbol_model(&self) -> SymbolModelKind {
        self.symbol_model
    }

    pub fn entry(&self, a: ParamIndex, b: ParamIndex) -> f64 {
        let q = self.n_targets();
        self.matrix[(a.flat(q), b.flat(q))]
    }

    /// Eigenvalues of the raw matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Symmetric to `1e-12 max|F|` and `min eig >= -1e-10 max eig`.
    pub fn is_symmetric_psd(&self) -> bool {
        let scale = self.matrix.amax();
        let asym = (&self.matrix - self.matrix.transpose()).amax();
        let ev = self.eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        asym <= 1e-12 * scale && lo >= -1e-10 * hi
    }

    /// Power of two near the largest diagonal entry. Dividing by it is exact,
    /// so FIMs differing by a power-of-two factor (doubled power or noise)
    /// equilibrate to bitwise identical matrices.
    fn common_scale(&self) -> f64 {
        let top = self.matrix.diagonal().max();
        if top > 0.0 && top.is_finite() {
            2f64.powi(top.log2().floor() as i32)
        } else {
            1.0
        }
    }

    /// `D^{-1/2} (F / c) D^{-1/2}` with `D = diag(F / c)` and `c` from
    /// [`Self::common_scale`]; returns the matrix, `D^{-1/2}` and `c`.
    fn equilibrated(&self) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
        let c = self.common_scale();
        let m = &self.matrix / c;
        let diag = m.diagonal();
        let missing: Vec<String> =
            diag.iter().zip(&self.index_map).filter(|(d, _)| !(**d > 0.0)).map(|(_, p)| p.to_string()).collect();
        if !missing.is_empty() {
            return Err(Error::Unidentifiable(missing));
        }
        let s = diag.map(|d| 1.0 / d.sqrt());
        let n = s.len();
        let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * s[i] * s[j]);
        Ok((scaled, s, c))
    }

    /// Condition number of the unit-diagonal scaled matrix; infinite when a
    /// parameter carries no information or the matrix is not positive definite.
    pub fn condition_number(&self) -> f64 {
        match self.equilibrated() {
            Ok((scaled, _, _)) => condition_of(&scaled),
            Err(_) => f64::INFINITY,
        }
    }
}

fn condition_of(scaled: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(scaled.clone()).eigenvalues;
    let hi = ev.max();
    let lo = ev.min();
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn compensated_dotc(a: &DVector<Complex64>, b: &DVector<Complex64>) -> Complex64 {
    let mut re = CompensatedSum::default();
    let mut im = CompensatedSum::default();
    for (x, y) in a.iter().zip(b.iter()) {
        let p = x.conj() * y;
        re.add(p.re);
        im.add(p.im);
    }
    Complex64::new(re.value(), im.value())
}

/// Hermitian Gram matrix `G[a][b] = <v_a, v_b>`.
fn gram(vectors: &[DVector<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = vectors.len();
    let mut g = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for a in 0..n {
        for b in a..n {
            let v = compensated_dotc(&vectors[a], &vectors[b]);
            g[a][b] = v;
            g[b][a] = v.conj();
        }
    }
    g
}

struct Assembly<'a> {
    model: &'a ForwardModel,
    layout: Vec<ParamIndex>,
    terms: Vec<Vec<Term>>,
    los_rx: Vec<Vec<LineOfSight>>,
    los_tx: Vec<Vec<LineOfSight>>,
}

impl<'a> Assembly<'a> {
    fn new(model: &'a ForwardModel) -> Result<Self> {
        let q_count = model.n_targets();
        let layout = param_layout(q_count);
        let targets = model.scene().targets();
        let terms = layout.iter().map(|p| derivative_terms(*p, targets[p.target].rcs)).collect();
        let los = |side| (0..q_count).map(|q| model.lines_of_sight(side, q)).collect::<Result<Vec<_>>>();
        Ok(Self { model, layout, terms, los_rx: los(Side::Rx)?, los_tx: los(Side::Tx)? })
    }

    /// `sum_m Re <dmu_i, dmu_j>` (fixed) or `sum_m Re tr[dA_i^H dA_j]` (expected), unscaled.
    fn subcarrier_sum(&self, k: usize, symbols: &SymbolModel) -> DMatrix<f64> {
        let model = self.model;
        let q_count = model.n_targets();
        let n = self.layout.len();
        let mut rx = SteeringBasis::zeros(q_count, model.n_elements(Side::Rx));
        let mut tx = SteeringBasis::zeros(q_count, model.n_elements(Side::Tx));
        let mut acc = MatrixAccumulator::new(n, n);
        for m in 1..=model.n_symbols() {
            rx.fill(model, k, m, &self.los_rx);
            tx.fill(model, k, m, &self.los_tx);
            let g_rx = gram(&rx.vectors);
            match symbols {
                SymbolModel::Expected => {
                    let g_tx = gram(&tx.vectors);
                    for i in 0..n {
                        for j in i..n {
                            let mut v = Complex64::new(0.0, 0.0);
                            for s in &self.terms[i] {
                                for t in &self.terms[j] {
                                    v += s.coeff.conj() * t.coeff * g_rx[s.rx][t.rx] * g_tx[s.tx][t.tx];
                                }
                            }
                            acc.add_entry(i, j, v.re);
                        }
                    }
                }
                SymbolModel::Fixed(block) => {
                    let x = block.get(k, m);
                    // a^T x for every Tx basis vector
                    let proj: Vec<Complex64> = tx.vectors.iter().map(|v| v.dot(x)).collect();
                    for i in 0..n {
                        for j in i..n {
                            let mut v = Complex64::new(0.0, 0.0);
                            for s in &self.terms[i] {
                                for t in &self.terms[j] {
                                    v += (s.coeff * proj[s.tx]).conj() * t.coeff * proj[t.tx] * g_rx[s.rx][t.rx];
                                }
                            }
                            acc.add_entry(i, j, v.re);
                        }
                    }
                }
            }
        }
        let mut out = acc.value();
        for i in 0..n {
            for j in 0..i {
                out[(i, j)] = out[(j, i)];
            }
        }
        out
    }
}

fn information_scale(model: &ForwardModel, symbols: &SymbolModel) -> f64 {
    let sigma2 = model.scene().noise_power_w();
    match symbols {
        SymbolModel::Expected => 2.0 * model.grid().per_subcarrier_power_w / sigma2,
        SymbolModel::Fixed(_) => 2.0 / sigma2,
    }
}

fn check_symbols(model: &ForwardModel, symbols: &SymbolModel) -> Result<()> {
    match symbols {
        SymbolModel::Expected => Ok(()),
        SymbolModel::Fixed(block) => block.check(model),
    }
}

/// Per-subcarrier Fisher information `F_k` (`k` 0-based).
pub fn fim_subcarrier(model: &ForwardModel, k: usize, symbols: &SymbolModel) -> Result<DMatrix<f64>> {
    model.check_km(k, 1)?;
    check_symbols(model, symbols)?;
    let assembly = Assembly::new(model)?;
    Ok(assembly.subcarrier_sum(k, symbols) * information_scale(model, symbols))
}

/// Wide-band Fisher information `F = sum_k F_k`.
///
/// Subcarriers are evaluated in parallel and reduced in index order, so the
/// result does not depend on the number of worker threads.
pub fn fim_total(model: &ForwardModel, symbols: &SymbolModel) -> Result<Fim> {
    check_symbols(model, symbols)?;
    let assembly = Assembly::new(model)?;
    let scale = information_scale(model, symbols);
    let per_k: Vec<DMatrix<f64>> =
        (0..model.n_subcarriers()).into_par_iter().map(|k| assembly.subcarrier_sum(k, symbols) * scale).collect();
    let total = ordered_sum(&per_k).expect("grid has at least one subcarrier");
    Fim::from_matrix(total, model.n_targets(), model.scene().noise_power_w(), symbols.kind())
}

/// Bound with every other parameter known: `1 / F(i, i)`.
pub fn crb_conditional(fim: &Fim, param: ParamIndex) -> Result<f64> {
    if param.target >= fim.n_targets() {
        return Err(Error::Contract(format!("parameter {param} refers to a missing target")));
    }
    let d = fim.entry(param, param);
    if !(d > 0.0) {
        return Err(Error::Unidentifiable(vec![param.to_string()]));
    }
    Ok(1.0 / d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullCrb {
    pub bounds: Vec<(ParamIndex, f64)>,
    pub condition_number: f64,
    /// Condition number above [`NEAR_SINGULAR_CONDITION`].
    pub near_singular: bool,
}

impl FullCrb {
    pub fn get(&self, param: ParamIndex) -> Option<f64> {
        self.bounds.iter().find(|(p, _)| *p == param).map(|(_, b)| *b)
    }
}

fn null_space_names(scaled: &DMatrix<f64>, layout: &[ParamIndex]) -> Vec<String> {
    let eig = SymmetricEigen::new(scaled.clone());
    let hi = eig.eigenvalues.max().max(0.0);
    let mut involved = vec![false; layout.len()];
    let (lo_idx, _) = eig.eigenvalues.argmin();
    for (c, ev) in eig.eigenvalues.iter().enumerate() {
        if c != lo_idx && *ev > hi / SINGULAR_CONDITION {
            continue;
        }
        let v = eig.eigenvectors.column(c);
        let peak = v.amax();
        for (i, x) in v.iter().enumerate() {
            if x.abs() >= 0.2 * peak {
                involved[i] = true;
            }
        }
    }
    layout.iter().zip(involved).filter(|(_, hit)| *hit).map(|(p, _)| p.to_string()).collect()
}

/// Diagonal of `F^{-1}` restricted to `subset`, via the Schur complement
/// `F_ss - F_sc F_cc^{-1} F_cs` of the unit-diagonal scaled matrix.
pub fn crb_full(fim: &Fim, subset: &[ParamIndex]) -> Result<FullCrb> {
    let q = fim.n_targets();
    if let Some(bad) = subset.iter().find(|p| p.target >= q) {
        return Err(Error::Contract(format!("parameter {bad} refers to a missing target")));
    }
    let (scaled, s, c) = fim.equilibrated()?;
    let condition_number = condition_of(&scaled);
    if !(condition_number < SINGULAR_CONDITION) {
        return Err(Error::SingularFim(null_space_names(&scaled, fim.index_map())));
    }

    let sel: Vec<usize> = subset.iter().map(|p| p.flat(q)).collect();
    let comp: Vec<usize> = (0..scaled.nrows()).filter(|i| !sel.contains(i)).collect();
    let block =
        |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| scaled[(rows[i], cols[j])]);

    let singular = |_| Error::SingularFim(null_space_names(&scaled, fim.index_map()));
    let mut schur = block(&sel, &sel);
    if !comp.is_empty() {
        let cc = BunchKaufman::new(&block(&comp, &comp), 1e-15).map_err(singular)?;
        let cs = block(&comp, &sel);
        schur -= cs.transpose() * cc.solve_matrix(&cs);
    }
    let schur = (&schur + schur.transpose()) * 0.5;
    let inv = BunchKaufman::new(&schur, 1e-15).map_err(singular)?.inverse();
    let bounds =
        subset.iter().zip(&sel).enumerate().map(|(i, (p, &flat))| (*p, inv[(i, i)] * s[flat] * s[flat] / c)).collect();
    Ok(FullCrb { bounds, condition_number, near_singular: condition_number > NEAR_SINGULAR_CONDITION })
}

/// Bounds for one target; arrays are ordered `[x, y, vx, vy, alpha_r, alpha_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBounds {
    pub conditional: [f64; 6],
    pub full: Option<[f64; 6]>,
}

impl TargetBounds {
    pub fn conditional_of(&self, family: ParamFamily) -> f64 {
        self.conditional[family.rank()]
    }

    pub fn full_of(&self, family: ParamFamily) -> Option<f64> {
        self.full.map(|f| f[family.rank()])
    }

    /// `CRB_alpha = CRB_alpha_R + CRB_alpha_I`
    pub fn conditional_alpha(&self) -> f64 {
        self.conditional[4] + self.conditional[5]
    }

    pub fn full_alpha(&self) -> Option<f64> {
        self.full.map(|f| f[4] + f[5])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbReport {
    pub targets: Vec<TargetBounds>,
    pub condition_number: f64,
    pub near_singular: bool,
    /// Parameters spanning the null space when the full inverse does not exist.
    pub singular: Option<Vec<String>>,
}

impl CrbReport {
    pub fn from_fim(fim: &Fim) -> Result<Self> {
        let q = fim.n_targets();
        let layout = fim.index_map().to_vec();
        let conditional: Vec<f64> = layout.iter().map(|p| crb_conditional(fim, *p)).collect::<Result<_>>()?;
        let (full, singular, condition_number, near_singular) = match crb_full(fim, &layout) {
            Ok(f) => {
                (Some(f.bounds.iter().map(|(_, b)| *b).collect::<Vec<_>>()), None, f.condition_number, f.near_singular)
            }
            Err(Error::SingularFim(names)) => (None, Some(names), fim.condition_number(), true),
            Err(e) => return Err(e),
        };
        let pick = |values: &[f64], target: usize| {
            let mut out = [0.0; 6];
            for family in ParamFamily::ALL {
                out[family.rank()] = values[ParamIndex::new(family, target).flat(q)];
            }
            out
        };
        let targets = (0..q)
            .map(|t| TargetBounds { conditional: pick(&conditional, t), full: full.as_ref().map(|f| pick(f, t)) })
            .collect();
        Ok(Self { targets, condition_number, near_singular, singular })
    }
}
