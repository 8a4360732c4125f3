//! Small dense linear-algebra helpers: compensated summation and a
//! Bunch-Kaufman symmetric indefinite factorization.

use nalgebra::{DMatrix, DVector};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Entry-wise compensated accumulation of equally sized matrices.
#[derive(Debug, Clone)]
pub struct MatrixAccumulator {
    sums: Vec<CompensatedSum>,
    rows: usize,
    cols: usize,
}

impl MatrixAccumulator {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { sums: vec![CompensatedSum::default(); rows * cols], rows, cols }
    }

    pub fn add(&mut self, m: &DMatrix<f64>) {
        debug_assert_eq!(m.shape(), (self.rows, self.cols));
        for (acc, v) in self.sums.iter_mut().zip(m.iter()) {
            acc.add(*v);
        }
    }

    pub fn add_entry(&mut self, i: usize, j: usize, value: f64) {
        self.sums[j * self.rows + i].add(value);
    }

    pub fn value(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(self.rows, self.cols, self.sums.iter().map(CompensatedSum::value))
    }
}

/// Sums matrices in slice order with compensated accumulation.
pub fn ordered_sum(matrices: &[DMatrix<f64>]) -> Option<DMatrix<f64>> {
    let first = matrices.first()?;
    let mut acc = MatrixAccumulator::new(first.nrows(), first.ncols());
    for m in matrices {
        acc.add(m);
    }
    Some(acc.value())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pivot {
    One(f64),
    /// Symmetric 2x2 block `[[a, b], [b, c]]`.
    Two(f64, f64, f64),
}

/// `P A P^T = L D L^T` with unit lower-triangular `L` and 1x1/2x2 diagonal blocks.
#[derive(Debug, Clone)]
pub struct BunchKaufman {
    l: DMatrix<f64>,
    pivots: Vec<(usize, Pivot)>,
    /// `perm[i]` is the original row now at position `i`.
    perm: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroPivot {
    /// Original index of the row that could not be pivoted.
    pub index: usize,
}

impl BunchKaufman {
    const ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + sqrt(17)) / 8

    /// Factorizes a symmetric matrix; pivots below `tol * max|a_ij|` count as zero.
    pub fn new(a: &DMatrix<f64>, tol: f64) -> Result<Self, ZeroPivot> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Bunch-Kaufman needs a square matrix");
        let scale = a.amax();
        let zero = tol * scale;
        let mut w = a.clone();
        let mut l = DMatrix::<f64>::identity(n, n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::new();

        let swap = |w: &mut DMatrix<f64>, l: &mut DMatrix<f64>, perm: &mut Vec<usize>, k: usize, i: usize, j: usize| {
            if i == j {
                return;
            }
            w.swap_rows(i, j);
            w.swap_columns(i, j);
            for c in 0..k {
                l.swap((i, c), (j, c));
            }
            perm.swap(i, j);
        };

        let mut k = 0;
        while k < n {
            let absakk = w[(k, k)].abs();
            let (imax, colmax) =
                ((k + 1)..n)
                    .map(|i| (i, w[(i, k)].abs()))
                    .fold((k, 0.0), |best, c| if c.1 > best.1 { c } else { best });
            if absakk.max(colmax) <= zero {
                return Err(ZeroPivot { index: perm[k] });
            }
            let mut two = false;
            if absakk >= Self::ALPHA * colmax {
                // 1x1 pivot, no interchange
            } else {
                let rowmax = (k..n).filter(|&j| j != imax).map(|j| w[(imax, j)].abs()).fold(0.0, f64::max);
                if absakk * rowmax >= Self::ALPHA * colmax * colmax {
                    // keep k
                } else if w[(imax, imax)].abs() >= Self::ALPHA * rowmax {
                    swap(&mut w, &mut l, &mut perm, k, k, imax);
                } else {
                    swap(&mut w, &mut l, &mut perm, k, k + 1, imax);
                    two = true;
                }
            }

            if !two {
                let d = w[(k, k)];
                if d.abs() <= zero {
                    return Err(ZeroPivot { index: perm[k] });
                }
                for i in (k + 1)..n {
                    l[(i, k)] = w[(i, k)] / d;
                }
                for j in (k + 1)..n {
                    for i in (k + 1)..n {
                        w[(i, j)] -= l[(i, k)] * d * l[(j, k)];
                    }
                }
                pivots.push((k, Pivot::One(d)));
                k += 1;
            } else {
                let (a, b, c) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
                let det = a * c - b * b;
                if det.abs() <= zero * zero {
                    return Err(ZeroPivot { index: perm[k] });
                }
                for i in (k + 2)..n {
                    let (wi0, wi1) = (w[(i, k)], w[(i, k + 1)]);
                    l[(i, k)] = (wi0 * c - wi1 * b) / det;
                    l[(i, k + 1)] = (wi1 * a - wi0 * b) / det;
                }
                for j in (k + 2)..n {
                    for i in (k + 2)..n {
                        w[(i, j)] -= l[(i, k)] * w[(j, k)] + l[(i, k + 1)] * w[(j, k + 1)];
                    }
                }
                pivots.push((k, Pivot::Two(a, b, c)));
                k += 2;
            }
        }
        Ok(Self { l, pivots, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of (positive, negative) eigenvalues of the factored matrix.
    pub fn inertia(&self) -> (usize, usize) {
        let mut pos = 0;
        let mut neg = 0;
        for (_, p) in &self.pivots {
            match *p {
                Pivot::One(d) => {
                    if d > 0.0 {
                        pos += 1
                    } else {
                        neg += 1
                    }
                }
                Pivot::Two(a, b, c) => {
                    let det = a * c - b * b;
                    if det < 0.0 {
                        pos += 1;
                        neg += 1;
                    } else if a + c > 0.0 {
                        pos += 2;
                    } else {
                        neg += 2;
                    }
                }
            }
        }
        (pos, neg)
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = DVector::from_iterator(n, self.perm.iter().map(|&p| rhs[p]));
        // L z = P b
        for j in 0..n {
            let yj = y[j];
            for i in (j + 1)..n {
                y[i] -= self.l[(i, j)] * yj;
            }
        }
        for (k, p) in &self.pivots {
            match *p {
                Pivot::One(d) => y[*k] /= d,
                Pivot::Two(a, b, c) => {
                    let det = a * c - b * b;
                    let (u, v) = (y[*k], y[*k + 1]);
                    y[*k] = (c * u - b * v) / det;
                    y[*k + 1] = (a * v - b * u) / det;
                }
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for i in (j + 1)..n {
                s -= self.l[(i, j)] * y[i];
            }
            y[j] = s;
        }
        let mut out = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = y[i];
        }
        out
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for j in 0..rhs.ncols() {
            out.set_column(j, &self.solve(&rhs.column(j).into_owned()));
        }
        out
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_matrix(&DMatrix::identity(self.dim(), self.dim()))
    }
}
