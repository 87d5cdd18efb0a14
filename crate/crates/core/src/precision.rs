//! Banded modified-Cholesky precision estimators.
//!
//! The precision is represented as `(I - A)' D^{-1} (I - A)` where row `l` of
//! the strictly lower-triangular `A` holds the coefficients of variable `l` on
//! its `min(k, l)` immediate predecessors and `D` holds the matching residual
//! variances. Column indices in errors are zero-based.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spd_solve, HouseholderQr, Matrix};
use crate::model::{DataMatrix, SymmetricMatrix};
use crate::scalar::Real;

/// Predecessor designs with a column-normalised condition estimate above
/// this are treated as singular.
pub const MAX_DESIGN_CONDITION: f64 = 1e12;

/// Residual variances below this fraction of the raw second moment are
/// treated as exact collinearity.
const DEGENERATE_RESIDUAL: f64 = 1e-12;

/// Sparse storage of `A` and `D` with band width `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedFactor<T> {
    k: usize,
    /// `coefs[l][t]` multiplies variable `band_start(l) + t`.
    coefs: Vec<Vec<T>>,
    d: Vec<T>,
}

impl<T: Real> BandedFactor<T> {
    /// Validates the band structure and positivity of `d`.
    pub fn new(k: usize, coefs: Vec<Vec<T>>, d: Vec<T>) -> Result<Self> {
        if coefs.len() != d.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} coefficient rows", d.len()),
                found: format!("{}", coefs.len()),
            });
        }
        for (l, row) in coefs.iter().enumerate() {
            if row.len() != l.min(k) {
                return Err(Error::InvalidInput(format!(
                    "row {l} has {} coefficients, band allows {}",
                    row.len(),
                    l.min(k)
                )));
            }
        }
        for (l, &dl) in d.iter().enumerate() {
            if !(dl > T::zero()) || !dl.is_finite() {
                return Err(Error::DegenerateResidual { column: l });
            }
        }
        Ok(Self { k, coefs, d })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.d.len()
    }

    /// First predecessor index used for variable `l`.
    #[inline]
    pub fn band_start(&self, l: usize) -> usize {
        l.saturating_sub(self.k)
    }

    /// Coefficients of row `l` on variables `band_start(l)..l`.
    #[inline]
    pub fn row_coefficients(&self, l: usize) -> &[T] {
        &self.coefs[l]
    }

    /// Residual variances, the diagonal of `D`.
    #[inline]
    pub fn residual_variances(&self) -> &[T] {
        &self.d
    }

    /// Dense strictly lower-triangular `A`.
    pub fn a_dense(&self) -> Matrix<T> {
        let p = self.p();
        let mut a = Matrix::zeros(p, p);
        for l in 0..p {
            let s = self.band_start(l);
            for (t, &c) in self.coefs[l].iter().enumerate() {
                a[(l, s + t)] = c;
            }
        }
        a
    }

    /// `(I - A) x` for a single observation.
    pub fn decorrelate(&self, x: &[T]) -> Vec<T> {
        (0..self.p())
            .map(|l| {
                let s = self.band_start(l);
                let fitted = self.coefs[l]
                    .iter()
                    .zip(&x[s..l])
                    .fold(T::zero(), |acc, (&c, &v)| acc + c * v);
                x[l] - fitted
            })
            .collect()
    }

    /// `v' (I - A)' D^{-1} (I - A) w`.
    pub fn bilinear(&self, v: &[T], w: &[T]) -> T {
        let zv = self.decorrelate(v);
        let zw = self.decorrelate(w);
        zv.iter()
            .zip(&zw)
            .zip(&self.d)
            .fold(T::zero(), |acc, ((&a, &b), &d)| acc + a * b / d)
    }

    /// Dense `(I - A)' D^{-1} (I - A)`.
    pub fn assemble(&self) -> SymmetricMatrix<T> {
        let p = self.p();
        let mut out = Matrix::zeros(p, p);
        for l in 0..p {
            let s = self.band_start(l);
            // nonzeros of row l of (I - A): -coefs on s..l, then 1 at l
            let mut idx: Vec<usize> = (s..l).collect();
            idx.push(l);
            let mut val: Vec<T> = self.coefs[l].iter().map(|&c| -c).collect();
            val.push(T::one());
            let inv_d = T::one() / self.d[l];
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    out[(i, j)] += val[a] * val[b] * inv_d;
                }
            }
        }
        SymmetricMatrix::new(out).expect("outer-product sum is symmetric")
    }

    /// Rows `(I - A) X_i`.
    pub fn transform(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} columns", self.p()),
                found: format!("{}", x.cols()),
            });
        }
        let mut z = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            z.row_mut(i).copy_from_slice(&self.decorrelate(x.row(i)));
        }
        Ok(z)
    }

    /// `G = X Ω X'` computed as `Z D^{-1} Z'` without forming Ω.
    pub fn gram(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = self.transform(x)?;
        let scale: Vec<T> = self.d.iter().map(|d| (T::one() / *d).sqrt()).collect();
        for i in 0..z.rows() {
            for (v, &s) in z.row_mut(i).iter_mut().zip(&scale) {
                *v *= s;
            }
        }
        let n = z.rows();
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = crate::linalg::dot(z.row(i), z.row(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }
}

/// Banded Cholesky precision estimate fitted from a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedPrecision<T> {
    pub factor: BandedFactor<T>,
    pub n_used: usize,
}

/// Banded Cholesky precision computed from a known covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationBandedPrecision<T> {
    pub factor: BandedFactor<T>,
}

impl<T: Real> BandedPrecision<T> {
    pub fn k(&self) -> usize {
        self.factor.k()
    }

    pub fn assemble(&self) -> SymmetricMatrix<T> {
        self.factor.assemble()
    }
}

impl<T: Real> PopulationBandedPrecision<T> {
    pub fn k(&self) -> usize {
        self.factor.k()
    }

    pub fn assemble(&self) -> SymmetricMatrix<T> {
        self.factor.assemble()
    }
}

/// Fits the banded estimator: each raw column is regressed, without
/// intercept or centering, on its `min(k, l)` predecessors.
///
/// Requires `k <= n - 2`.
pub fn estimate_banded_precision<T: Real>(
    x: &DataMatrix<T>,
    k: usize,
) -> Result<BandedPrecision<T>> {
    let n = x.n();
    if k + 2 > n {
        return Err(Error::BandTooWide { k, n, margin: 1 });
    }
    let cols = x.columns();
    let nf = T::from_count(n);
    let max_cond = T::lit(MAX_DESIGN_CONDITION);
    let fits: Vec<(Vec<T>, T)> = (0..x.p())
        .into_par_iter()
        .with_min_len(16)
        .map(|l| {
            let y = &cols[l];
            let raw = y.iter().fold(T::zero(), |acc, &v| acc + v * v) / nf;
            let start = l.saturating_sub(k);
            let (coef, rss) = if start == l {
                (Vec::new(), raw)
            } else {
                let qr = HouseholderQr::new(&cols[start..l], max_cond).map_err(|c| {
                    Error::SingularDesign {
                        column: l,
                        condition: c.as_f64(),
                    }
                })?;
                let r = qr.residual(y);
                let rss = r.iter().fold(T::zero(), |acc, &v| acc + v * v) / nf;
                (qr.solve(y), rss)
            };
            if !(rss > T::lit(DEGENERATE_RESIDUAL) * raw) {
                return Err(Error::DegenerateResidual { column: l });
            }
            Ok((coef, rss))
        })
        .collect::<Result<_>>()?;
    let (coefs, d) = fits.into_iter().unzip();
    Ok(BandedPrecision {
        factor: BandedFactor::new(k, coefs, d)?,
        n_used: n,
    })
}

/// Population version: row `l` of `A_k` is `Σ_{l,P} Σ_{P}^{-1}` over the
/// predecessor block `P`, and `d_l = σ_ll − Σ_{l,P} Σ_P^{-1} Σ_{P,l}`.
pub fn population_banded_precision<T: Real>(
    sigma: &SymmetricMatrix<T>,
    k: usize,
) -> Result<PopulationBandedPrecision<T>> {
    let p = sigma.dim();
    let mut coefs = Vec::with_capacity(p);
    let mut d = Vec::with_capacity(p);
    for l in 0..p {
        let start = l.saturating_sub(k);
        let m = l - start;
        let (coef, dl) = if m == 0 {
            (Vec::new(), sigma.get(l, l))
        } else {
            let block = Matrix::from_fn(m, m, |i, j| sigma.get(start + i, start + j));
            let rhs: Vec<T> = (start..l).map(|j| sigma.get(j, l)).collect();
            let coef = spd_solve(&block, &rhs).map_err(|_| Error::SingularDesign {
                column: l,
                condition: f64::INFINITY,
            })?;
            let explained = crate::linalg::dot(&coef, &rhs);
            (coef, sigma.get(l, l) - explained)
        };
        if !(dl > T::zero()) {
            return Err(Error::DegenerateResidual { column: l });
        }
        coefs.push(coef);
        d.push(dl);
    }
    Ok(PopulationBandedPrecision {
        factor: BandedFactor::new(k, coefs, d)?,
    })
}

/// `Z` with `Z_i = (I - Â) X_i`.
pub fn apply_transform<T: Real>(
    x: &DataMatrix<T>,
    bp: &BandedPrecision<T>,
) -> Result<DataMatrix<T>> {
    DataMatrix::new(bp.factor.transform(x.matrix())?)
}
