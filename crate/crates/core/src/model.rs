//! Observation matrices, symmetric matrices and the covariance designs used
//! by the simulator.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::scalar::Real;

/// n×p sample, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T> {
    values: Matrix<T>,
}

impl<T: Real> DataMatrix<T> {
    /// Requires n ≥ 2, p ≥ 1 and finite entries.
    pub fn new(values: Matrix<T>) -> Result<Self> {
        if values.rows() < 2 {
            return Err(Error::TooFewSamples {
                required: 2,
                found: values.rows(),
            });
        }
        if values.cols() < 1 {
            return Err(Error::InvalidInput("data matrix has no columns".into()));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("data matrix".into()));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Sample count.
    #[inline]
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    /// Dimension.
    #[inline]
    pub fn p(&self) -> usize {
        self.values.cols()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        self.values.row(i)
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.values.column(j)
    }

    /// Columns as owned vectors, the layout the per-column regressions use.
    pub fn columns(&self) -> Vec<Vec<T>> {
        let (n, p) = (self.n(), self.p());
        let mut cols = vec![Vec::with_capacity(n); p];
        for i in 0..n {
            for (c, &x) in cols.iter_mut().zip(self.row(i)) {
                c.push(x);
            }
        }
        cols
    }

    pub fn column_means(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.p()];
        for i in 0..self.n() {
            for (mj, &x) in m.iter_mut().zip(self.row(i)) {
                *mj += x;
            }
        }
        let n = T::from_count(self.n());
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Sub-sample with the listed rows; fails if fewer than two remain.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.values.select_rows(idx))
    }

    pub fn select_cols(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.values.select_cols(idx))
    }
}

/// Real symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", try_from = "Matrix<T>", into = "Matrix<T>")]
pub struct SymmetricMatrix<T: Real> {
    values: Matrix<T>,
}

impl<T: Real> TryFrom<Matrix<T>> for SymmetricMatrix<T> {
    type Error = Error;
    fn try_from(m: Matrix<T>) -> Result<Self> {
        Self::new(m)
    }
}

impl<T: Real> From<SymmetricMatrix<T>> for Matrix<T> {
    fn from(s: SymmetricMatrix<T>) -> Self {
        s.values
    }
}

impl<T: Real> SymmetricMatrix<T> {
    /// Checks squareness and `|a_ij - a_ji| <= tol * max(1, |a_ij|)`.
    pub fn new(values: Matrix<T>) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(Error::DimensionMismatch {
                expected: "square matrix".into(),
                found: format!("{}x{}", values.rows(), values.cols()),
            });
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("symmetric matrix".into()));
        }
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
        let n = values.rows();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (values[(i, j)], values[(j, i)]);
                if (a - b).abs() > tol * T::one().max(a.abs()) {
                    return Err(Error::InvalidInput(format!(
                        "matrix not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            values: Matrix::identity(p),
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self {
            values: Matrix::from_diagonal(diag),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix<T> {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[(i, j)]
    }

    pub fn eigen(&self) -> Result<SymmetricEigen<T>> {
        SymmetricEigen::new(&self.values)
    }

    /// Verifies λ_min > 1e-10 · λ_max.
    pub fn check_positive_definite(&self) -> Result<()> {
        let eig = self.eigen()?;
        check_spectrum(&eig.values, T::lit(1e-10))
    }
}

fn check_spectrum<T: Real>(values: &[T], rel_tol: T) -> Result<()> {
    let (Some(&lo), Some(&hi)) = (values.first(), values.last()) else {
        return Ok(());
    };
    if !(hi > T::zero()) || !(lo > rel_tol * hi) {
        return Err(Error::NotPositiveDefinite {
            smallest_eigenvalue: lo.as_f64(),
            largest_eigenvalue: hi.as_f64(),
        });
    }
    Ok(())
}

/// Covariance structures available to the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub enum CovarianceModel<T: Real> {
    /// σ_ij = ρ^|i-j|.
    Ar1 {
        rho: T,
    },
    /// `blocks` leading blocks of `block_size` equicorrelated variables;
    /// everything else unit variance and uncorrelated. `blocks = None` fills
    /// as many whole blocks as fit in p.
    BlockDiag {
        block_size: usize,
        blocks: Option<usize>,
        rho: T,
    },
    /// Σ = ΓΓ' + I where each row of Γ has `nonzeros_per_row` entries with
    /// magnitude Unif(low, high) and a random sign.
    RandomSparse {
        nonzeros_per_row: usize,
        low: T,
        high: T,
        seed: u64,
    },
    /// Unit variances, common correlation ρ.
    EqualCorr {
        rho: T,
    },
    Explicit(SymmetricMatrix<T>),
}

impl<T: Real> CovarianceModel<T> {
    /// The four simulation designs (a)–(d): AR(1) with ρ = 0.6, four blocks of
    /// two with ρ = 0.6, random sparse with four nonzeros per row, and equal
    /// correlation 0.6.
    pub fn standard(letter: char, seed: u64) -> Result<Self> {
        let rho = T::lit(0.6);
        Ok(match letter.to_ascii_lowercase() {
            'a' => Self::Ar1 { rho },
            'b' => Self::BlockDiag {
                block_size: 2,
                blocks: Some(4),
                rho,
            },
            'c' => Self::RandomSparse {
                nonzeros_per_row: 4,
                low: T::one(),
                high: T::lit(2.0),
                seed,
            },
            'd' => Self::EqualCorr { rho },
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown covariance model '{other}' (expected a, b, c or d)"
                )))
            }
        })
    }

    /// Builds the p×p matrix and verifies it is positive definite.
    pub fn materialize(&self, p: usize) -> Result<SymmetricMatrix<T>> {
        if p == 0 {
            return Err(Error::InvalidInput("dimension p must be at least 1".into()));
        }
        let m = match self {
            Self::Ar1 { rho } => Matrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32)),
            Self::BlockDiag {
                block_size,
                blocks,
                rho,
            } => {
                if *block_size == 0 {
                    return Err(Error::InvalidInput("block size must be positive".into()));
                }
                let fit = p / block_size;
                let nblocks = blocks.map_or(fit, |b| b.min(fit));
                let covered = nblocks * block_size;
                Matrix::from_fn(p, p, |i, j| {
                    if i == j {
                        T::one()
                    } else if i < covered && j < covered && i / block_size == j / block_size {
                        *rho
                    } else {
                        T::zero()
                    }
                })
            }
            Self::RandomSparse {
                nonzeros_per_row,
                low,
                high,
                seed,
            } => {
                if *nonzeros_per_row > p {
                    return Err(Error::InvalidInput(format!(
                        "{nonzeros_per_row} nonzeros per row exceed p = {p}"
                    )));
                }
                if !(low <= high) {
                    return Err(Error::InvalidInput("magnitude range is empty".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let (lo, hi) = (low.as_f64(), high.as_f64());
                let mut gamma = Matrix::<T>::zeros(p, p);
                for i in 0..p {
                    for j in sample(&mut rng, p, *nonzeros_per_row).into_vec() {
                        let mag = if hi > lo {
                            rng.random_range(lo..hi)
                        } else {
                            lo
                        };
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        gamma[(i, j)] = T::lit(sign * mag);
                    }
                }
                let mut s = gamma.matmul(&gamma.transpose())?;
                for i in 0..p {
                    s[(i, i)] += T::one();
                }
                s
            }
            Self::EqualCorr { rho } => {
                Matrix::from_fn(p, p, |i, j| if i == j { T::one() } else { *rho })
            }
            Self::Explicit(s) => {
                if s.dim() != p {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{p}x{p}"),
                        found: format!("{0}x{0}", s.dim()),
                    });
                }
                s.matrix().clone()
            }
        };
        let s = SymmetricMatrix::new(m)?;
        s.check_positive_definite()?;
        Ok(s)
    }
}

/// `S^eta` through the symmetric eigendecomposition.
///
/// Fails when an eigenvalue is at most 1e-12 times the largest one.
pub fn matrix_power<T: Real>(s: &SymmetricMatrix<T>, eta: T) -> Result<SymmetricMatrix<T>> {
    let eig = s.eigen()?;
    check_power_spectrum(&eig.values)?;
    Ok(SymmetricMatrix {
        values: eig.reconstruct_with(|x| x.powf(eta)),
    })
}

pub(crate) fn check_power_spectrum<T: Real>(values: &[T]) -> Result<()> {
    let hi = values.last().copied().unwrap_or_else(T::one);
    let tol = T::lit(1e-12) * hi.abs();
    for (index, &v) in values.iter().enumerate() {
        if !(v > tol) {
            return Err(Error::SingularEigenvalue {
                index,
                value: v.as_f64(),
            });
        }
    }
    Ok(())
}
