//! Known-covariance analysis of the family `T₀²(η) = n X̄' Σ^{2η} X̄`.
//!
//! Under the normal approximation the test rejects when
//! `T₀²(η) ≥ z_α σ₀(η) + tr(Σ^{1+2η})` with `σ₀(η)² = 2 tr(Σ^{2+4η})`, and its
//! power is `Φ{−z_α σ₀/σ + nμ'Σ^{2η}μ/σ}` with
//! `σ(η)² = σ₀(η)² + 4n μ'Σ^{1+4η}μ`. All spectral quantities are evaluated
//! from one eigendecomposition of Σ.

use serde::{Deserialize, Serialize};

use crate::dist::{normal_cdf, upper_quantile};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{check_power_spectrum, matrix_power, DataMatrix, SymmetricMatrix};
use crate::scalar::Real;

/// Local/non-local alternatives are judged numerically with these ratio
/// thresholds on `n μ'Σ^{1+4η}μ / tr(Σ^{2+4η})`.
pub const LOCAL_RATIO: f64 = 0.1;
pub const NON_LOCAL_RATIO: f64 = 10.0;

/// Projection residual below which μ counts as lying in an eigen-block.
pub const BLOCK_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec<T: Real> {
    pub sigma: SymmetricMatrix<T>,
    pub mu: Vec<T>,
    pub n: usize,
    pub eta: T,
    pub alpha: T,
}

impl<T: Real> OracleSpec<T> {
    fn validate(&self) -> Result<()> {
        if self.mu.len() != self.sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("mean of length {}", self.sigma.dim()),
                found: format!("{}", self.mu.len()),
            });
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("sample size must be positive".into()));
        }
        Ok(())
    }
}

/// Sorted spectrum of Σ and the cut indices separating its low and high
/// eigen-blocks.
#[derive(Debug, Clone)]
pub struct SpectralSummary<T> {
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// Column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: Matrix<T>,
    /// Σλ²/p.
    pub lambda_bar_sq: T,
    /// Σλ⁻²/p.
    pub lambda_tilde_sq: T,
    /// Number of eigenvalues `≤ min(λ̄, λ̃⁻¹)`; the low block is columns
    /// `0..m1`.
    pub m1: usize,
    /// One-based index of the first eigenvalue `≥ max(λ̄, λ̃⁻¹)`; the high
    /// block is columns `m2-1..p`. Equals `p + 1` when that block is empty.
    pub m2: usize,
}

impl<T: Real> SpectralSummary<T> {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Coordinates of `v` in the eigenbasis.
    pub fn coordinates(&self, v: &[T]) -> Vec<T> {
        let p = self.p();
        (0..p)
            .map(|j| (0..p).map(|i| self.eigenvectors[(i, j)] * v[i]).sum())
            .collect()
    }

    /// `tr(Σ^a)`.
    pub fn trace_power(&self, a: T) -> T {
        self.eigenvalues.iter().map(|&l| l.powf(a)).sum()
    }

    /// `v' Σ^a v` given eigen-coordinates `c` of `v`.
    pub fn form_power(&self, c: &[T], a: T) -> T {
        c.iter()
            .zip(&self.eigenvalues)
            .map(|(&ci, &l)| ci * ci * l.powf(a))
            .sum()
    }

    /// `Σ_j λ_j ξ_j ξ_j'`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let p = self.p();
        Matrix::from_fn(p, p, |i, j| {
            (0..p)
                .map(|k| {
                    self.eigenvalues[k] * self.eigenvectors[(i, k)] * self.eigenvectors[(j, k)]
                })
                .sum()
        })
    }
}

pub fn spectral_summary<T: Real>(sigma: &SymmetricMatrix<T>) -> Result<SpectralSummary<T>> {
    let eig = sigma.eigen()?;
    check_power_spectrum(&eig.values)?;
    let p = eig.values.len();
    let pf = T::from_count(p);
    let lambda_bar_sq = eig.values.iter().map(|&l| l * l).sum::<T>() / pf;
    let lambda_tilde_sq = eig.values.iter().map(|&l| T::one() / (l * l)).sum::<T>() / pf;
    let (bar, tilde_inv) = (lambda_bar_sq.sqrt(), T::one() / lambda_tilde_sq.sqrt());
    // a few ulps of slack so exact ties (e.g. Σ = I) land in both blocks
    let slack = T::one() + T::lit(1e-12);
    let low = bar.min(tilde_inv) * slack;
    let high = bar.max(tilde_inv) / slack;
    let m1 = eig.values.iter().filter(|&&l| l <= low).count();
    let m2 = eig
        .values
        .iter()
        .position(|&l| l >= high)
        .map_or(p + 1, |j| j + 1);
    Ok(SpectralSummary {
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        lambda_bar_sq,
        lambda_tilde_sq,
        m1,
        m2,
    })
}

/// Spectral moments entering the oracle SNR and power at one η.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OracleMoments<T> {
    /// n μ'Σ^{2η}μ.
    pub shift: T,
    /// tr(Σ^{1+2η}), the null mean.
    pub centering: T,
    /// σ₀(η).
    pub sigma0: T,
    /// σ(η).
    pub sigma: T,
    /// n μ'Σ^{1+4η}μ / tr(Σ^{2+4η}).
    pub local_ratio: T,
}

impl<T: Real> OracleMoments<T> {
    pub fn snr(&self) -> T {
        self.shift / self.sigma
    }

    pub fn power(&self, alpha: T) -> T {
        normal_cdf(-upper_quantile(alpha) * self.sigma0 / self.sigma + self.shift / self.sigma)
    }
}

pub fn oracle_moments<T: Real>(
    summary: &SpectralSummary<T>,
    mu: &[T],
    n: usize,
    eta: T,
) -> OracleMoments<T> {
    let c = summary.coordinates(mu);
    moments_from_coordinates(summary, &c, n, eta)
}

fn moments_from_coordinates<T: Real>(
    summary: &SpectralSummary<T>,
    c: &[T],
    n: usize,
    eta: T,
) -> OracleMoments<T> {
    let one = T::one();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let nf = T::from_count(n);
    let tr2 = summary.trace_power(two + four * eta);
    let mixed = nf * summary.form_power(c, one + four * eta);
    OracleMoments {
        shift: nf * summary.form_power(c, two * eta),
        centering: summary.trace_power(one + two * eta),
        sigma0: (two * tr2).sqrt(),
        sigma: (two * tr2 + four * mixed).sqrt(),
        local_ratio: mixed / tr2,
    }
}

/// `n X̄' Σ^{2η} X̄`.
pub fn oracle_statistic<T: Real>(x: &DataMatrix<T>, spec: &OracleSpec<T>) -> Result<T> {
    spec.validate()?;
    if x.p() != spec.sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} variables", spec.sigma.dim()),
            found: format!("{}", x.p()),
        });
    }
    let m = matrix_power(&spec.sigma, T::lit(2.0) * spec.eta)?;
    let mean = x.column_means();
    Ok(T::from_count(x.n()) * m.matrix().quadratic_form(&mean)?)
}

/// SNR_Or(μ, η).
pub fn oracle_snr<T: Real>(spec: &OracleSpec<T>) -> Result<T> {
    spec.validate()?;
    let s = spectral_summary(&spec.sigma)?;
    Ok(oracle_moments(&s, &spec.mu, spec.n, spec.eta).snr())
}

/// β_Or(μ, η).
pub fn oracle_power<T: Real>(spec: &OracleSpec<T>) -> Result<T> {
    spec.validate()?;
    if !(spec.alpha > T::zero() && spec.alpha < T::one()) {
        return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
    }
    let s = spectral_summary(&spec.sigma)?;
    Ok(oracle_moments(&s, &spec.mu, spec.n, spec.eta).power(spec.alpha))
}

/// Precomputed oracle test for repeated use on simulated samples.
#[derive(Debug, Clone)]
pub struct OracleTest<T> {
    transform: Matrix<T>,
    centering: T,
    sigma0: T,
    critical: T,
}

impl<T: Real> OracleTest<T> {
    pub fn new(sigma: &SymmetricMatrix<T>, eta: T, alpha: T) -> Result<Self> {
        let s = spectral_summary(sigma)?;
        let two = T::lit(2.0);
        let transform = matrix_power(sigma, two * eta)?.matrix().clone();
        let centering = s.trace_power(T::one() + two * eta);
        let sigma0 = (two * s.trace_power(two + T::lit(4.0) * eta)).sqrt();
        Ok(Self {
            transform,
            centering,
            sigma0,
            critical: upper_quantile(alpha),
        })
    }

    pub fn statistic(&self, x: &DataMatrix<T>) -> Result<T> {
        let mean = x.column_means();
        Ok(T::from_count(x.n()) * self.transform.quadratic_form(&mean)?)
    }

    pub fn z_score(&self, x: &DataMatrix<T>) -> Result<T> {
        Ok((self.statistic(x)? - self.centering) / self.sigma0)
    }

    pub fn rejects(&self, x: &DataMatrix<T>) -> Result<bool> {
        Ok(self.z_score(x)? >= self.critical)
    }
}

/// Which eigen-block the mean lies in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenBlock {
    /// Span of ξ₁…ξ_{m1}: expect β(−1) ≥ β(−½) ≥ β(0).
    Low,
    /// Span of ξ_{m2}…ξ_p: expect β(−1) ≤ β(−½) ≤ β(0).
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Proposition3Report<T> {
    pub block: EigenBlock,
    /// Relative norm of μ outside the block.
    pub projection_residual: T,
    /// Powers at η = −1, −½, 0.
    pub powers: [T; 3],
    pub snrs: [T; 3],
    /// Local ratios n μ'Σ^{1+4η}μ / tr(Σ^{2+4η}) at the same η values.
    pub local_ratios: [T; 3],
    /// All three ratios are below [`LOCAL_RATIO`].
    pub local_condition_met: bool,
    pub ordering_holds: bool,
}

/// Relative residual of projecting `c` (eigen-coordinates) onto `range`.
fn block_residual<T: Real>(c: &[T], range: std::ops::Range<usize>) -> T {
    let total: T = c.iter().map(|&v| v * v).sum();
    if total == T::zero() {
        return T::zero();
    }
    let outside: T = c
        .iter()
        .enumerate()
        .filter(|(j, _)| !range.contains(j))
        .map(|(_, &v)| v * v)
        .sum();
    (outside / total).sqrt()
}

/// Evaluates the oracle powers at η ∈ {−1, −½, 0} for a mean lying in the
/// low or high eigen-block of Σ and checks the expected ordering.
///
/// Fails when μ is in neither block. The local-alternative condition is
/// reported, not enforced.
pub fn proposition3_check<T: Real>(
    sigma: &SymmetricMatrix<T>,
    mu: &[T],
    n: usize,
    alpha: T,
) -> Result<Proposition3Report<T>> {
    let p = sigma.dim();
    if mu.len() != p {
        return Err(Error::DimensionMismatch {
            expected: format!("mean of length {p}"),
            found: format!("{}", mu.len()),
        });
    }
    let s = spectral_summary(sigma)?;
    let c = s.coordinates(mu);
    let low = block_residual(&c, 0..s.m1);
    let high = block_residual(&c, s.m2.saturating_sub(1)..p);
    let tol = T::lit(BLOCK_RESIDUAL_TOL);
    let (block, projection_residual) = if low < tol {
        (EigenBlock::Low, low)
    } else if high < tol {
        (EigenBlock::High, high)
    } else {
        return Err(Error::InvalidInput(format!(
            "mean lies in neither eigen-block (residuals {:e} low, {:e} high)",
            low.as_f64(),
            high.as_f64()
        )));
    };
    let etas = [-T::one(), T::lit(-0.5), T::zero()];
    let moments = etas.map(|eta| moments_from_coordinates(&s, &c, n, eta));
    let powers = moments.map(|m| m.power(alpha));
    let snrs = moments.map(|m| m.snr());
    let local_ratios = moments.map(|m| m.local_ratio);
    let ordering_holds = match block {
        EigenBlock::Low => powers[0] >= powers[1] && powers[1] >= powers[2],
        EigenBlock::High => powers[0] <= powers[1] && powers[1] <= powers[2],
    };
    Ok(Proposition3Report {
        block,
        projection_residual,
        powers,
        snrs,
        local_ratios,
        local_condition_met: local_ratios.iter().all(|&r| r < T::lit(LOCAL_RATIO)),
        ordering_holds,
    })
}

/// Signal regime at one η.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Local,
    Intermediate,
    NonLocal,
}

/// Classifies `2n μ'Σ^{1+4η}μ / tr(Σ^{2+4η})` against the local (0.1) and
/// non-local (10) thresholds; returns the ratio alongside.
pub fn alternative_regime<T: Real>(spec: &OracleSpec<T>) -> Result<(Regime, T)> {
    spec.validate()?;
    let s = spectral_summary(&spec.sigma)?;
    let ratio = T::lit(2.0) * oracle_moments(&s, &spec.mu, spec.n, spec.eta).local_ratio;
    let regime = if ratio < T::lit(LOCAL_RATIO) {
        Regime::Local
    } else if ratio > T::lit(NON_LOCAL_RATIO) {
        Regime::NonLocal
    } else {
        Regime::Intermediate
    };
    Ok((regime, ratio))
}
