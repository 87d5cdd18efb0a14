//! The one-sample neighborhood-assisted T² test.
//!
//! The statistic is `T²(k) = n X̄' Ω̂_k X̄` with `Ω̂_k` the banded Cholesky
//! precision estimate. Under H₀ it is centred at `p` and standardised by the
//! U-statistic estimate of `2 tr{(Ω_k Σ)²}`.

use serde::{Deserialize, Serialize};

use crate::dist::{normal_sf, upper_quantile};
use crate::error::{Error, Result};
use crate::ksel::{stability_select, SelectionConfig, SelectionResult};
use crate::linalg::{HouseholderQr, Matrix};
use crate::model::{DataMatrix, SymmetricMatrix};
use crate::precision::{
    estimate_banded_precision, BandedPrecision, PopulationBandedPrecision, MAX_DESIGN_CONDITION,
};
use crate::scalar::Real;

/// Outcome of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TestReport<T> {
    /// T²(k).
    pub statistic: T,
    /// Null centering, equal to the dimension p.
    pub centering: T,
    /// Estimated null standard deviation σ̂_{N,0}(k).
    pub sigma_hat: T,
    pub z_score: T,
    /// Upper-tail normal p-value of `z_score`.
    pub p_value: T,
    pub k: usize,
    pub alpha: T,
    pub reject: bool,
    pub n: usize,
    pub p: usize,
}

/// Per-column decomposition of the statistic through the intercept regressions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForm<T> {
    /// Contribution of each variable; entry `l` lies in `[0, F_l]`.
    pub terms: Vec<T>,
    /// `F_l = 1'(I - H_l)1`.
    pub f: Vec<T>,
}

impl<T: Real> RegressionForm<T> {
    pub fn total(&self) -> T {
        self.terms.iter().copied().sum()
    }
}

/// `n X̄' Ω̂ X̄`.
pub fn na_statistic<T: Real>(x: &DataMatrix<T>, bp: &BandedPrecision<T>) -> Result<T> {
    if x.p() != bp.factor.p() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} variables", bp.factor.p()),
            found: format!("{}", x.p()),
        });
    }
    let mean = x.column_means();
    Ok(T::from_count(x.n()) * bp.factor.bilinear(&mean, &mean))
}

/// Evaluates the statistic as `Σ_l F_l² α̂_l² / (ε̂_l'ε̂_l + F_l α̂_l²)` where
/// `α̂_l`, `ε̂_l` come from regressing column `l` on an intercept plus its
/// `min(k, l)` predecessors. Independent of the precision-matrix route.
pub fn na_statistic_regression_form<T: Real>(
    x: &DataMatrix<T>,
    k: usize,
) -> Result<RegressionForm<T>> {
    let n = x.n();
    if n < k + 3 {
        return Err(Error::BandTooWide { k, n, margin: 2 });
    }
    let cols = x.columns();
    let ones = vec![T::one(); n];
    let nf = T::from_count(n);
    let max_cond = T::lit(MAX_DESIGN_CONDITION);
    let singular = |column: usize| {
        move |c: T| Error::SingularDesign {
            column,
            condition: c.as_f64(),
        }
    };
    let sum_sq = |v: &[T]| v.iter().fold(T::zero(), |acc, &e| acc + e * e);

    let mut terms = Vec::with_capacity(x.p());
    let mut fs = Vec::with_capacity(x.p());
    for (l, y) in cols.iter().enumerate() {
        let start = l.saturating_sub(k);
        let f = if start == l {
            nf
        } else {
            let qr = HouseholderQr::new(&cols[start..l], max_cond).map_err(singular(l))?;
            sum_sq(&qr.residual(&ones))
        };
        fs.push(f);
        // intercept already (numerically) in the predecessor span
        if f <= T::lit(1e-12) * nf {
            terms.push(T::zero());
            continue;
        }
        let mut design = Vec::with_capacity(l - start + 1);
        design.push(ones.clone());
        design.extend_from_slice(&cols[start..l]);
        let qr = HouseholderQr::new(&design, max_cond).map_err(singular(l))?;
        let alpha = qr.solve(y)[0];
        let rss = sum_sq(&qr.residual(y));
        let denom = rss + f * alpha * alpha;
        if !(denom > T::lit(1e-12) * sum_sq(y)) {
            return Err(Error::DegenerateResidual { column: l });
        }
        terms.push(f * f * alpha * alpha / denom);
    }
    Ok(RegressionForm { terms, f: fs })
}

/// Distinct-index sums of a symmetric Gram matrix used by the variance
/// estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistinctSums<T> {
    /// Σ_{i≠j} G_ij².
    pub pairs: T,
    /// Σ*_{i,j,k} G_ij G_jk.
    pub triples: T,
    /// Σ*_{i,j,k,l} G_ij G_kl.
    pub quadruples: T,
}

/// O(n²) inclusion–exclusion over the off-diagonal part `G₀` of `G`:
/// with row sums `r` and total `t`,
/// triples = Σ r_j² − S, quadruples = t² − 2S − 4·triples.
pub fn distinct_sums<T: Real>(g: &Matrix<T>) -> DistinctSums<T> {
    let n = g.rows();
    let mut pairs = T::zero();
    let mut total = T::zero();
    let mut row_sq = T::zero();
    for i in 0..n {
        let mut r = T::zero();
        for (j, &v) in g.row(i).iter().enumerate() {
            if j != i {
                r += v;
                pairs += v * v;
            }
        }
        total += r;
        row_sq += r * r;
    }
    let triples = row_sq - pairs;
    let two = T::lit(2.0);
    let quadruples = total * total - two * pairs - T::lit(4.0) * triples;
    DistinctSums {
        pairs,
        triples,
        quadruples,
    }
}

/// Variance estimate from the Gram matrix `G = X Ω̂ X'`.
pub fn variance_from_gram<T: Real>(g: &Matrix<T>) -> Result<T> {
    let n = g.rows();
    if n < 4 {
        return Err(Error::TooFewSamples {
            required: 4,
            found: n,
        });
    }
    let s = distinct_sums(g);
    let nf = T::from_count(n);
    let one = T::one();
    let two = T::lit(2.0);
    let c2 = nf * (nf - one);
    let c3 = c2 * (nf - two);
    let c4 = c3 * (nf - T::lit(3.0));
    Ok(two * s.pairs / c2 - T::lit(4.0) * s.triples / c3 + two * s.quadruples / c4)
}

/// σ̂²_{N,0}(k): unbiased U-statistic estimate of `2 tr{(Ω_k Σ)²}`.
pub fn variance_estimator<T: Real>(x: &DataMatrix<T>, bp: &BandedPrecision<T>) -> Result<T> {
    variance_from_gram(&bp.factor.gram(x.matrix())?)
}

/// Significance level plus the `k <= n/10` guard switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig<T> {
    pub alpha: T,
    /// Skip the `k <= n/10` guard (a warning is logged instead).
    pub force_k: bool,
}

impl<T: Real> Default for TestConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.05),
            force_k: false,
        }
    }
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Checks the `k <= n/10` guard.
pub fn check_band_guard(k: usize, n: usize, force: bool) -> Result<()> {
    if k * 10 > n {
        if !force {
            return Err(Error::BandGuard { k, n });
        }
        log::warn!("k = {k} exceeds n/10 for n = {n}; proceeding because the guard was overridden");
    }
    Ok(())
}

/// Assembles a report from a statistic and its variance estimate.
pub fn make_report<T: Real>(
    statistic: T,
    variance: T,
    k: usize,
    n: usize,
    p: usize,
    alpha: T,
) -> Result<TestReport<T>> {
    if !statistic.is_finite() {
        return Err(Error::NonFinite("test statistic".into()));
    }
    if !(variance > T::zero()) || !variance.is_finite() {
        return Err(Error::NonPositiveVariance(variance.as_f64()));
    }
    let centering = T::from_count(p);
    let sigma_hat = variance.sqrt();
    let z_score = (statistic - centering) / sigma_hat;
    let p_value = normal_sf(z_score);
    // ties reject
    let reject = z_score >= upper_quantile(alpha);
    Ok(TestReport {
        statistic,
        centering,
        sigma_hat,
        z_score,
        p_value,
        k,
        alpha,
        reject,
        n,
        p,
    })
}

/// Runs the test at a fixed band width.
pub fn run_test<T: Real>(x: &DataMatrix<T>, k: usize, alpha: T) -> Result<TestReport<T>> {
    run_test_with(
        x,
        k,
        &TestConfig {
            alpha,
            force_k: false,
        },
    )
}

pub fn run_test_with<T: Real>(
    x: &DataMatrix<T>,
    k: usize,
    cfg: &TestConfig<T>,
) -> Result<TestReport<T>> {
    check_alpha(cfg.alpha)?;
    check_band_guard(k, x.n(), cfg.force_k)?;
    if x.n() < 4 {
        return Err(Error::TooFewSamples {
            required: 4,
            found: x.n(),
        });
    }
    let bp = estimate_banded_precision(x, k)?;
    let g = bp.factor.gram(x.matrix())?;
    let n = x.n();
    // n X̄'ΩX̄ = (1/n) Σ_ij G_ij
    let statistic = g.as_slice().iter().copied().sum::<T>() / T::from_count(n);
    let variance = variance_from_gram(&g)?;
    make_report(statistic, variance, k, n, x.p(), cfg.alpha)
}

/// How the band width is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum KPolicy {
    Fixed(usize),
    Auto(SelectionConfig),
}

/// Test report plus the selection diagnostics when `k` was data-driven.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PipelineReport<T> {
    pub report: TestReport<T>,
    pub selection: Option<SelectionResult<T>>,
}

/// Stability selection (if requested) followed by the test.
///
/// The `n/10` guard applies to fixed `k` only; an explicit selection grid is
/// taken as the caller's choice.
pub fn run_pipeline<T: Real>(
    x: &DataMatrix<T>,
    policy: &KPolicy,
    cfg: &TestConfig<T>,
) -> Result<PipelineReport<T>> {
    match policy {
        KPolicy::Fixed(k) => Ok(PipelineReport {
            report: run_test_with(x, *k, cfg)?,
            selection: None,
        }),
        KPolicy::Auto(sel) => {
            let selection = stability_select(x, sel)?;
            let forced = TestConfig {
                alpha: cfg.alpha,
                force_k: true,
            };
            let report = run_test_with(x, selection.chosen_k, &forced)?;
            Ok(PipelineReport {
                report,
                selection: Some(selection),
            })
        }
    }
}

/// Population variances of the statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationVariance<T> {
    /// σ²_{N,0}(k) = 2 tr{(Ω_k Σ)²}.
    pub null: T,
    /// σ²_N(k) = σ²_{N,0}(k) + 4n μ'Ω_k Σ Ω_k μ.
    pub alternative: T,
    /// n μ'Ω_k μ, the mean shift of the statistic.
    pub shift: T,
}

impl<T: Real> PopulationVariance<T> {
    /// SNR_N(μ, k) = n μ'Ω_k μ / σ_N(k).
    pub fn snr(&self) -> T {
        self.shift / self.alternative.sqrt()
    }

    /// Asymptotic power Φ(−z_α σ_{N,0}/σ_N + nμ'Ω_kμ/σ_N).
    pub fn power(&self, alpha: T) -> T {
        let s = self.alternative.sqrt();
        let arg = -upper_quantile(alpha) * self.null.sqrt() / s + self.shift / s;
        normal_sf(-arg)
    }
}

/// Evaluates the population variance terms for sample size `n`.
pub fn population_variance<T: Real>(
    sigma: &SymmetricMatrix<T>,
    pop: &PopulationBandedPrecision<T>,
    mu: &[T],
    n: usize,
) -> Result<PopulationVariance<T>> {
    let p = sigma.dim();
    if pop.factor.p() != p || mu.len() != p {
        return Err(Error::DimensionMismatch {
            expected: format!("dimension {p}"),
            found: format!("precision {} / mean {}", pop.factor.p(), mu.len()),
        });
    }
    let omega = pop.assemble();
    let m = omega.matrix().matmul(sigma.matrix())?;
    let mut tr = T::zero();
    for i in 0..p {
        for j in 0..p {
            tr += m[(i, j)] * m[(j, i)];
        }
    }
    let null = T::lit(2.0) * tr;
    let nf = T::from_count(n);
    let v = omega.matrix().mat_vec(mu)?;
    let quad = sigma.matrix().quadratic_form(&v)?;
    let shift = nf * crate::linalg::dot(mu, &v);
    Ok(PopulationVariance {
        null,
        alternative: null + T::lit(4.0) * nf * quad,
        shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CovarianceModel;
    use crate::precision::population_banded_precision;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, seed: u64) -> DataMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(Matrix::from_fn(n, p, |_, _| {
            StandardNormal.sample(&mut rng)
        }))
        .unwrap()
    }

    fn brute_force_variance(g: &Matrix<f64>) -> f64 {
        let n = g.rows();
        let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                s2 += g[(i, j)].powi(2);
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    s3 += g[(i, j)] * g[(j, k)];
                    for l in 0..n {
                        if l == i || l == j || l == k {
                            continue;
                        }
                        s4 += g[(i, j)] * g[(k, l)];
                    }
                }
            }
        }
        let nf = n as f64;
        2.0 * s2 / (nf * (nf - 1.0)) - 4.0 * s3 / (nf * (nf - 1.0) * (nf - 2.0))
            + 2.0 * s4 / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0))
    }

    #[test]
    fn scalar_examples() {
        let x = DataMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let bp = estimate_banded_precision(&x, 0).unwrap();
        assert_eq!(na_statistic(&x, &bp).unwrap(), 2.0);
        let x = DataMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let bp = estimate_banded_precision(&x, 0).unwrap();
        assert_eq!(na_statistic(&x, &bp).unwrap(), 0.0);
    }

    #[test]
    fn regression_form_matches_quadratic_form() {
        let x = gaussian(6, 4, 1);
        let bp = estimate_banded_precision(&x, 1).unwrap();
        let q = na_statistic(&x, &bp).unwrap();
        let r = na_statistic_regression_form(&x, 1).unwrap().total();
        assert!((q - r).abs() <= 1e-9 * q.abs().max(1.0), "{q} vs {r}");
    }

    #[test]
    fn regression_form_k0_is_marginal_sum() {
        let x = gaussian(7, 5, 2);
        let form = na_statistic_regression_form(&x, 0).unwrap();
        let n = 7.0;
        for l in 0..5 {
            let col = x.column(l);
            let mean: f64 = col.iter().sum::<f64>() / n;
            let ss: f64 = col.iter().map(|v| v * v).sum();
            let want = n * mean * mean / (ss / n);
            assert!((form.terms[l] - want).abs() < 1e-12);
            assert_eq!(form.f[l], n);
        }
    }

    #[test]
    fn regression_form_rejects_collinear_column() {
        let mut rows = gaussian(8, 3, 3).into_matrix();
        for i in 0..8 {
            rows[(i, 2)] = rows[(i, 1)];
        }
        let x = DataMatrix::new(rows).unwrap();
        assert!(na_statistic_regression_form(&x, 1).is_err());
    }

    #[test]
    fn variance_matches_brute_force() {
        for (seed, n) in [(5u64, 4usize), (6, 6), (7, 8)] {
            let x = gaussian(n, 3, seed);
            let bp = estimate_banded_precision(&x, 1).unwrap();
            let g = bp.factor.gram(x.matrix()).unwrap();
            let fast = variance_estimator(&x, &bp).unwrap();
            let slow = brute_force_variance(&g);
            assert!((fast - slow).abs() < 1e-10, "n = {n}: {fast} vs {slow}");
        }
    }

    #[test]
    fn variance_of_identical_rows_vanishes() {
        let row = vec![0.3f64, -1.2, 2.0];
        let x = DataMatrix::from_rows(&vec![row; 6]).unwrap();
        let bp = estimate_banded_precision(&x, 0).unwrap();
        assert!(variance_estimator(&x, &bp).unwrap().abs() < 1e-12);
    }

    #[test]
    fn variance_needs_four_samples() {
        let x = gaussian(3, 2, 9);
        let bp = estimate_banded_precision(&x, 0).unwrap();
        assert!(matches!(
            variance_estimator(&x, &bp),
            Err(Error::TooFewSamples { required: 4, .. })
        ));
    }

    #[test]
    fn report_at_zero_z() {
        let r = make_report(10.0, 4.0, 0, 20, 10, 0.05).unwrap();
        assert_eq!(r.z_score, 0.0);
        assert_eq!(r.p_value, 0.5);
        assert!(!r.reject);
        assert!(make_report(10.0, -1.0, 0, 20, 10, 0.05).is_err());
    }

    #[test]
    fn guard() {
        let x = gaussian(30, 5, 10);
        assert_eq!(
            run_test(&x, 4, 0.05).unwrap_err(),
            Error::BandGuard { k: 4, n: 30 }
        );
        assert!(run_test(&x, 3, 0.05).is_ok());
        let forced = TestConfig {
            alpha: 0.05,
            force_k: true,
        };
        assert!(run_test_with(&x, 4, &forced).is_ok());
        assert!(run_test(&x, 1, 1.5).is_err());
    }

    #[test]
    fn report_consistency() {
        let x = gaussian(40, 30, 11);
        let r = run_test(&x, 2, 0.05).unwrap();
        assert_eq!(r.reject, r.p_value <= r.alpha);
        assert!(r.sigma_hat > 0.0);
        let bp = estimate_banded_precision(&x, 2).unwrap();
        assert!((r.statistic - na_statistic(&x, &bp).unwrap()).abs() < 1e-9 * r.statistic);
    }

    #[test]
    fn population_variance_examples() {
        let id = SymmetricMatrix::<f64>::identity(6);
        let pop = population_banded_precision(&id, 2).unwrap();
        let v = population_variance(&id, &pop, &[0.0; 6], 10).unwrap();
        assert_eq!((v.null, v.alternative), (12.0, 12.0));

        let s = CovarianceModel::Ar1 { rho: 0.6f64 }.materialize(3).unwrap();
        let pop = population_banded_precision(&s, 1).unwrap();
        let v = population_variance(&s, &pop, &[0.0; 3], 60).unwrap();
        assert!((v.null - 6.0).abs() < 1e-12 && (v.alternative - 6.0).abs() < 1e-12);

        let v = population_variance(&s, &pop, &[0.1, 0.0, 0.2], 60).unwrap();
        assert!(v.alternative > v.null);
    }
}
