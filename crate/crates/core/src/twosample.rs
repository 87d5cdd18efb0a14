//! Two-sample comparison by reduction to a one-sample problem.
//!
//! With `n1 <= n2`, the transformed sample
//! `Y_i = X1_i − √(n1/n2)·X2_i + (n1 n2)^{-1/2} Σ_{j<n1} X2_j − n2⁻¹ Σ_l X2_l`
//! has mean `X̄1 − X̄2` and covariance `Σ1 + (n1/n2) Σ2`. Only the first `n1`
//! rows of the larger sample enter the middle terms, in input order; shuffle
//! beforehand for a randomised pairing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::DataMatrix;
use crate::natest::{run_pipeline, KPolicy, PipelineReport, TestConfig, TestReport};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleInput<T> {
    pub x1: DataMatrix<T>,
    pub x2: DataMatrix<T>,
}

impl<T: Real> TwoSampleInput<T> {
    pub fn new(x1: DataMatrix<T>, x2: DataMatrix<T>) -> Result<Self> {
        if x1.p() != x2.p() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} variables in both samples", x1.p()),
                found: format!("{}", x2.p()),
            });
        }
        Ok(Self { x1, x2 })
    }

    /// Whether the samples are swapped so the smaller one comes first.
    pub fn needs_swap(&self) -> bool {
        self.x1.n() > self.x2.n()
    }
}

/// The transformation on raw matrices; requires `x1.rows() <= x2.rows()`.
pub fn transform_matrices<T: Real>(x1: &Matrix<T>, x2: &Matrix<T>) -> Result<Matrix<T>> {
    let (n1, n2, p) = (x1.rows(), x2.rows(), x1.cols());
    if x2.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: format!("{p} columns"),
            found: format!("{}", x2.cols()),
        });
    }
    if n1 == 0 || n1 > n2 {
        return Err(Error::InvalidInput(format!(
            "first sample must be non-empty and no larger than the second (n1 = {n1}, n2 = {n2})"
        )));
    }
    let (n1f, n2f) = (T::from_count(n1), T::from_count(n2));
    let ratio = (n1f / n2f).sqrt();
    let cross = T::one() / (n1f * n2f).sqrt();
    let mut head = vec![T::zero(); p];
    let mut all = vec![T::zero(); p];
    for j in 0..n2 {
        for (c, &v) in x2.row(j).iter().enumerate() {
            all[c] += v;
            if j < n1 {
                head[c] += v;
            }
        }
    }
    let shift: Vec<T> = head
        .iter()
        .zip(&all)
        .map(|(&h, &a)| cross * h - a / n2f)
        .collect();
    Ok(Matrix::from_fn(n1, p, |i, c| {
        x1[(i, c)] - ratio * x2[(i, c)] + shift[c]
    }))
}

/// Transformed one-sample data plus whether the inputs were swapped.
pub fn transform<T: Real>(input: &TwoSampleInput<T>) -> Result<(DataMatrix<T>, bool)> {
    let swapped = input.needs_swap();
    let (a, b) = if swapped {
        (&input.x2, &input.x1)
    } else {
        (&input.x1, &input.x2)
    };
    Ok((
        DataMatrix::new(transform_matrices(a.matrix(), b.matrix())?)?,
        swapped,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TwoSampleReport<T> {
    #[serde(flatten)]
    pub pipeline: PipelineReport<T>,
    pub n1: usize,
    pub n2: usize,
    /// True when the second sample was the smaller one and the roles were
    /// exchanged; the quadratic-form statistic does not depend on the sign
    /// of the mean difference.
    pub swapped: bool,
    /// Size of the transformed sample, `min(n1, n2)`.
    pub effective_n: usize,
    /// The transformed sample vanished (the two samples coincide row by
    /// row), so there is nothing to standardise: the report carries a zero
    /// statistic, `sigma_hat = 0`, the most negative finite z-score and
    /// p-value 1.
    pub degenerate: bool,
}

pub fn run_two_sample_test<T: Real>(
    input: &TwoSampleInput<T>,
    policy: &KPolicy,
    cfg: &TestConfig<T>,
) -> Result<TwoSampleReport<T>> {
    let (y, swapped) = transform(input)?;
    let scale = input.x1.matrix().max_abs().max(input.x2.matrix().max_abs());
    let degenerate = y.matrix().max_abs() <= T::lit(1e-12) * scale;
    let pipeline = if degenerate {
        PipelineReport {
            report: TestReport {
                statistic: T::zero(),
                centering: T::from_count(y.p()),
                sigma_hat: T::zero(),
                z_score: T::min_value(),
                p_value: T::one(),
                k: match policy {
                    KPolicy::Fixed(k) => *k,
                    KPolicy::Auto(_) => 0,
                },
                alpha: cfg.alpha,
                reject: false,
                n: y.n(),
                p: y.p(),
            },
            selection: None,
        }
    } else {
        run_pipeline(&y, policy, cfg)?
    };
    Ok(TwoSampleReport {
        pipeline,
        n1: input.x1.n(),
        n2: input.x2.n(),
        swapped,
        effective_n: y.n(),
        degenerate,
    })
}
