//! Data-driven choice of the band width.
//!
//! For each candidate `k` the signal-to-noise ratio of the test is estimated
//! by plug-in. Stability selection splits the sample into `H` parts, drops
//! each part in turn, maximises the estimated SNR on what remains, and takes
//! the (lower) median of the `H` maximisers.
//!
//! Fold assignment: the indices `0..n` are shuffled with
//! `rand::seq::SliceRandom::shuffle` (Fisher–Yates) driven by a
//! `ChaCha8Rng` seeded from `seed`, then cut into `H` contiguous blocks; the
//! first `n mod H` blocks receive one extra index. The assignment depends
//! only on `(n, H, seed)`, never on the data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::DataMatrix;
use crate::precision::estimate_banded_precision;
use crate::scalar::Real;

/// Variance terms at or below this make the SNR estimate meaningless.
pub const SNR_DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Candidate band widths.
    pub k_grid: Vec<usize>,
    /// Number of parts H.
    pub folds: usize,
    pub seed: u64,
}

impl SelectionConfig {
    /// Grid `{0, …, floor(n/10)}` with H = 5.
    pub fn for_sample_size(n: usize, seed: u64) -> Self {
        Self {
            k_grid: (0..=n / 10).collect(),
            folds: 5,
            seed,
        }
    }

    pub fn with_max_k(max_k: usize, folds: usize, seed: u64) -> Self {
        Self {
            k_grid: (0..=max_k).collect(),
            folds,
            seed,
        }
    }

    /// Checks the configuration against a sample of size `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let Some(&max_k) = self.k_grid.iter().max() else {
            return Err(Error::InvalidInput("empty k grid".into()));
        };
        if max_k >= n {
            return Err(Error::InvalidInput(format!(
                "largest k = {max_k} must be below n = {n}"
            )));
        }
        if self.folds < 2 || self.folds > n {
            return Err(Error::InvalidInput(format!(
                "number of parts H = {} must lie in 2..={n}",
                self.folds
            )));
        }
        let largest_part = n.div_ceil(self.folds);
        let training = n - largest_part;
        let need = (max_k + 3).max(4);
        if training < need {
            return Err(Error::TooFewSamples {
                required: need,
                found: training,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SelectionResult<T> {
    pub chosen_k: usize,
    /// Maximiser for each dropped part.
    pub per_fold_k: Vec<usize>,
    /// `per_k_snr[h][j]` is the SNR estimate at `k_grid[j]` with part `h`
    /// dropped; `-inf` marks a degenerate denominator.
    pub per_k_snr: Vec<Vec<T>>,
    pub k_grid: Vec<usize>,
}

/// Plug-in SNR estimate from a Gram matrix `G = X Ω̂ X'` of `p` variables.
pub fn snr_from_gram<T: Real>(g: &Matrix<T>, p: usize) -> Result<T> {
    let n = g.rows();
    if n < 4 {
        return Err(Error::TooFewSamples {
            required: 4,
            found: n,
        });
    }
    let nf = T::from_count(n);
    let mut total = T::zero();
    let mut off = T::zero();
    let mut off_sq = T::zero();
    let mut row_sums = Vec::with_capacity(n);
    for i in 0..n {
        let row = g.row(i);
        let mut r = T::zero();
        for (j, &v) in row.iter().enumerate() {
            r += v;
            if j != i {
                off += v;
                off_sq += v * v;
            }
        }
        total += r;
        row_sums.push(r);
    }
    // X̄'ΩX_i = r_i / n, X̄'ΩX̄ = t / n²
    let centre = total / (nf * nf);
    let spread = row_sums
        .iter()
        .map(|&r| {
            let d = r / nf - centre;
            d * d
        })
        .sum::<T>()
        / nf;
    let n4 = nf * nf * nf * nf;
    let g_hat = spread - off * off / n4;
    let numerator = total / nf - T::from_count(p);
    let variance = T::lit(2.0) * off_sq / (nf * nf) + T::lit(4.0) * nf * g_hat;
    if !numerator.is_finite() || !variance.is_finite() {
        return Err(Error::NonFinite(format!(
            "SNR estimate (numerator {numerator}, variance {variance})"
        )));
    }
    if variance <= T::lit(SNR_DENOMINATOR_FLOOR) {
        return Ok(T::neg_infinity());
    }
    Ok(numerator / variance.sqrt())
}

/// Estimated signal-to-noise ratio of the test at band width `k`.
pub fn snr_estimate<T: Real>(x: &DataMatrix<T>, k: usize) -> Result<T> {
    let bp = estimate_banded_precision(x, k)?;
    snr_from_gram(&bp.factor.gram(x.matrix())?, x.p())
}

/// Seeded partition of `0..n` into `h` parts.
pub fn fold_partition(n: usize, h: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let base = n / h;
    let extra = n % h;
    let mut out = Vec::with_capacity(h);
    let mut at = 0;
    for part in 0..h {
        let len = base + usize::from(part < extra);
        out.push(idx[at..at + len].to_vec());
        at += len;
    }
    out
}

/// Lower median, which keeps the result on the grid for even counts.
pub fn lower_median(values: &[usize]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2])
}

/// Index of the first maximum; `-inf` entries lose to anything finite.
fn first_argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

/// Stability selection with the seeded partition of `cfg`.
pub fn stability_select<T: Real>(
    x: &DataMatrix<T>,
    cfg: &SelectionConfig,
) -> Result<SelectionResult<T>> {
    cfg.validate(x.n())?;
    let folds = fold_partition(x.n(), cfg.folds, cfg.seed);
    stability_select_with_folds(x, cfg, &folds)
}

/// Stability selection with an explicit partition of the rows of `x`.
pub fn stability_select_with_folds<T: Real>(
    x: &DataMatrix<T>,
    cfg: &SelectionConfig,
    folds: &[Vec<usize>],
) -> Result<SelectionResult<T>> {
    cfg.validate(x.n())?;
    let n = x.n();
    let mut grid = cfg.k_grid.clone();
    grid.sort_unstable();
    grid.dedup();

    let per_k_snr: Vec<Vec<T>> = folds
        .par_iter()
        .map(|dropped| {
            let mut keep = vec![true; n];
            for &i in dropped {
                keep[i] = false;
            }
            let rows: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
            let sub = x.select_rows(&rows)?;
            grid.par_iter()
                .map(|&k| snr_estimate(&sub, k))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;

    let per_fold_k: Vec<usize> = per_k_snr
        .iter()
        .map(|row| grid[first_argmax(row)])
        .collect();
    let chosen_k =
        lower_median(&per_fold_k).ok_or_else(|| Error::InvalidInput("no folds".into()))?;
    Ok(SelectionResult {
        chosen_k,
        per_fold_k,
        per_k_snr,
        k_grid: grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, seed: u64) -> DataMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(Matrix::from_fn(n, p, |_, _| {
            StandardNormal.sample(&mut rng)
        }))
        .unwrap()
    }

    #[test]
    fn medians() {
        assert_eq!(lower_median(&[2, 3, 3, 4, 5]), Some(3));
        assert_eq!(lower_median(&[1, 1, 1, 1, 1]), Some(1));
        assert_eq!(lower_median(&[4, 1, 3, 2]), Some(2));
        assert_eq!(lower_median(&[]), None);
    }

    #[test]
    fn argmax_prefers_smallest_k() {
        assert_eq!(first_argmax(&[1.0, 2.0, 2.0, 0.5]), 1);
        assert_eq!(first_argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), 0);
        assert_eq!(first_argmax(&[f64::NEG_INFINITY, -3.0]), 1);
    }

    #[test]
    fn partition_shape() {
        let parts = fold_partition(23, 5, 7);
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(parts, fold_partition(23, 5, 7));
        assert_ne!(parts, fold_partition(23, 5, 8));
    }

    #[test]
    fn antithetic_sample_has_negative_snr() {
        let half = gaussian(5, 4, 1).into_matrix();
        let mut rows = Vec::new();
        for i in 0..5 {
            rows.push(half.row(i).to_vec());
            rows.push(half.row(i).iter().map(|v| -v).collect());
        }
        let x = DataMatrix::from_rows(&rows).unwrap();
        let bp = estimate_banded_precision(&x, 0).unwrap();
        let g = bp.factor.gram(x.matrix()).unwrap();
        let total: f64 = g.as_slice().iter().sum();
        assert!(total.abs() < 1e-12);
        assert!(snr_estimate(&x, 0).unwrap() < 0.0);
    }

    #[test]
    fn literal_formula() {
        // Direct evaluation from the dense precision and raw sums.
        let x = gaussian(6, 3, 4);
        let omega = estimate_banded_precision(&x, 0).unwrap().assemble();
        let n = 6usize;
        let nf = n as f64;
        let mean = x.column_means();
        let form = |a: &[f64], b: &[f64]| {
            let ob = omega.matrix().mat_vec(b).unwrap();
            a.iter().zip(&ob).map(|(u, v)| u * v).sum::<f64>()
        };
        let mut s2 = 0.0;
        let mut s1 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let v = form(x.row(i), x.row(j));
                    s2 += v * v;
                    s1 += v;
                }
            }
        }
        let mut spread = 0.0;
        for i in 0..n {
            let c: Vec<f64> = x.row(i).iter().zip(&mean).map(|(a, b)| a - b).collect();
            spread += form(&mean, &c).powi(2);
        }
        let g_hat = spread / nf - s1 * s1 / nf.powi(4);
        let want =
            (nf * form(&mean, &mean) - 3.0) / (2.0 * s2 / (nf * nf) + 4.0 * nf * g_hat).sqrt();
        let got = snr_estimate(&x, 0).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn config_validation() {
        assert!(SelectionConfig::for_sample_size(60, 0).validate(60).is_ok());
        assert!(SelectionConfig::with_max_k(3, 1, 0).validate(60).is_err());
        assert!(SelectionConfig::with_max_k(3, 5, 0).validate(6).is_err());
        let empty = SelectionConfig {
            k_grid: vec![],
            folds: 5,
            seed: 0,
        };
        assert!(empty.validate(60).is_err());
    }

    #[test]
    fn selection_is_deterministic_and_on_grid() {
        let x = gaussian(40, 12, 5);
        let cfg = SelectionConfig::with_max_k(3, 4, 99);
        let a = stability_select(&x, &cfg).unwrap();
        let b = stability_select(&x, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(cfg.k_grid.contains(&a.chosen_k));
        assert_eq!(a.per_fold_k.len(), 4);
        for (row, &k) in a.per_k_snr.iter().zip(&a.per_fold_k) {
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(row[k], best);
        }
    }
}
