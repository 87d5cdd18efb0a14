//! Slow, literal reference implementations used as oracles by the
//! integration and acceptance tests. Nothing here calls into the library's
//! numerical routines.
#![allow(dead_code)]

use nat2::{DataMatrix, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(n: usize, p: usize, rng: &mut impl Rng) -> DataMatrix<f64> {
    DataMatrix::new(Matrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))).unwrap()
}

pub fn rows(x: &DataMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.n()).map(|i| x.row(i).to_vec()).collect()
}

/// Gaussian elimination with partial pivoting; `a` is dense row-major.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let m = b.len();
    for c in 0..m {
        let piv = (c..m)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..m {
            let f = a[r][c] / a[c][c];
            let (top, rest) = a.split_at_mut(r);
            for (x, y) in rest[0][c..].iter_mut().zip(&top[c][c..]) {
                *x -= f * y;
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Inverse by solving against each unit vector.
pub fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.len();
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            gauss_solve(a.to_vec(), e)
        })
        .collect();
    (0..m)
        .map(|i| (0..m).map(|j| cols[j][i]).collect())
        .collect()
}

/// Banded Cholesky precision built from the normal equations and assembled
/// densely as (I − A)' D⁻¹ (I − A).
pub fn normal_equation_precision(x: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let p = x[0].len();
    let mut a = vec![vec![0.0; p]; p];
    let mut d = vec![0.0; p];
    for l in 0..p {
        let preds: Vec<usize> = (l.saturating_sub(k)..l).collect();
        let m = preds.len();
        let mut coef = vec![0.0; m];
        if m > 0 {
            let gram: Vec<Vec<f64>> = preds
                .iter()
                .map(|&u| {
                    preds
                        .iter()
                        .map(|&v| (0..n).map(|i| x[i][u] * x[i][v]).sum())
                        .collect()
                })
                .collect();
            let rhs: Vec<f64> = preds
                .iter()
                .map(|&u| (0..n).map(|i| x[i][u] * x[i][l]).sum())
                .collect();
            coef = gauss_solve(gram, rhs);
        }
        let mut rss = 0.0;
        for row in x {
            let fit: f64 = preds.iter().zip(&coef).map(|(&u, c)| c * row[u]).sum();
            rss += (row[l] - fit).powi(2);
        }
        d[l] = rss / n as f64;
        for (&u, &c) in preds.iter().zip(&coef) {
            a[l][u] = c;
        }
    }
    let mut omega = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for l in 0..p {
                let li = if l == i { 1.0 } else { 0.0 } - a[l][i];
                let lj = if l == j { 1.0 } else { 0.0 } - a[l][j];
                s += li * lj / d[l];
            }
            omega[i][j] = s;
        }
    }
    omega
}

/// n X̄' Ω X̄.
pub fn quadratic_statistic(x: &[Vec<f64>], omega: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let p = x[0].len();
    let mean: Vec<f64> = (0..p)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut s = 0.0;
    for i in 0..p {
        for j in 0..p {
            s += mean[i] * omega[i][j] * mean[j];
        }
    }
    n as f64 * s
}

/// G = X Ω X'.
pub fn gram(x: &[Vec<f64>], omega: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = omega.len();
    x.iter()
        .map(|a| {
            x.iter()
                .map(|b| {
                    let mut s = 0.0;
                    for u in 0..p {
                        for v in 0..p {
                            s += a[u] * omega[u][v] * b[v];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// The variance estimator summed literally over distinct index tuples.
pub fn brute_variance(g: &[Vec<f64>]) -> f64 {
    let n = g.len();
    let nf = n as f64;
    let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            s2 += g[i][j] * g[i][j];
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                s3 += g[i][j] * g[j][k];
                for l in 0..n {
                    if l == i || l == j || l == k {
                        continue;
                    }
                    s4 += g[i][j] * g[k][l];
                }
            }
        }
    }
    2.0 * s2 / (nf * (nf - 1.0)) - 4.0 * s3 / (nf * (nf - 1.0) * (nf - 2.0))
        + 2.0 * s4 / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0))
}

pub fn ar1(rho: f64, p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|i| (0..p).map(|j| rho.powi(i.abs_diff(j) as i32)).collect())
        .collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &Matrix<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m = m.max((v - b[(i, j)]).abs());
        }
    }
    m
}
