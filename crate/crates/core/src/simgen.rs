//! Synthetic data and replicated size/power experiments.
//!
//! Replicate `r` draws its noise from the ChaCha8 stream `2r` of the scenario
//! seed and, with per-replicate signal placement, its signal positions from
//! stream `2r + 1`. Results therefore do not depend on the worker count.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{CovarianceModel, DataMatrix, SymmetricMatrix};
use crate::natest::{run_pipeline, KPolicy, TestConfig};
use crate::oracle::OracleTest;
use crate::scalar::Real;

/// Stream reserved for a signal placement shared by all replicates.
const FIXED_SIGNAL_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Random,
    Clustered,
}

impl std::str::FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "clustered" => Ok(Self::Clustered),
            _ => Err(Error::InvalidInput(format!(
                "unknown placement '{s}' (expected random or clustered)"
            ))),
        }
    }
}

/// Mean vector with `floor(p^{1-beta})` entries equal to `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub beta: f64,
    /// Value of every nonzero entry; 0 gives the null.
    pub r: f64,
    pub placement: Placement,
    /// Redraw random positions in every replicate instead of once per cell.
    pub per_replicate: bool,
}

impl SignalSpec {
    pub fn null() -> Self {
        Self {
            beta: 0.5,
            r: 0.0,
            placement: Placement::Clustered,
            per_replicate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidInput(format!(
                "signal magnitude must be >= 0, got {}",
                self.r
            )));
        }
        Ok(())
    }

    /// `floor(p^{1-beta})`, guarded against the power landing a hair below
    /// an integer.
    pub fn nonzero_count(&self, p: usize) -> usize {
        let v = (p as f64).powf(1.0 - self.beta);
        ((v + 1e-9).floor() as usize).min(p)
    }

    /// Builds μ; `rng` is only consulted for random placement.
    pub fn mean_vector<T: Real>(&self, p: usize, rng: &mut impl Rng) -> Vec<T> {
        let mut mu = vec![T::zero(); p];
        if self.r == 0.0 {
            return mu;
        }
        let m = self.nonzero_count(p);
        let value = T::lit(self.r);
        match self.placement {
            Placement::Clustered => mu[..m].fill(value),
            Placement::Random => {
                for j in sample(rng, p, m) {
                    mu[j] = value;
                }
            }
        }
        mu
    }
}

/// Distribution of the standardised noise coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Innovation {
    Gaussian,
    /// (Gamma(4, 1) − 4)/2.
    CenteredGamma,
    /// Student t scaled to unit variance; requires df > 2.
    ScaledT {
        df: f64,
    },
}

impl Innovation {
    fn validate(&self) -> Result<()> {
        if let Self::ScaledT { df } = self {
            if !(*df > 2.0) {
                return Err(Error::InvalidInput(format!(
                    "t innovations need df > 2, got {df}"
                )));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            Self::Gaussian => "gaussian".into(),
            Self::CenteredGamma => "gamma".into(),
            Self::ScaledT { df } => format!("t{df}"),
        }
    }

    /// Fills `out` with i.i.d. mean-zero unit-variance draws.
    pub fn fill(&self, rng: &mut impl Rng, out: &mut [f64]) {
        match *self {
            Self::Gaussian => out.iter_mut().for_each(|v| *v = StandardNormal.sample(rng)),
            Self::CenteredGamma => {
                let g = Gamma::new(4.0, 1.0).expect("valid gamma parameters");
                out.iter_mut()
                    .for_each(|v| *v = (g.sample(rng) - 4.0) / 2.0);
            }
            Self::ScaledT { df } => {
                let t = StudentT::new(df).expect("validated degrees of freedom");
                let s = ((df - 2.0) / df).sqrt();
                out.iter_mut().for_each(|v| *v = s * t.sample(rng));
            }
        }
    }
}

impl std::str::FromStr for Innovation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "gamma" | "centered-gamma" => Ok(Self::CenteredGamma),
            _ => {
                let df = s
                    .strip_prefix("t")
                    .or_else(|| s.strip_prefix("scaled-t"))
                    .map(|d| d.trim_start_matches(['(', ':']).trim_end_matches(')'))
                    .and_then(|d| {
                        if d.is_empty() {
                            Some(8.0)
                        } else {
                            d.parse().ok()
                        }
                    });
                match df {
                    Some(df) => Ok(Self::ScaledT { df }),
                    None => Err(Error::InvalidInput(format!(
                        "unknown innovation '{s}' (expected gaussian, gamma or t<df>)"
                    ))),
                }
            }
        }
    }
}

/// One Monte Carlo cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<T: Real> {
    pub n: usize,
    pub p: usize,
    pub model: CovarianceModel<T>,
    /// Free-form model name carried into the output table.
    pub model_label: String,
    pub signal: SignalSpec,
    pub reps: usize,
    pub alpha: T,
    pub k_policy: KPolicy,
    pub innovation: Innovation,
    pub seed: u64,
    /// Also run the known-Σ test with η = −1/2.
    pub include_oracle: bool,
    /// Also run the proposed test with k = 0 (the diagonal version).
    pub include_k0: bool,
    pub force_k: bool,
    /// Keep every replicate's z-score.
    pub keep_z: bool,
}

impl<T: Real> ScenarioConfig<T> {
    /// Null model-`letter` cell with the proposed and oracle tests at level
    /// 0.05.
    pub fn standard(
        letter: char,
        n: usize,
        p: usize,
        k_policy: KPolicy,
        reps: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            n,
            p,
            model: CovarianceModel::standard(letter, seed)?,
            model_label: letter.to_ascii_lowercase().to_string(),
            signal: SignalSpec::null(),
            reps,
            alpha: T::lit(0.05),
            k_policy,
            innovation: Innovation::Gaussian,
            seed,
            include_oracle: true,
            include_k0: false,
            force_k: false,
            keep_z: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidInput(
                "at least one replicate is required".into(),
            ));
        }
        if self.n < 4 {
            return Err(Error::TooFewSamples {
                required: 4,
                found: self.n,
            });
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
        }
        self.signal.validate()?;
        self.innovation.validate()?;
        if let KPolicy::Auto(sel) = &self.k_policy {
            sel.validate(self.n)?;
        }
        Ok(())
    }
}

/// Everything about a scenario that does not change between replicates.
#[derive(Debug, Clone)]
pub struct Scenario<T: Real> {
    pub config: ScenarioConfig<T>,
    pub sigma: SymmetricMatrix<T>,
    chol: Matrix<T>,
    fixed_mu: Vec<T>,
    oracle: Option<OracleTest<T>>,
}

impl<T: Real> Scenario<T> {
    pub fn prepare(config: ScenarioConfig<T>) -> Result<Self> {
        config.validate()?;
        let sigma = config.model.materialize(config.p)?;
        let chol = sigma.matrix().cholesky()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(FIXED_SIGNAL_STREAM);
        let fixed_mu = config.signal.mean_vector(config.p, &mut rng);
        let oracle = if config.include_oracle {
            Some(OracleTest::new(&sigma, T::lit(-0.5), config.alpha)?)
        } else {
            None
        };
        Ok(Self {
            config,
            sigma,
            chol,
            fixed_mu,
            oracle,
        })
    }

    /// Mean vector used by replicate `rep`.
    pub fn mean(&self, rep: usize) -> Vec<T> {
        let s = &self.config.signal;
        if s.per_replicate && s.placement == Placement::Random {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(2 * rep as u64 + 1);
            s.mean_vector(self.config.p, &mut rng)
        } else {
            self.fixed_mu.clone()
        }
    }

    /// Rows `μ + L ε_i` with `LL' = Σ`.
    pub fn sample(&self, rep: usize) -> DataMatrix<T> {
        let (n, p) = (self.config.n, self.config.p);
        let mu = self.mean(rep);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(2 * rep as u64);
        let mut eps = vec![0.0; p];
        let mut data = Vec::with_capacity(n * p);
        for _ in 0..n {
            self.config.innovation.fill(&mut rng, &mut eps);
            let e: Vec<T> = eps.iter().map(|&v| T::lit(v)).collect();
            for j in 0..p {
                let lrow = &self.chol.row(j)[..=j];
                let s: T = lrow.iter().zip(&e).map(|(&a, &b)| a * b).sum();
                data.push(mu[j] + s);
            }
        }
        let m = Matrix::from_vec(n, p, data).expect("shape matches");
        DataMatrix::new(m).expect("simulated data are finite and n >= 4")
    }
}

pub fn sample_dataset<T: Real>(cfg: &ScenarioConfig<T>, rep: usize) -> Result<DataMatrix<T>> {
    Ok(Scenario::prepare(cfg.clone())?.sample(rep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    /// `new`, `oracle` or `new_k0`.
    pub name: String,
    pub rejections: usize,
    /// Replicates where the test ran to completion.
    pub successes: usize,
    pub failures: usize,
    /// Rejections over successful replicates.
    pub rejection_rate: f64,
    /// sqrt(rate (1 − rate) / successes).
    pub mc_se: f64,
    /// Per-replicate z-scores when requested; `None` marks a failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_scores: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub variants: Vec<VariantResult>,
    /// Band width used by the proposed test in each replicate.
    pub chosen_k: Vec<Option<usize>>,
    /// First error message seen, if any replicate failed.
    pub first_error: Option<String>,
}

impl ScenarioResult {
    pub fn variant(&self, name: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn median_k(&self) -> Option<usize> {
        let ks: Vec<usize> = self.chosen_k.iter().flatten().copied().collect();
        crate::ksel::lower_median(&ks)
    }
}

struct RepOutcome {
    z: Vec<Option<(f64, bool)>>,
    k: Option<usize>,
    error: Option<String>,
}

fn run_replicate<T: Real>(sc: &Scenario<T>, rep: usize) -> RepOutcome {
    let cfg = &sc.config;
    let x = sc.sample(rep);
    let test_cfg = TestConfig {
        alpha: cfg.alpha,
        force_k: cfg.force_k,
    };
    let mut z = Vec::with_capacity(3);
    let mut error = None;
    let mut k = None;

    let policy = match &cfg.k_policy {
        KPolicy::Auto(sel) => {
            let mut sel = sel.clone();
            sel.seed = sel.seed.wrapping_add(rep as u64);
            KPolicy::Auto(sel)
        }
        fixed => fixed.clone(),
    };
    match run_pipeline(&x, &policy, &test_cfg) {
        Ok(r) => {
            k = Some(r.report.k);
            z.push(Some((r.report.z_score.as_f64(), r.report.reject)));
        }
        Err(e) => {
            error.get_or_insert(e.to_string());
            z.push(None);
        }
    }
    if let Some(oracle) = &sc.oracle {
        match oracle.z_score(&x) {
            Ok(zs) => z.push(Some((
                zs.as_f64(),
                zs >= crate::dist::upper_quantile(cfg.alpha),
            ))),
            Err(e) => {
                error.get_or_insert(e.to_string());
                z.push(None);
            }
        }
    }
    if cfg.include_k0 {
        match run_pipeline(&x, &KPolicy::Fixed(0), &test_cfg) {
            Ok(r) => z.push(Some((r.report.z_score.as_f64(), r.report.reject))),
            Err(e) => {
                error.get_or_insert(e.to_string());
                z.push(None);
            }
        }
    }
    RepOutcome { z, k, error }
}

pub fn run_prepared<T: Real>(sc: &Scenario<T>) -> ScenarioResult {
    let cfg = &sc.config;
    let outcomes: Vec<RepOutcome> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_replicate(sc, rep))
        .collect();

    let mut names = vec!["new"];
    if cfg.include_oracle {
        names.push("oracle");
    }
    if cfg.include_k0 {
        names.push("new_k0");
    }
    let variants = names
        .iter()
        .enumerate()
        .map(|(v, name)| {
            let col: Vec<Option<(f64, bool)>> = outcomes.iter().map(|o| o.z[v]).collect();
            let successes = col.iter().flatten().count();
            let rejections = col.iter().flatten().filter(|(_, r)| *r).count();
            let rate = if successes == 0 {
                f64::NAN
            } else {
                rejections as f64 / successes as f64
            };
            VariantResult {
                name: name.to_string(),
                rejections,
                successes,
                failures: cfg.reps - successes,
                rejection_rate: rate,
                mc_se: (rate * (1.0 - rate) / successes as f64).sqrt(),
                z_scores: cfg
                    .keep_z
                    .then(|| col.iter().map(|c| c.map(|(z, _)| z)).collect()),
            }
        })
        .collect();
    let first_error = outcomes.iter().find_map(|o| o.error.clone());
    if let Some(e) = &first_error {
        log::warn!("some replicates failed; first error: {e}");
    }
    ScenarioResult {
        variants,
        chosen_k: outcomes.iter().map(|o| o.k).collect(),
        first_error,
    }
}

/// Runs every replicate of one cell. Deterministic given the configuration.
pub fn run_scenario<T: Real>(cfg: &ScenarioConfig<T>) -> Result<ScenarioResult> {
    Ok(run_prepared(&Scenario::prepare(cfg.clone())?))
}

/// One output row per (grid point, test variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub model: String,
    pub n: usize,
    pub p: usize,
    pub beta: f64,
    pub r: f64,
    pub placement: Placement,
    pub innovation: String,
    pub k_policy: String,
    pub alpha: f64,
    pub seed: u64,
    pub variant: String,
    pub rejections: usize,
    pub reps: usize,
    pub failures: usize,
    pub rejection_rate: f64,
    pub mc_se: f64,
    pub median_k: Option<usize>,
}

pub fn k_policy_label(policy: &KPolicy) -> String {
    match policy {
        KPolicy::Fixed(k) => k.to_string(),
        KPolicy::Auto(_) => "auto".into(),
    }
}

pub fn curve_rows<T: Real>(cfg: &ScenarioConfig<T>, result: &ScenarioResult) -> Vec<CurveRow> {
    let median_k = result.median_k();
    result
        .variants
        .iter()
        .map(|v| CurveRow {
            model: cfg.model_label.clone(),
            n: cfg.n,
            p: cfg.p,
            beta: cfg.signal.beta,
            r: cfg.signal.r,
            placement: cfg.signal.placement,
            innovation: cfg.innovation.label(),
            k_policy: match v.name.as_str() {
                "oracle" => "-".into(),
                "new_k0" => "0".into(),
                _ => k_policy_label(&cfg.k_policy),
            },
            alpha: cfg.alpha.as_f64(),
            seed: cfg.seed,
            variant: v.name.clone(),
            rejections: v.rejections,
            reps: cfg.reps,
            failures: v.failures,
            rejection_rate: v.rejection_rate,
            mc_se: v.mc_se,
            median_k: if v.name == "new" { median_k } else { None },
        })
        .collect()
}

/// Runs each grid point in turn.
pub fn power_curve<T: Real>(grid: &[ScenarioConfig<T>]) -> Result<Vec<CurveRow>> {
    let mut rows = Vec::new();
    for cfg in grid {
        let result = run_scenario(cfg)?;
        rows.extend(curve_rows(cfg, &result));
    }
    Ok(rows)
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::InvalidInput(format!("csv output: {e}")))?;
    }
    w.flush()
        .map_err(|e| Error::InvalidInput(format!("csv output: {e}")))?;
    Ok(())
}
