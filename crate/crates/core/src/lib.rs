//! Neighborhood-assisted Hotelling T² test for high-dimensional mean vectors.
//!
//! The precision matrix is replaced by a banded modified-Cholesky estimate
//! `Ω̂ₖ = (I − Â)' D̂⁻¹ (I − Â)`, where row `l` of `Â` regresses variable `l`
//! on its `k` predecessors. The statistic `n X̄'Ω̂ₖX̄` is centred at `p` and
//! scaled by an unbiased U-statistic variance estimate, and `k` can be chosen
//! by stability selection on an estimated signal-to-noise ratio.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*64` / `*32`
//! aliases below name the common instantiations.
//!
//! ```
//! use nat2::{run_test, DataMatrix64, Matrix};
//!
//! let rows: Vec<Vec<f64>> = (0..40)
//!     .map(|i| (0..5).map(|j| ((i * 7 + j * 3) % 11) as f64 - 5.0).collect())
//!     .collect();
//! let x = DataMatrix64::new(Matrix::from_rows(&rows).unwrap()).unwrap();
//! let report = run_test(&x, 1, 0.05).unwrap();
//! assert!(report.p_value >= 0.0 && report.p_value <= 1.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dist;
pub mod error;
pub mod ksel;
pub mod linalg;
pub mod model;
pub mod natest;
pub mod oracle;
pub mod precision;
pub mod scalar;
pub mod simgen;
pub mod twosample;

pub use dist::{normal_cdf, normal_sf, upper_quantile};
pub use error::{Error, Result};
pub use ksel::{
    fold_partition, lower_median, snr_estimate, snr_from_gram, stability_select,
    stability_select_with_folds, SelectionConfig, SelectionResult,
};
pub use linalg::{Matrix, SymmetricEigen};
pub use model::{matrix_power, CovarianceModel, DataMatrix, SymmetricMatrix};
pub use natest::{
    distinct_sums, na_statistic, na_statistic_regression_form, population_variance, run_pipeline,
    run_test, run_test_with, variance_estimator, variance_from_gram, KPolicy, PipelineReport,
    PopulationVariance, RegressionForm, TestConfig, TestReport,
};
pub use oracle::{
    oracle_power, oracle_snr, oracle_statistic, proposition3_check, spectral_summary, OracleSpec,
    OracleTest, Proposition3Report, SpectralSummary,
};
pub use precision::{
    apply_transform, estimate_banded_precision, population_banded_precision, BandedFactor,
    BandedPrecision, PopulationBandedPrecision,
};
pub use scalar::Real;
pub use simgen::{
    power_curve, run_scenario, sample_dataset, write_curve_csv, CurveRow, Innovation, Placement,
    Scenario, ScenarioConfig, ScenarioResult, SignalSpec, VariantResult,
};
pub use twosample::{run_two_sample_test, TwoSampleInput, TwoSampleReport};

pub type Matrix64 = Matrix<f64>;
pub type DataMatrix64 = DataMatrix<f64>;
pub type SymmetricMatrix64 = SymmetricMatrix<f64>;
pub type CovarianceModel64 = CovarianceModel<f64>;
pub type BandedPrecision64 = BandedPrecision<f64>;
pub type TestReport64 = TestReport<f64>;
pub type TestConfig64 = TestConfig<f64>;
pub type PipelineReport64 = PipelineReport<f64>;
pub type SelectionResult64 = SelectionResult<f64>;
pub type TwoSampleReport64 = TwoSampleReport<f64>;
pub type OracleSpec64 = OracleSpec<f64>;
pub type ScenarioConfig64 = ScenarioConfig<f64>;

pub type Matrix32 = Matrix<f32>;
pub type DataMatrix32 = DataMatrix<f32>;
pub type SymmetricMatrix32 = SymmetricMatrix<f32>;
pub type TestReport32 = TestReport<f32>;
pub type TestConfig32 = TestConfig<f32>;
