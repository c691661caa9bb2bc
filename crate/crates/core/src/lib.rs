//! Reservoir conformal prediction for time-series forecasts.
//!
//! A frozen, randomly initialized echo state network encodes the stream of
//! past forecast residuals. At every step the current reservoir state is
//! compared against the states stored alongside calibration residuals, and
//! the resulting softmax similarities reweight those residuals into a local
//! empirical distribution. Its quantiles become the prediction interval.
//!
//! The crate also ships a quantile-regression readout over reservoir states
//! ([`rescqr`]), split and exponentially-decayed conformal baselines
//! ([`baselines`]), a least-squares autoregressive forecaster, interval
//! metrics, CSV ingestion, synthetic generators and an experiment runner.

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod conformal;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod forecasting;
pub mod rescqr;
pub mod reservoir;
pub mod rng;
pub mod weighting;

pub use error::{Error, ErrorKind, Result};

pub mod prelude {
    pub use crate::baselines::{nexcp_interval, scp_interval, NexcpConfig};
    pub use crate::conformal::{
        beta_star, mc_quantile, push_calibration, rescp_interval, weighted_quantile, CalibrationStore,
        PredictionInterval, QuantileMode, RescpParams, WeightedCdf,
    };
    pub use crate::data::{gen_synthetic, load_csv, split_series, SeriesBundle, SplitSpec, SyntheticKind};
    pub use crate::evaluation::{coverage_gap, evaluate_run, winkler_score, EvalReport};
    pub use crate::experiment::{grid_search, run_experiment, ExperimentConfig, Method};
    pub use crate::forecasting::{fit_ar_forecaster, predict_and_residuals, ArModel, ForecastSet};
    pub use crate::rescqr::{fit_readout, pinball_loss, rescqr_interval, LinearQuantileModel, TrainConfig};
    pub use crate::reservoir::{
        build_reservoir, encode, estimate_spectral_radius, Reservoir, ReservoirConfig, StateTrajectory,
    };
    pub use crate::weighting::{
        apply_temporal_decay, effective_sample_size, similarity_scores, softmax_weights, DecaySchedule, Similarity,
        WeightVector,
    };
}
