use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::NexcpConfig;
use crate::conformal::{beta_grid, QuantileMode, RescpParams};
use crate::data::{CsvSpec, SplitSpec, SyntheticKind};
use crate::error::{Error, Result};
use crate::rescqr::TrainConfig;
use crate::reservoir::ReservoirConfig;
use crate::weighting::{DecaySchedule, Similarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rescp,
    Rescqr,
    Scp,
    Nexcp,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rescp" => Ok(Method::Rescp),
            "rescqr" => Ok(Method::Rescqr),
            "scp" => Ok(Method::Scp),
            "nexcp" => Ok(Method::Nexcp),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected rescp, rescqr, scp or nexcp)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rescp => "rescp",
            Method::Rescqr => "rescqr",
            Method::Scp => "scp",
            Method::Nexcp => "nexcp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(flatten)]
        spec: CsvSpec,
    },
    Synthetic {
        #[serde(flatten)]
        kind: SyntheticKind,
        length: usize,
        /// Defaults to the run seed, so every seed sees a fresh series.
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            kind: SyntheticKind::ar1(),
            length: 10_000,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    pub window: usize,
    pub ridge: f64,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            window: 16,
            ridge: 1e-6,
        }
    }
}

/// Everything one experiment needs. Deserializes from TOML with every field
/// optional; missing fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub alpha: f64,
    pub horizon: usize,
    pub reservoir: ReservoirConfig,
    pub temperature: f64,
    pub similarity: Similarity,
    pub decay: DecaySchedule,
    /// Calibration window capacity; `None` keeps everything.
    pub window: Option<usize>,
    pub beta_search: bool,
    pub grid_step: Option<f64>,
    pub quantile_mode: QuantileMode,
    pub nexcp: NexcpConfig,
    /// Push each observed test residual into the calibration store.
    pub online: bool,
    pub data: DataSource,
    pub forecaster: ForecasterConfig,
    pub split: SplitSpec,
    pub readout: TrainConfig,
    /// Feed exogenous columns to the reservoir (ResCQR only).
    pub use_exogenous: bool,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Rescp,
            alpha: 0.1,
            horizon: 1,
            reservoir: ReservoirConfig::default(),
            temperature: 0.1,
            similarity: Similarity::Cosine,
            decay: DecaySchedule::None,
            window: None,
            beta_search: true,
            grid_step: None,
            quantile_mode: QuantileMode::Exact,
            nexcp: NexcpConfig::default(),
            online: true,
            data: DataSource::default(),
            forecaster: ForecasterConfig::default(),
            split: SplitSpec::default(),
            readout: TrainConfig::default(),
            use_exogenous: true,
            seeds: vec![0],
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.as_ref().display())))?;
        Ok(toml::from_str(&text)?)
    }

    pub fn rescp_params(&self) -> RescpParams {
        RescpParams {
            alpha: self.alpha,
            temperature: self.temperature,
            similarity: self.similarity,
            decay: self.decay,
            beta_search: self.beta_search,
            grid_step: self.grid_step,
            quantile_mode: self.quantile_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.window == Some(0) {
            return Err(Error::Config("calibration window must hold at least one entry".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.split.validate()?;
        self.nexcp.validate()?;
        if self.forecaster.window == 0 || !(self.forecaster.ridge >= 0.0) {
            return Err(Error::Config(
                "forecaster window must be positive and ridge nonnegative".into(),
            ));
        }
        match self.method {
            Method::Rescp => {
                self.reservoir.validate()?;
                self.rescp_params().validate()?;
            }
            Method::Rescqr => {
                self.reservoir.validate()?;
                if self.beta_search {
                    beta_grid(self.alpha, self.alpha / 20.0)?;
                }
            }
            Method::Scp | Method::Nexcp => {}
        }
        match &self.data {
            DataSource::Csv { spec, .. } => {
                if spec.prediction_column.is_some() && spec.horizon != self.horizon {
                    return Err(Error::Config(format!(
                        "prediction file horizon {} differs from experiment horizon {}",
                        spec.horizon, self.horizon
                    )));
                }
            }
            DataSource::Synthetic { length, .. } if *length < 5 => {
                return Err(Error::Config("synthetic length must be at least 5".into()));
            }
            DataSource::Synthetic { .. } => {}
        }
        Ok(())
    }
}
