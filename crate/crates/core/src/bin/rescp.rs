use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rescp::data::{gen_synthetic, write_csv, CsvSpec, SyntheticKind};
use rescp::experiment::{grid_search, run_experiment, DataSource, ExperimentConfig, Method, ParamGrid};
use rescp::weighting::{DecaySchedule, Similarity};
use rescp::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "rescp",
    version,
    about = "Reservoir conformal prediction intervals for time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate and evaluate intervals on the test split.
    Run(RunArgs),
    /// Pick hyperparameters on a validation slice of the calibration split.
    GridSearch {
        #[command(flatten)]
        run: RunArgs,
        /// Fraction of the calibration split used for validation.
        #[arg(long, default_value_t = 0.1)]
        validation_fraction: f64,
        /// TOML file with the candidate lists; defaults depend on the method.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Write a synthetic series to CSV.
    Generate {
        /// ar1 or regime_switch
        #[arg(long, default_value = "regime_switch")]
        kind: String,
        #[arg(long, default_value_t = 10_000)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML configuration; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// rescp, rescqr, scp or nexcp
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// CSV file with the series.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    target_col: String,
    /// Column with externally produced point forecasts.
    #[arg(long)]
    pred_col: Option<String>,
    #[arg(long, value_delimiter = ',')]
    feature_cols: Vec<String>,
    /// ar1 or regime_switch
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    reservoir_size: Option<usize>,
    #[arg(long)]
    spectral_radius: Option<f64>,
    #[arg(long)]
    leak_rate: Option<f64>,
    #[arg(long)]
    input_scaling: Option<f64>,
    #[arg(long)]
    connectivity: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    /// cosine or dot
    #[arg(long)]
    similarity: Option<Similarity>,
    /// none, linear or exp:<rho>
    #[arg(long)]
    decay: Option<DecaySchedule>,
    /// Calibration window size, or "all".
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    beta_search: Option<bool>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory for interval files and the summary.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    nexcp_rho: Option<f64>,
    /// Keep the calibration set fixed during the test split.
    #[arg(long)]
    frozen: bool,
    /// Use Monte Carlo quantiles with this many samples.
    #[arg(long)]
    mc_samples: Option<usize>,
}

fn parse_synthetic(name: &str) -> Result<SyntheticKind> {
    match name {
        "ar1" => Ok(SyntheticKind::ar1()),
        "regime_switch" | "regime_switch_hetero" => Ok(SyntheticKind::regime_switch()),
        other => Err(Error::Config(format!(
            "unknown synthetic series '{other}' (expected ar1 or regime_switch)"
        ))),
    }
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    fn build_config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_toml_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = self.method {
            c.method = m;
        }
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        if let Some(h) = self.horizon {
            c.horizon = h;
        }
        if let Some(path) = &self.data {
            c.data = DataSource::Csv {
                path: path.clone(),
                spec: CsvSpec {
                    target_column: self.target_col.clone(),
                    feature_columns: self.feature_cols.clone(),
                    prediction_column: self.pred_col.clone(),
                    horizon: c.horizon,
                },
            };
        }
        if let Some(name) = &self.synthetic {
            let length = match &c.data {
                DataSource::Synthetic { length, .. } => *length,
                DataSource::Csv { .. } => 10_000,
            };
            c.data = DataSource::Synthetic {
                kind: parse_synthetic(name)?,
                length,
                seed: None,
            };
        }
        if let Some(n) = self.length {
            match &mut c.data {
                DataSource::Synthetic { length, .. } => *length = n,
                DataSource::Csv { .. } => {
                    return Err(Error::Config("--length only applies to synthetic data".into()));
                }
            }
        }
        let r = &mut c.reservoir;
        if let Some(v) = self.reservoir_size {
            r.size = v;
        }
        if let Some(v) = self.spectral_radius {
            r.spectral_radius = v;
        }
        if let Some(v) = self.leak_rate {
            r.leak_rate = v;
        }
        if let Some(v) = self.input_scaling {
            r.input_scaling = v;
        }
        if let Some(v) = self.connectivity {
            r.connectivity = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if let Some(v) = self.similarity {
            c.similarity = v;
        }
        if let Some(v) = self.decay {
            c.decay = v;
        }
        if let Some(w) = &self.window {
            c.window = match w.as_str() {
                "all" => None,
                n => Some(
                    n.parse()
                        .map_err(|_| Error::Config(format!("window must be a positive integer or 'all', got '{n}'")))?,
                ),
            };
        }
        if let Some(v) = self.beta_search {
            c.beta_search = v;
        }
        if let Some(v) = self.grid_step {
            c.grid_step = Some(v);
        }
        if let Some(s) = self.seed {
            c.seeds = vec![s];
        }
        if !self.seeds.is_empty() {
            c.seeds = self.seeds.clone();
        }
        if let Some(o) = &self.out {
            c.output = Some(o.clone());
        }
        if let Some(v) = self.nexcp_rho {
            c.nexcp.rho = v;
        }
        if self.frozen {
            c.online = false;
        }
        if let Some(n) = self.mc_samples {
            c.quantile_mode = rescp::conformal::QuantileMode::MonteCarlo { n_samples: n, seed: 0 };
        }
        c.validate()?;
        Ok(c)
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let config = args.build_config()?;
            let out = run_experiment(&config)?;
            emit(&serde_json::to_string_pretty(&out.aggregate)?)?;
        }
        Command::GridSearch {
            run,
            validation_fraction,
            grid,
        } => {
            let base = run.build_config()?;
            let grid = match grid {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| Error::Config(format!("cannot read grid file {}: {e}", p.display())))?;
                    toml::from_str(&text)?
                }
                None => ParamGrid::default_for(base.method),
            };
            let result = grid_search(&base, &grid, validation_fraction)?;
            let report = serde_json::json!({
                "best_score": result.best_score,
                "best": result.best,
                "points": result.points,
            });
            let text = serde_json::to_string_pretty(&report)?;
            match &base.output {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join("grid_search.json"), text + "\n")?;
                }
                None => emit(&text)?,
            }
        }
        Command::Generate {
            kind,
            length,
            seed,
            out,
        } => {
            let bundle = gen_synthetic(parse_synthetic(&kind)?, length, seed)?;
            write_csv(&out, &bundle, "y", None)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
