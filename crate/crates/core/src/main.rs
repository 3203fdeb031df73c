use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcinfer::dc::{TestMethod, DEFAULT_LEVELS};
use dcinfer::experiments::{emit_csv, run, write_csv, ExperimentConfig};
use dcinfer::linalg::{CsvOptions, ResponseColumn};
use dcinfer::pipeline::{estimate, fit_shards, test_coordinate, InferenceConfig, ThresholdRule};
use dcinfer::{Dataset, Error, Family, Partition, Result};

#[derive(Parser)]
#[command(name = "dcinfer", version, about = "Divide-and-conquer inference for sparse regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation config over a grid of shard counts.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        k_list: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the penalized estimator on every shard and print the naive average.
    Fit(DataArgs),
    /// Test `H0: beta_v = null_value`.
    Test {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        coordinate: usize,
        #[arg(long, default_value_t = 0.0)]
        null_value: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        method: Option<TestMethod>,
    },
    /// Thresholded aggregated debiased estimate.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Use `nu = c0 sqrt(log d / n)` instead of the bootstrap.
        #[arg(long)]
        threshold_c0: Option<f64>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Numeric CSV; the response column is removed, the rest are covariates.
    #[arg(long)]
    data: PathBuf,
    /// Response column, by zero-based index or header name.
    #[arg(long, default_value = "0")]
    response: String,
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value = "gaussian")]
    family: Family,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    lambda_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<(Dataset<f64>, Partition, InferenceConfig)> {
        let opts = CsvOptions {
            has_header: !self.no_header,
            response: self.response.parse::<ResponseColumn>().unwrap_or_else(|e| match e {}),
            family: self.family,
        };
        let ds = Dataset::from_csv(&self.data, &opts)?;
        let partition = Partition::new(ds.n(), self.k, self.seed)?;
        let mut cfg = InferenceConfig::for_family(self.family);
        if let Some(c) = self.lambda_scale {
            cfg.lambda_scale = c;
        }
        cfg.validate()?;
        Ok((ds, partition, cfg))
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_lines(out: Option<&Path>, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let path = out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let io_err = |source| Error::Io { path: path.clone(), source };
    let mut w = sink(out)?;
    for line in lines {
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn simulate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let rows = run(cfg)?;
    match out {
        Some(p) => emit_csv(&rows, p),
        None => write_csv(&rows, io::stdout().lock()).map_err(|source| Error::Csv {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => simulate(&ExperimentConfig::from_file(&config)?, out.as_deref()),
        Command::Sweep { config, k_list, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if !k_list.is_empty() {
                cfg.k_list = k_list;
            }
            cfg.validate()?;
            simulate(&cfg, out.as_deref())
        }
        Command::Fit(args) => {
            let (ds, p, cfg) = args.load()?;
            let sf = fit_shards(&ds, &p, &cfg)?;
            let avg = sf.mean_penalized();
            let header = format!("# k = {}, lambda = {:.6e}", sf.k(), sf.lambda);
            let lines = std::iter::once(header)
                .chain(std::iter::once("coordinate,beta".to_string()))
                .chain(avg.iter().enumerate().map(|(j, b)| format!("{j},{b:.16e}")));
            write_lines(args.out.as_deref(), lines)
        }
        Command::Test {
            data,
            coordinate,
            null_value,
            alpha,
            method,
        } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
            }
            let (ds, p, cfg) = data.load()?;
            if coordinate >= ds.d() {
                return Err(Error::InvalidConfig(format!("coordinate {coordinate} out of range for d = {}", ds.d())));
            }
            let methods = match (method, data.family) {
                (Some(m), _) => vec![m],
                (None, Family::GaussianLinear) => vec![TestMethod::WaldLinear, TestMethod::WaldGlm, TestMethod::Score],
                (None, Family::Logistic) => vec![TestMethod::WaldGlm, TestMethod::Score],
            };
            let sf = fit_shards(&ds, &p, &cfg)?;
            let mut lines = vec!["method,coordinate,null_value,statistic,p_value,alpha,reject".to_string()];
            for m in methods {
                let r = test_coordinate(&sf, coordinate, null_value, m, &cfg)?.with_level(alpha);
                let mut levels: Vec<f64> = DEFAULT_LEVELS.to_vec();
                if !levels.contains(&alpha) {
                    levels.push(alpha);
                }
                for a in levels {
                    lines.push(format!(
                        "{},{},{},{:.16e},{:.16e},{a},{}",
                        m.name(),
                        coordinate,
                        null_value,
                        r.statistic,
                        r.p_value,
                        r.rejects(a)
                    ));
                }
            }
            write_lines(data.out.as_deref(), lines)
        }
        Command::Estimate { data, alpha, threshold_c0 } => {
            let (ds, p, mut cfg) = data.load()?;
            cfg.threshold = match threshold_c0 {
                Some(c0) => ThresholdRule::Fixed { c0 },
                None => ThresholdRule::Bootstrap { alpha, n_draws: 500 },
            };
            cfg.validate()?;
            let sf = fit_shards(&ds, &p, &cfg)?;
            let est = estimate(&sf, &cfg, data.seed)?;
            let header = format!("# k = {}, nu = {:.6e}, support size = {}", sf.k(), est.nu, est.support.len());
            let lines = [header, "coordinate,beta_bar_d,beta_thresholded".to_string()].into_iter().chain(
                est.coords
                    .iter()
                    .enumerate()
                    .map(|(i, j)| format!("{j},{:.16e},{:.16e}", est.beta_bar_d[i], est.beta_thresholded[i])),
            );
            write_lines(data.out.as_deref(), lines)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
