use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use onebit_core::protocols::{AdaptiveConfig, MultiThresholdConfig, NonAdaptiveConfig, Split};
use onebit_core::report::{
    aggregates_csv_string, beta_csv_string, constants_csv_string, format_number, sim_csv_string, sim_json_string,
};
use onebit_core::sim::{
    equal_thirds_thresholds, run_experiment_with, sweep_beta, sweep_splits, uniform_grid, BetaEmpirical,
    ExperimentConfig, Protocol,
};
use onebit_core::theory::{
    check_eta_condition, constants_for, default_eta_grid, ggd_crossing_in, hellinger_scan, HellingerCheckConfig,
};
use onebit_core::{BaseDensity, DensityKind, Error};

#[derive(Parser, Debug)]
#[command(
    name = "onebit-dme",
    version,
    about = "One-bit distributed mean estimation: asymptotic constants and protocol simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Constants (x*, h*, T, alpha*, C_non, C_adapt) for one density
    Constants {
        #[command(flatten)]
        dist: DistArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Reference values for the sin2 density: normalizer, f(0), x*, h* and T
    Table1 {
        #[command(flatten)]
        out: OutArgs,
    },
    /// C_non, C_adapt and their ratio for the four families
    Table2 {
        #[command(flatten)]
        out: OutArgs,
    },
    /// GGD shape at which C_non and C_adapt cross
    Crossing {
        #[arg(long, default_value_t = 1.1)]
        lo: f64,
        #[arg(long, default_value_t = 2.5)]
        hi: f64,
        #[arg(long, default_value_t = 1e-3)]
        xtol: f64,
    },
    /// Shape condition: eta(x) = f^2 / (F(x) F(-x)) non-increasing in |x|
    EtaCheck {
        #[command(flatten)]
        dist: DistArgs,
    },
    /// Bernoulli-level Hellinger bound: max_theta H^2 / eps^2 <= T(f) (1 + slack)
    HellingerCheck {
        #[command(flatten)]
        dist: DistArgs,
        /// Perturbation sizes to test
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3])]
        epsilon: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        slack: f64,
    },
    /// Monte Carlo MSE over a mu grid for one protocol
    Simulate {
        #[command(flatten)]
        dist: DistArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Worst-case MSE per (K1, K2) allocation
    SweepSplits {
        #[command(flatten)]
        dist: DistArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Allocations as k1,k2 pairs separated by ';' [default: the standard list for the protocol]
        #[arg(long, allow_hyphen_values = true)]
        splits: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// C_non / C_adapt over a GGD shape grid, optionally with adaptive n MSE
    SweepBeta {
        /// Shape grid min:max:step
        #[arg(long, default_value = "1.1:2.5:0.05", value_parser = parse_range)]
        betas: (f64, f64, f64),
        /// Also simulate the adaptive protocol at each shape
        #[arg(long)]
        empirical: bool,
        #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long, default_value_t = 2.0)]
        sigma: f64,
        #[arg(long, default_value_t = 40_000)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, env = "ONEBIT_DME_WORKERS")]
        workers: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum DistName {
    Ggd,
    Logistic,
    Hypsecant,
    Sin2,
}

#[derive(Args, Debug)]
struct DistArgs {
    #[arg(long, value_enum)]
    dist: DistName,
    /// GGD shape; required with --dist ggd and rejected otherwise
    #[arg(long)]
    beta: Option<f64>,
}

impl DistArgs {
    fn kind(&self) -> Result<DensityKind, Failure> {
        match (self.dist, self.beta) {
            (DistName::Ggd, Some(beta)) => Ok(DensityKind::Ggd { beta }),
            (DistName::Ggd, None) => Err(Failure::Usage("--beta is required with --dist ggd".into())),
            (_, Some(_)) => Err(Failure::Usage("--beta applies only to --dist ggd".into())),
            (DistName::Logistic, None) => Ok(DensityKind::Logistic),
            (DistName::Hypsecant, None) => Ok(DensityKind::HyperbolicSecant),
            (DistName::Sin2, None) => Ok(DensityKind::Sin2Custom),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output file; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ProtocolName {
    Adaptive,
    NonAdaptive,
    MultiThreshold,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long, value_enum, default_value_t = ProtocolName::Adaptive)]
    protocol: ProtocolName,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    /// User counts, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [2_500usize, 5_000, 10_000, 20_000, 40_000])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    /// Mean grid min:max:step
    #[arg(long, default_value = "-2.5:2.5:0.5", value_parser = parse_range, allow_hyphen_values = true)]
    mu_grid: (f64, f64, f64),
    /// Known mean range min:max for threshold placement [default: the grid's extent]
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    mu_range: Option<(f64, f64)>,
    /// Non-adaptive share of users at the lower threshold
    #[arg(long, default_value_t = 0.5)]
    k1: f64,
    /// Adaptive first-round split: "theorem" or "k1,k2"
    #[arg(long, default_value = "theorem")]
    split: String,
    /// Multi-threshold half-grid size; 2m must divide every n
    #[arg(long, default_value_t = 125)]
    m: usize,
    /// Multi-threshold grid spacing
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, env = "ONEBIT_DME_WORKERS")]
    workers: Option<usize>,
}

impl SimArgs {
    fn config(&self, dist: DensityKind) -> Result<ExperimentConfig, Failure> {
        let (lo, hi, step) = self.mu_grid;
        let mu_grid = uniform_grid(lo, hi, step)?;
        let mu_range = self.mu_range.unwrap_or((lo, hi));
        let protocol = match self.protocol {
            ProtocolName::NonAdaptive => {
                let (t1, t2) = equal_thirds_thresholds(mu_range.0, mu_range.1)?;
                Protocol::NonAdaptive(NonAdaptiveConfig::new(t1, t2, self.k1)?)
            }
            ProtocolName::Adaptive => {
                let (t1, t2) = equal_thirds_thresholds(mu_range.0, mu_range.1)?;
                Protocol::Adaptive(AdaptiveConfig {
                    theta1: t1,
                    theta2: t2,
                    split: parse_split(&self.split)?,
                })
            }
            ProtocolName::MultiThreshold => Protocol::MultiThreshold(MultiThresholdConfig {
                m: self.m,
                delta: self.delta,
            }),
        };
        Ok(ExperimentConfig {
            dist,
            protocol,
            mu_grid,
            sigma: self.sigma,
            n_values: self.n.clone(),
            n_trials: self.trials,
            master_seed: self.seed,
            mu_range,
        })
    }

    fn workers(&self) -> usize {
        resolve_workers(self.workers)
    }
}

fn resolve_workers(flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}"))
}

fn parse_range(s: &str) -> Result<(f64, f64, f64), String> {
    match s.split(':').collect::<Vec<_>>().as_slice() {
        [a, b, c] => Ok((parse_f64(a)?, parse_f64(b)?, parse_f64(c)?)),
        _ => Err(format!("expected min:max:step, got '{s}'")),
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    match s.split(':').collect::<Vec<_>>().as_slice() {
        [a, b] => Ok((parse_f64(a)?, parse_f64(b)?)),
        _ => Err(format!("expected min:max, got '{s}'")),
    }
}

fn parse_split(s: &str) -> Result<Split, Failure> {
    if s == "theorem" {
        return Ok(Split::TheoremRule);
    }
    match s.split(',').map(parse_f64).collect::<Result<Vec<_>, _>>() {
        Ok(v) if v.len() == 2 => Ok(Split::FixedFractions { k1: v[0], k2: v[1] }),
        _ => Err(Failure::Usage(format!("split must be 'theorem' or 'k1,k2', got '{s}'"))),
    }
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("I/O error: {e}"))
    }
}

fn emit(out: &OutArgs, text: &str) -> Result<(), Failure> {
    match &out.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Core(Error::Io {
            path: path.clone(),
            source: e,
        })),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Constants { dist, out } => {
            let c = constants_for(&BaseDensity::new(dist.kind()?)?)?;
            let text = match out.format {
                Format::Csv => constants_csv_string(std::slice::from_ref(&c)),
                Format::Json => json(&c)?,
            };
            emit(&out, &text)
        }
        Command::Table1 { out } => {
            let c = constants_for(&BaseDensity::sin2_custom())?;
            let rows = [
                ("Z_std", c.z_std.unwrap_or(f64::NAN)),
                ("f0", c.f0),
                ("x_star", c.x_star),
                ("h_star", c.h_star),
                ("T", c.t),
            ];
            let text = match out.format {
                Format::Csv => {
                    let mut s = String::from("quantity,value\n");
                    for (k, v) in rows {
                        s.push_str(&format!("{k},{}\n", format_number(v)));
                    }
                    s
                }
                Format::Json => json(&rows.iter().map(|(k, v)| (k.to_string(), *v)).collect::<std::collections::BTreeMap<_, _>>())?,
            };
            emit(&out, &text)
        }
        Command::Table2 { out } => {
            let rows = DensityKind::table_families()
                .into_iter()
                .map(|k| constants_for(&BaseDensity::new(k)?))
                .collect::<Result<Vec<_>, _>>()?;
            let text = match out.format {
                Format::Csv => constants_csv_string(&rows),
                Format::Json => json(&rows)?,
            };
            emit(&out, &text)
        }
        Command::Crossing { lo, hi, xtol } => {
            let beta = ggd_crossing_in(lo, hi, xtol)?;
            println!("beta_star={}", format_number(beta));
            Ok(())
        }
        Command::EtaCheck { dist } => {
            let kind = dist.kind()?;
            let check = check_eta_condition(&BaseDensity::new(kind)?, &default_eta_grid());
            match check.violation {
                None => println!("{kind}: eta non-increasing on [0, 8]: true"),
                Some((a, b)) => println!("{kind}: eta non-increasing on [0, 8]: false (increases between {a} and {b})"),
            }
            Ok(())
        }
        Command::HellingerCheck { dist, epsilon, slack } => {
            let kind = dist.kind()?;
            let d = BaseDensity::new(kind)?;
            let mut violation = None;
            for eps in epsilon {
                let cfg = HellingerCheckConfig {
                    tolerance_slack: slack,
                    ..HellingerCheckConfig::with_epsilon(eps)
                };
                let r = hellinger_scan(&d, &cfg)?;
                println!(
                    "{kind}: epsilon={eps} max H^2/eps^2={} at theta={} bound T(1+slack)={} holds={}",
                    format_number(r.max_ratio),
                    format_number(r.argmax_theta),
                    format_number(r.bound),
                    r.holds()
                );
                if !r.holds() && violation.is_none() {
                    violation = Some(Error::BoundViolation {
                        theta: r.argmax_theta,
                        epsilon: eps,
                        ratio: r.max_ratio,
                        bound: r.bound,
                    });
                }
            }
            match violation {
                Some(e) => Err(e.into()),
                None => Ok(()),
            }
        }
        Command::Simulate { dist, sim, out } => {
            let cfg = sim.config(dist.kind()?)?;
            let report = run_experiment_with(&cfg, sim.workers())?;
            let text = match out.format {
                Format::Csv => sim_csv_string(&report),
                Format::Json => sim_json_string(&report)?,
            };
            emit(&out, &text)
        }
        Command::SweepSplits { dist, sim, splits, out } => {
            let cfg = sim.config(dist.kind()?)?;
            let splits = match splits {
                Some(s) => s.split(';').map(parse_split).collect::<Result<Vec<_>, _>>()?,
                None => default_splits(sim.protocol)?,
            };
            let reports = sweep_splits(&cfg, &splits, sim.workers())?;
            let text = match out.format {
                Format::Csv => aggregates_csv_string(&reports),
                Format::Json => json(&reports)?,
            };
            emit(&out, &text)
        }
        Command::SweepBeta {
            betas,
            empirical,
            mu,
            sigma,
            n,
            trials,
            seed,
            workers,
            out,
        } => {
            let grid = uniform_grid(betas.0, betas.1, betas.2)?;
            let emp = empirical.then(|| BetaEmpirical {
                mu,
                sigma,
                n,
                n_trials: trials,
                master_seed: seed,
                mu_range: (-2.5, 2.5),
            });
            let rows = sweep_beta(&grid, emp.as_ref(), resolve_workers(workers))?;
            let text = match out.format {
                Format::Csv => beta_csv_string(&rows),
                Format::Json => json(&rows)?,
            };
            emit(&out, &text)
        }
    }
}

fn default_splits(protocol: ProtocolName) -> Result<Vec<Split>, Failure> {
    let pairs: &[(f64, f64)] = match protocol {
        ProtocolName::NonAdaptive => &[(0.1, 0.9), (0.2, 0.8), (0.3, 0.7), (0.4, 0.6), (0.5, 0.5)],
        ProtocolName::Adaptive => &[(0.05, 0.05), (0.10, 0.10), (0.15, 0.15)],
        ProtocolName::MultiThreshold => {
            return Err(Failure::Usage("the multi-threshold protocol has no split".into()))
        }
    };
    Ok(pairs.iter().map(|&(k1, k2)| Split::FixedFractions { k1, k2 }).collect())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
