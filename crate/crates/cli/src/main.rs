use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use permcac::cac::CacConfig;
use permcac::curve::Strategy;
use permcac::verify::Level;
use permcac::{EnsembleKind, EnsembleSpec};
use permcac_cli::config::parse_rate;
use permcac_cli::{load_config, run, CliError, CommandKind, ErrorRecord, GridAxis, Params, RunConfig};

#[derive(Parser)]
#[command(name = "perm", version, about = "Permanents of random matrices: exact oracles, continuation and Monte-Carlo checks")]
struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, env = "PERM_THREADS", default_value_t = 0)]
    threads: usize,
    /// Write the JSON record (or the CSV table for roots and sweep) here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ensemble {
    Gaussian,
    Bernoulli,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    ensemble: Ensemble,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EnsembleArgs {
    fn spec(&self) -> EnsembleSpec {
        let kind = match self.ensemble {
            Ensemble::Gaussian => EnsembleKind::GaussianComplex,
            Ensemble::Bernoulli => EnsembleKind::BernoulliBiased,
        };
        EnsembleSpec { kind, mu: self.mu, n: self.n, seed: self.seed }
    }
}

#[derive(Args)]
struct CacArgs {
    #[arg(long, default_value_t = std::f64::consts::E)]
    beta: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// Derivatives kept at the origin.
    #[arg(long, default_value_t = 60)]
    m: usize,
    #[arg(long, default_value_t = permcac::cac::DEFAULT_SCHEDULE_FLOOR)]
    schedule_floor: usize,
    #[arg(long)]
    allow_small_beta: bool,
}

impl CacArgs {
    fn config(&self) -> CacConfig {
        CacConfig {
            beta: self.beta,
            delta: self.delta,
            m: self.m,
            schedule_floor: self.schedule_floor,
            allow_small_beta: self.allow_small_beta,
        }
    }
}

#[derive(Args)]
struct PathArgs {
    /// Endpoint of the continuation.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    b: f64,
    /// auto, straight or json:<file>.
    #[arg(long, default_value = "auto")]
    path: String,
    /// Steps for the straight path.
    #[arg(long, default_value_t = 4)]
    steps: usize,
    /// Skip the exact Ryser comparison.
    #[arg(long)]
    no_exact: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact permanent of one sampled matrix.
    Exact {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Coefficients of Per(J + zA).
    Coeffs {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Roots of Per(J + zA) as CSV, one row per root.
    Roots {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Continue ln Per(J + zA) from 0 to b.
    Cac {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[command(flatten)]
        cac: CacArgs,
        #[command(flatten)]
        path: PathArgs,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Pick a root-avoiding curve from the family.
    Curve {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// first_clear, best_clearance or paper_random.
        #[arg(long, default_value = "first_clear")]
        strategy: String,
        /// Allow epsilon up to 0.5.
        #[arg(long)]
        wide_epsilon: bool,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Monte-Carlo statistics.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Recover Per(A) exactly from an oracle that lies on some queries.
    BwDemo {
        #[arg(long, default_value_t = 4)]
        n: usize,
        /// Number of oracle queries.
        #[arg(long, default_value_t = 21)]
        m: usize,
        /// Corruption probability, e.g. 1/8 or 0.125.
        #[arg(long, default_value = "1/8", value_parser = parse_rate)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Repeat the continuation over a parameter grid; one CSV row per point and trial.
    Sweep {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[command(flatten)]
        cac: CacArgs,
        #[command(flatten)]
        path: PathArgs,
        /// key=v1,v2,... with key one of m, b, beta, n; repeatable.
        #[arg(long, required = true)]
        grid: Vec<String>,
        #[arg(long, default_value_t = 10)]
        repeat: usize,
    },
    /// Run the acceptance checks.
    Verify {
        #[arg(long, default_value = "fast")]
        level: String,
    },
    /// Re-run from a config file or from the config embedded in a previous record.
    Run {
        #[arg(long)]
        config: String,
    },
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Second moment of g(z) / n! at radius r.
    Moment {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        per_trial: Option<String>,
    },
    /// Roots inside disks of the given radii.
    Rootcount {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2")]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        per_trial: Option<String>,
    },
    /// Both sides of Jensen's formula on |z| = r.
    Jensen {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[arg(long, default_value_t = 1.5)]
        r: f64,
        #[arg(long, default_value_t = 4096)]
        quad_points: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long)]
        per_trial: Option<String>,
    },
    /// E|Per(A + mu J) - Per(A)|^2 against its closed form.
    Meanshift {
        #[command(flatten)]
        ens: EnsembleArgs,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        per_trial: Option<String>,
    },
    /// Tail sum of beta^{-k} k^l from m on.
    Tail {
        #[arg(long, default_value_t = 60)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        l: usize,
        #[arg(long, default_value_t = std::f64::consts::E)]
        beta: f64,
    },
}

fn parse<T: std::str::FromStr<Err = permcac::Error>>(s: &str) -> Result<T, CliError> {
    s.parse().map_err(|e: permcac::Error| CliError::Config(e.to_string()))
}

fn resolve(cmd: Cmd) -> Result<RunConfig, CliError> {
    let mut p = Params::default();
    let mut per_trial = None;
    let (kind, ens) = match cmd {
        Cmd::Run { config } => {
            let text = std::fs::read_to_string(&config).map_err(|e| CliError::Config(format!("{config}: {e}")))?;
            return load_config(&text);
        }
        Cmd::Exact { ens, trial } => {
            p.trial = trial;
            (CommandKind::Exact, ens.spec())
        }
        Cmd::Coeffs { ens, trial } => {
            p.trial = trial;
            (CommandKind::Coeffs, ens.spec())
        }
        Cmd::Roots { ens, trials } => {
            p.trials = trials;
            (CommandKind::Roots, ens.spec())
        }
        Cmd::Cac { ens, cac, path, trial } => {
            p.cac = cac.config();
            apply_path(&mut p, path);
            p.trial = trial;
            (CommandKind::Cac, ens.spec())
        }
        Cmd::Curve { ens, epsilon, strategy, wide_epsilon, trial } => {
            p.epsilon = epsilon;
            p.strategy = parse::<Strategy>(&strategy)?;
            p.wide_epsilon = wide_epsilon;
            p.trial = trial;
            (CommandKind::Curve, ens.spec())
        }
        Cmd::Stats(s) => match s {
            StatsCmd::Moment { ens, r, trials, per_trial: out } => {
                (p.r, p.trials, per_trial) = (r, trials, out);
                (CommandKind::StatsMoment, ens.spec())
            }
            StatsCmd::Rootcount { ens, radii, trials, per_trial: out } => {
                (p.radii, p.trials, per_trial) = (radii, trials, out);
                (CommandKind::StatsRootcount, ens.spec())
            }
            StatsCmd::Jensen { ens, r, quad_points, trials, per_trial: out } => {
                (p.r, p.quad_points, p.trials, per_trial) = (r, quad_points, trials, out);
                (CommandKind::StatsJensen, ens.spec())
            }
            StatsCmd::Meanshift { ens, trials, per_trial: out } => {
                (p.trials, per_trial) = (trials, out);
                (CommandKind::StatsMeanshift, ens.spec())
            }
            StatsCmd::Tail { m, l, beta } => {
                (p.cac.m, p.l, p.cac.beta) = (m, l, beta);
                (CommandKind::StatsTail, EnsembleSpec::gaussian(1, 0.0, 0))
            }
        },
        Cmd::BwDemo { n, m, rate, seed } => {
            (p.points, p.rate) = (m, rate);
            (CommandKind::BwDemo, EnsembleSpec::gaussian(n, 0.0, seed))
        }
        Cmd::Sweep { ens, cac, path, grid, repeat } => {
            p.cac = cac.config();
            apply_path(&mut p, path);
            p.grid = grid.iter().map(|g| g.parse::<GridAxis>()).collect::<Result<_, _>>()?;
            p.repeat = repeat;
            (CommandKind::Sweep, ens.spec())
        }
        Cmd::Verify { level } => {
            p.level = parse::<Level>(&level)?;
            (CommandKind::Verify, EnsembleSpec::gaussian(1, 0.0, 0))
        }
    };
    let mut cfg = RunConfig::new(kind, ens, p);
    cfg.per_trial = per_trial;
    Ok(cfg)
}

fn apply_path(p: &mut Params, path: PathArgs) {
    p.b = path.b;
    p.path = path.path;
    p.steps = path.steps;
    p.exact = !path.no_exact;
}

fn write(path: &str, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{path}: {e}")))
}

/// Sends the record and table to their destinations; returns the exit code.
fn emit(cfg: &RunConfig) -> Result<i32, CliError> {
    let art = run(cfg)?;
    if cfg.command.table_primary() {
        let table = art.table.unwrap_or_default();
        match &cfg.output {
            Some(path) => {
                write(path, &table)?;
                write(&format!("{path}.json"), &art.record)?;
            }
            None => print!("{table}"),
        }
    } else {
        match &cfg.output {
            Some(path) => write(path, &art.record)?,
            None => println!("{}", art.record),
        }
        if let (Some(path), Some(table)) = (&cfg.per_trial, &art.table) {
            write(path, table)?;
        }
    }
    Ok(art.exit_code)
}

fn fail(cfg: Option<RunConfig>, err: &CliError) -> ExitCode {
    let rec = ErrorRecord::new(cfg, err);
    println!("{}", serde_json::to_string_pretty(&rec).expect("error record serializes"));
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let mut cfg = match resolve(cli.cmd) {
        Ok(cfg) => cfg,
        Err(e) => return fail(None, &e),
    };
    if cli.output.is_some() {
        cfg.output = cli.output;
    }
    match emit(&cfg) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => fail(Some(cfg), &e),
    }
}
