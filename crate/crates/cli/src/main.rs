use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metalag::harness::gradcheck::{run_gradcheck, Suite};
use metalag::harness::plotdata::emit_plotdata;
use metalag::harness::sweep::{run_sweep, SweepGrid};
use metalag::harness::train::{run_training, write_file};
use metalag::harness::ExperimentConfig;
use metalag::HarnessError;

const EXIT_USAGE: u8 = 1;
const EXIT_GRADCHECK: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "metalag", version, about = "Constrained actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over its seeds.
    Train(RunArgs),
    /// Run a grid of agents x safety coefficients x thresholds x seeds.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Agent labels, e.g. d4pg,rs-0.1,rc,metal.
        #[arg(long, value_delimiter = ',')]
        agents: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        safety_coefficients: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Compare closed-form gradients with finite differences.
    Gradcheck {
        #[arg(long, value_parser = ["metal", "mesh", "approx"])]
        suite: String,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the suite's tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Extract per-episode plot columns from telemetry files.
    Plotdata {
        #[arg(required = true)]
        telemetry: Vec<PathBuf>,
        /// Directory for `<name>.plot.csv` files; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set agent.lr_critic=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    safety_coefficient: Option<f64>,
    #[arg(long)]
    threshold_beta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

enum Failure {
    Usage(String),
    Gradcheck,
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn resolve(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    let flags = [
        ("agent", args.agent.clone()),
        ("env", args.env.clone()),
        ("safety_coefficient", args.safety_coefficient.map(|v| v.to_string())),
        ("threshold_beta", args.threshold_beta.map(|v| v.to_string())),
        ("seeds", args.seeds.as_ref().map(|s| s.iter().map(u64::to_string).collect::<Vec<_>>().join(","))),
        ("episodes", args.episodes.map(|v| v.to_string())),
        ("output", args.output.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &args.overrides {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(args) => {
            let cfg = resolve(&args)?;
            if args.print_config {
                print!("{}", cfg.to_text());
                return Ok(());
            }
            let outcomes = run_training(&cfg)?;
            println!("{}", metalag::metrics::SUMMARY_HEADER);
            for o in outcomes {
                println!("{}", o.summary.csv_row());
            }
        }
        Command::Sweep { run, agents, safety_coefficients, thresholds } => {
            let base = resolve(&run)?;
            let mut grid = SweepGrid::desk(base.seeds.clone());
            if let Some(a) = agents {
                grid.agents = a;
            }
            if let Some(s) = safety_coefficients {
                grid.safety_coefficients = s;
            }
            grid.thresholds = thresholds.unwrap_or_else(|| vec![base.agent.threshold_beta]);
            if run.print_config {
                print!("{}", base.to_text());
                return Ok(());
            }
            let result = run_sweep(&grid, &base)?;
            print!("{}", result.table);
        }
        Command::Gradcheck { suite, instances, seed, tolerance } => {
            let suite = Suite::from_name(&suite).ok_or_else(|| Failure::Usage(format!("unknown suite `{suite}`")))?;
            let report = run_gradcheck(suite, instances, seed, tolerance.unwrap_or(suite.default_tolerance()))?;
            println!("{}", report.line());
            if !report.passed() {
                return Err(Failure::Gradcheck);
            }
        }
        Command::Plotdata { telemetry, output } => {
            for path in telemetry {
                let text = emit_plotdata(&path)?;
                match &output {
                    Some(dir) => {
                        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("run");
                        let stem =
                            name.strip_suffix(".telemetry.csv").or_else(|| name.strip_suffix(".csv")).unwrap_or(name);
                        write_file(&dir.join(format!("{stem}.plot.csv")), &text)?;
                    }
                    None => print!("{text}"),
                }
            }
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
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Gradcheck) => ExitCode::from(EXIT_GRADCHECK),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
