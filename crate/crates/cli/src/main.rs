use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use trustsup::loops::Mode;
use trustsup_cli::commands::default_runs;
use trustsup_cli::exit::{code_for, ConfigError};
use trustsup_cli::report::histogram_line;
use trustsup_cli::{ExperimentConfig, RunSpec, Source};

/// Trust supervision experiments for classifier ensembles.
#[derive(Parser)]
#[command(name = "trustsup", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic activations and toy feature data.
    Gen(Common),
    /// Train the supervisors and the toy ensemble.
    Train(Common),
    /// Evaluate one or more modes and write the metrics table.
    Eval(EvalArgs),
    /// Run gen, train and every evaluation mode.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Maximal,
    Predicted,
    Online,
    Active,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Maximal => Mode::Maximal,
            ModeArg::Predicted => Mode::Predicted,
            ModeArg::Online => Mode::Online,
            ModeArg::Active => Mode::Active,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Synth,
    Toy,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Modes to evaluate, comma separated. Defaults to every mode the
    /// source supports.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<ModeArg>,
    /// Oracle budget fraction for active mode.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, value_enum, default_value = "synth")]
    source: SourceArg,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    Ok(cfg.resolve(common.seed)?)
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("TRUSTSUP_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError(format!("TRUSTSUP_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError(format!("cannot size the worker pool: {e}")))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let started = Instant::now();
    let name = match cli.command {
        Command::Gen(c) => {
            let s = trustsup_cli::gen(&load_config(&c)?, &c.out)?;
            println!("{}", histogram_line("train", &s.train_histogram));
            println!("{}", histogram_line("test", &s.test_histogram));
            "gen"
        }
        Command::Train(c) => {
            let m = trustsup_cli::train(&load_config(&c)?, &c.out)?;
            for (name, s) in [("supervisor", &m.synth), ("toy supervisor", &m.toy)] {
                println!(
                    "{name}: final TT {} (scan optimum {}), memory {}/{}",
                    s.final_tt, s.scan_optimal_tt, s.memory_len, s.memory_capacity
                );
            }
            "train"
        }
        Command::Eval(args) => {
            let mut cfg = load_config(&args.common)?;
            if let Some(b) = args.budget {
                cfg.loop_cfg.oracle_budget = b;
                cfg = cfg.resolve(None)?;
            }
            let source = match args.source {
                SourceArg::Synth => Source::Synth,
                SourceArg::Toy => Source::Toy,
            };
            let beta = cfg.loop_cfg.oracle_budget;
            let runs: Vec<RunSpec> = if args.mode.is_empty() {
                default_runs(source, &[beta])
            } else {
                args.mode
                    .iter()
                    .map(|&m| RunSpec {
                        mode: m.into(),
                        budget: beta,
                    })
                    .collect()
            };
            print!("{}", trustsup_cli::eval(&cfg, &args.common.out, source, &runs)?.table());
            "eval"
        }
        Command::Bench(c) => {
            let s = trustsup_cli::bench(&load_config(&c)?, &c.out)?;
            print!("{}", s.synth.table());
            print!("{}", s.toy.table());
            "bench"
        }
    };
    eprintln!("{name} finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code_for(&e))
        }
    }
}
