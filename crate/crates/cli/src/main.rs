//! `lsm` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! failure. Failures print one diagnostic line on stderr.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};
use lsm_core::persistence::{
    export_csv, export_csv_file, import_csv_file, load_config, load_model_file, save_model_file,
};
use lsm_core::tasks::{compare_throughput, nmse, run_benchmark, BenchReport, DelayTask};
use lsm_core::{
    generate_reservoir, FeatureKind, FeatureMode, LsmError, LsmModel, ReservoirConfig,
    TrainOptions,
};

#[derive(Parser)]
#[command(name = "lsm", version, about = "Liquid state machine: spiking reservoir with a ridge readout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an untrained reservoir and save it.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the readout on one input/target sequence.
    Train(TrainArgs),
    /// Refit the readout from a model's state cache against new targets.
    Retrain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        /// Defaults to the model's current regularization.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict outputs for an input sequence.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print nmse=<value> of predictions against targets.
    Eval(EvalArgs),
    /// Run the delay-recall benchmark.
    Bench(BenchArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["model", "config"]))]
struct TrainArgs {
    /// Reuse the reservoir stored in this model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Generate the reservoir from this config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config file.
    #[arg(long, requires = "config")]
    seed: Option<u64>,
    #[arg(long)]
    inputs: PathBuf,
    #[arg(long)]
    targets: PathBuf,
    /// Ridge strength; a scale-aware default is used when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value = "spike_trace")]
    mode: FeatureKind,
    #[arg(long, default_value_t = 0.9)]
    trace_decay: f64,
    /// Keep recorded states so the model can be retrained later.
    #[arg(long)]
    keep_cache: bool,
    #[arg(long, default_value_t = 0)]
    washout: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("prediction").required(true).args(["model", "predictions"]))]
struct EvalArgs {
    #[arg(long, requires = "inputs")]
    model: Option<PathBuf>,
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Precomputed predictions instead of --model/--inputs.
    #[arg(long, conflicts_with_all = ["model", "inputs"])]
    predictions: Option<PathBuf>,
    #[arg(long)]
    targets: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Reservoir config; the built-in benchmark default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task spec, `delay:<d>`.
    #[arg(long, default_value = "delay:3")]
    task: String,
    /// Number of consecutive seeds, starting at the config seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 2000)]
    train_steps: usize,
    #[arg(long, default_value_t = 500)]
    test_steps: usize,
    #[arg(long)]
    lambda: Option<f64>,
    /// Also time the sparse kernel against the dense reference.
    #[arg(long)]
    compare_dense: bool,
    /// Write one CSV row per seed here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Lsm(LsmError),
}

impl From<LsmError> for Failure {
    fn from(e: LsmError) -> Self {
        Failure::Lsm(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lsm(LsmError::Io(e))
    }
}

type CliResult<T = ()> = Result<T, Failure>;

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
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lsm(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Gen { config, seed, out } => {
            let config = with_seed(load_config(&config)?, seed);
            let model = LsmModel::untrained(generate_reservoir(&config)?);
            save_model_file(&model, &out)?;
        }
        Command::Train(args) => train(args)?,
        Command::Retrain {
            model,
            targets,
            lambda,
            out,
        } => {
            let model = load_model_file(&model)?;
            let targets = import_csv_file(&targets)?;
            save_model_file(&model.retrain(&targets, lambda)?, &out)?;
        }
        Command::Predict { model, inputs, out } => {
            let model = load_model_file(&model)?;
            let pred = model.predict_sequence(&import_csv_file(&inputs)?)?;
            match out {
                Some(path) => export_csv_file(&pred, path)?,
                None => export_csv(&pred, io::stdout().lock())?,
            }
        }
        Command::Eval(args) => {
            let pred = match (args.predictions, args.model, args.inputs) {
                (Some(p), _, _) => import_csv_file(&p)?,
                (None, Some(m), Some(i)) => {
                    load_model_file(&m)?.predict_sequence(&import_csv_file(&i)?)?
                }
                _ => return Err(Failure::Usage("eval needs --predictions or --model with --inputs".into())),
            };
            let targets = import_csv_file(&args.targets)?;
            println!("nmse={}", nmse(&pred, &targets)?);
        }
        Command::Bench(args) => bench(args)?,
    }
    Ok(())
}

fn with_seed(config: ReservoirConfig, seed: Option<u64>) -> ReservoirConfig {
    ReservoirConfig {
        seed: seed.unwrap_or(config.seed),
        ..config
    }
}

fn train(args: TrainArgs) -> CliResult {
    let base = match (&args.model, &args.config) {
        (Some(path), None) => load_model_file(path)?,
        (None, Some(path)) => {
            let config = with_seed(load_config(path)?, args.seed);
            LsmModel::untrained(generate_reservoir(&config)?)
        }
        _ => return Err(Failure::Usage("give exactly one of --model or --config".into())),
    };
    let options = TrainOptions {
        lambda: args.lambda,
        feature_mode: FeatureMode::new(args.mode, args.trace_decay)?,
        keep_cache: args.keep_cache,
        washout: args.washout,
    };
    let xs = import_csv_file(&args.inputs)?;
    let ys = import_csv_file(&args.targets)?;
    let model = base.train(&[(xs, ys)], &options)?;
    save_model_file(&model, &args.out)?;
    Ok(())
}

fn parse_task(spec: &str) -> CliResult<usize> {
    spec.strip_prefix("delay:")
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| Failure::Usage(format!("unknown task {spec:?}; expected delay:<d>")))
}

fn bench(args: BenchArgs) -> CliResult {
    let config = match &args.config {
        Some(path) => load_config(path)?,
        None => ReservoirConfig::benchmark_default(0),
    };
    if args.seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let mut task = DelayTask {
        delay: parse_task(&args.task)?,
        train_steps: args.train_steps,
        test_steps: args.test_steps,
        ..DelayTask::default()
    };
    if let Some(lambda) = args.lambda {
        task.readout.lambda = lambda;
    }

    let mut reports: Vec<BenchReport> = Vec::new();
    for i in 0..args.seeds {
        let seeded = ReservoirConfig {
            seed: config.seed.wrapping_add(i),
            ..config.clone()
        };
        reports.push(run_benchmark(&seeded, &task)?);
    }

    let n = reports.len() as f64;
    let mean = |f: fn(&BenchReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "task=delay:{}", task.delay)?;
    writeln!(out, "seeds={}", reports.len())?;
    writeln!(out, "nmse={}", mean(|r| r.nmse))?;
    writeln!(out, "baseline_nmse={}", mean(|r| r.baseline_nmse))?;
    writeln!(out, "steps_per_second={}", mean(|r| r.steps_per_second))?;
    writeln!(out, "spikes_per_step={}", mean(|r| r.spikes_per_step))?;
    if args.compare_dense {
        let t = compare_throughput(&config, 200)?;
        writeln!(out, "sparse_steps_per_second={}", t.sparse_steps_per_second)?;
        writeln!(out, "dense_steps_per_second={}", t.dense_steps_per_second)?;
        writeln!(out, "sparse_speedup={}", t.speedup())?;
    }

    if let Some(path) = args.csv {
        let mut f = File::create(path)?;
        writeln!(f, "{}", BenchReport::CSV_HEADER)?;
        for r in &reports {
            writeln!(f, "{}", r.to_csv_row())?;
        }
    }
    Ok(())
}
