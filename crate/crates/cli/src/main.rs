use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use mcsperf::config::{Mode, Preset, Scale};
use mcsperf::{
    cmd_bench, cmd_predict, cmd_run, cmd_simulate, compare_rows, format_report, read_rows, write_rows, CliError,
    ExperimentConfig, Row,
};
use mcsperf_calibrate::{calibrate, CalibrationOptions, CalibrationReport};

/// Throughput prediction, simulation and measurement for an MCS-locked
/// coarse-grained operation.
#[derive(Parser)]
#[command(name = "mcsperf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form prediction over the grid.
    Predict(ExperimentArgs),
    /// Abstract-machine simulation over the grid.
    Simulate(ExperimentArgs),
    /// Native MCS benchmark over the grid (needs one core per process).
    Bench(ExperimentArgs),
    /// Runs whatever `mode` selects.
    Run(ExperimentArgs),
    /// Measures the machine constants and writes a report file.
    Calibrate(CalibrateArgs),
    /// Scores measured (or simulated) rows against predicted rows.
    Validate(ValidateArgs),
}

/// Every option here overrides the same key from `--config`.
#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Calibration report to read constants from.
    #[arg(long)]
    constants: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    r_invalid: Option<f64>,
    #[arg(long)]
    r_modified: Option<f64>,
    #[arg(long)]
    x_contended: Option<f64>,
    /// Process counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Critical-section sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<f64>>,
    /// Explicit parallel-section sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    p_min: Option<f64>,
    #[arg(long)]
    p_max: Option<f64>,
    #[arg(long)]
    p_steps: Option<usize>,
    #[arg(long, value_enum)]
    p_scale: Option<Scale>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// CSV destination; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    ops_target: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    /// Write one simulator trace file per grid point.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Seconds per benchmark point.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    allow_cross_socket: bool,
}

impl ExperimentArgs {
    fn resolve(self) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let flags = ExperimentConfig {
            preset: self.preset,
            constants: self.constants,
            alpha: self.alpha,
            w: self.w,
            r_invalid: self.r_invalid,
            r_modified: self.r_modified,
            x_contended: self.x_contended,
            n: self.n,
            c: self.c,
            p: self.p,
            p_min: self.p_min,
            p_max: self.p_max,
            p_steps: self.p_steps,
            p_scale: self.p_scale,
            mode: self.mode,
            output: self.output,
            ops_target: self.ops_target,
            warmup: self.warmup,
            trace: self.trace.then_some(true),
            trace_dir: self.trace_dir,
            duration: self.duration,
            allow_cross_socket: self.allow_cross_socket.then_some(true),
        };
        Ok(file.merge(flags))
    }
}

#[derive(Args)]
struct CalibrateArgs {
    /// Report destination.
    #[arg(short, long, default_value = "calibration.txt")]
    output: PathBuf,
    /// Parallel-loop length for the alpha runs.
    #[arg(long, default_value_t = 1000)]
    alpha_p: u64,
    /// Seconds per alpha run.
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    /// Accesses per line-cost microbenchmark.
    #[arg(long, default_value_t = 1_000_000)]
    rounds: u64,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    allow_cross_socket: bool,
    /// Calibrate twice and fail unless every constant agrees within
    /// `--tolerance`.
    #[arg(long)]
    self_test: bool,
    #[arg(long, default_value_t = 0.10)]
    tolerance: f64,
}

#[derive(Args)]
struct ValidateArgs {
    /// CSV holding the reference (predicted) rows.
    #[arg(long)]
    predicted: PathBuf,
    /// CSV holding the measured or simulated rows.
    #[arg(long)]
    measured: PathBuf,
    /// Exit with status 3 when the median relative error exceeds this.
    #[arg(long)]
    max_median: Option<f64>,
}

fn emit(rows: &[Row], output: Option<&PathBuf>) -> Result<(), CliError> {
    match output {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
            }
            let file = File::create(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
            write_rows(BufWriter::new(file), rows)
        }
        None => write_rows(io::stdout().lock(), rows),
    }
}

fn run_experiment(args: ExperimentArgs, cmd: fn(&ExperimentConfig) -> Result<Vec<Row>, CliError>) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let rows = cmd(&cfg)?;
    emit(&rows, cfg.output.as_ref())
}

fn run_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let opts = CalibrationOptions {
        alpha_p: args.alpha_p,
        alpha_duration: Duration::try_from_secs_f64(args.duration)
            .map_err(|_| CliError::Config(format!("bad duration {}", args.duration)))?,
        rounds: args.rounds,
        repeats: args.repeats,
        allow_cross_socket: args.allow_cross_socket,
        ..Default::default()
    };
    // Fail on an unwritable destination before the long measurement.
    let mut file =
        File::create(&args.output).map_err(|e| CliError::io(format!("creating {}", args.output.display()), e))?;
    let report = match calibrate(&opts) {
        Ok(r) => r,
        Err(e) => {
            drop(file);
            let _ = std::fs::remove_file(&args.output);
            return Err(e.into());
        }
    };
    file.write_all(report.to_kv_string().as_bytes())
        .map_err(|e| CliError::io(format!("writing {}", args.output.display()), e))?;
    echo_constants(&report);
    if args.self_test {
        let second = calibrate(&opts)?;
        let off = report.disagreements(&second, args.tolerance);
        if !off.is_empty() {
            return Err(CliError::Threshold(format!(
                "back-to-back calibrations differ by more than {:.0}% in: {}",
                args.tolerance * 100.0,
                off.join(", ")
            )));
        }
        println!("self-test: second calibration agrees within {:.0}%", args.tolerance * 100.0);
    }
    Ok(())
}

fn echo_constants(r: &CalibrationReport) {
    println!("alpha={} w={} r_invalid={} r_modified={}", r.alpha.mean, r.w.mean, r.r_invalid.mean, r.r_modified.mean);
}

fn run_validate(args: ValidateArgs) -> Result<(), CliError> {
    let open = |p: &PathBuf| File::open(p).map_err(|e| CliError::io(format!("opening {}", p.display()), e));
    let reference = read_rows(open(&args.predicted)?, &args.predicted.display().to_string())?;
    let observed = read_rows(open(&args.measured)?, &args.measured.display().to_string())?;
    let report = compare_rows(&reference, &observed)?;
    print!("{}", format_report(&report));
    io::stdout().flush().map_err(|e| CliError::io("writing report", e))?;
    match args.max_median {
        Some(limit) if report.median > limit => Err(CliError::Threshold(format!(
            "median relative error {:.6} exceeds {limit}",
            report.median
        ))),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
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
    let result = match cli.command {
        Command::Predict(a) => run_experiment(a, cmd_predict),
        Command::Simulate(a) => run_experiment(a, cmd_simulate),
        Command::Bench(a) => run_experiment(a, cmd_bench),
        Command::Run(a) => run_experiment(a, cmd_run),
        Command::Calibrate(a) => run_calibrate(a),
        Command::Validate(a) => run_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
