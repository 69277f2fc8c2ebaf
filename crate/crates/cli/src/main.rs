mod config_file;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fissile_core::cna::Probability;
use fissile_core::verify::VerificationReport;
use fissile_core::{
    run_atomic_workload, run_mutexbench_with, run_verification, BenchConfig, BenchError,
    BenchReport, LockKind, LogMode, TopologyChoice, CSV_HEADER,
};
use thiserror::Error;

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "fissile", version, about = "Lock benchmarks and verification")]
#[command(args_override_self = true)]
struct Cli {
    /// key = value file of flag defaults; flags on the command line win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// MutexBench: one central lock, fixed-length runs, medians reported
    Bench(RunArgs),
    /// Guarded loads of a multi-word record through a hashed lock array
    Atomic(RunArgs),
    /// Exclusion, alpha uniqueness, bounded bypass and FIFO order checks
    Verify(RunArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LogArg {
    Global,
    PerThread,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value = "fissile")]
    lock: LockKind,
    /// Normal threads
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    threads: u32,
    /// Seconds per run
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Shared PRNG steps inside the critical section
    #[arg(long)]
    cs_steps: Option<u32>,
    /// Non-critical section drawn from [0, N) PRNG steps
    #[arg(long)]
    ncs_max: Option<u32>,
    /// FIFO-designated threads, added to --threads
    #[arg(long, default_value_t = 0)]
    fifo_threads: u32,
    #[arg(long)]
    fifo_ncs_max: Option<u32>,
    /// Alpha spins before declaring impatience
    #[arg(long, default_value_t = fissile_core::DEFAULT_GRACE)]
    grace: u32,
    /// CNA flushes the secondary chain with probability 1/N
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u32).range(1..))]
    flush_denominator: u32,
    /// Node count for the synthetic topology (implies --synthetic-topology)
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    nodes: Option<u32>,
    /// Map thread i to node i mod --nodes (default 2) instead of asking the OS
    #[arg(long)]
    synthetic_topology: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Independent runs; must be odd
    #[arg(long, default_value_t = 7)]
    runs: u32,
    #[arg(long, value_enum, default_value_t = LogArg::Global)]
    log_mode: LogArg,
    /// Locks in the hashed array (atomic workload)
    #[arg(long)]
    lock_array: Option<u32>,
    /// Increments per thread in the exclusion check (verify)
    #[arg(long)]
    iterations: Option<u64>,
    /// Acquisitions per thread in the traced phase (verify)
    #[arg(long)]
    trace_iterations: Option<u64>,
    /// CSV report path (bench, atomic) or failure trace path (verify)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Also write every wait sample as CSV
    #[arg(long, value_name = "PATH")]
    wait_log: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    ConfigFile(#[from] config_file::ConfigFileError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Bench(BenchError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("verification failed")]
    VerificationFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigFile(config_file::ConfigFileError::Read { .. }) => EXIT_IO,
            CliError::ConfigFile(_) | CliError::Usage(_) => EXIT_USAGE,
            CliError::Bench(BenchError::Config(_)) => EXIT_USAGE,
            CliError::Bench(_) => EXIT_IO,
            CliError::Io { .. } | CliError::Csv { .. } => EXIT_IO,
            CliError::VerificationFailed => EXIT_VERIFY,
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        CliError::Bench(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.display().to_string(),
        source,
    }
}

impl RunArgs {
    fn config(&self, base: BenchConfig) -> Result<BenchConfig, CliError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(CliError::Usage(format!(
                "--duration must be positive, got {}",
                self.duration
            )));
        }
        let topology = if self.synthetic_topology || self.nodes.is_some() {
            TopologyChoice::Synthetic(self.nodes.unwrap_or(2))
        } else {
            TopologyChoice::Os
        };
        let cfg = BenchConfig {
            lock: self.lock,
            threads: self.threads,
            duration: Duration::from_secs_f64(self.duration),
            cs_steps: self.cs_steps.unwrap_or(base.cs_steps),
            ncs_max: self.ncs_max.unwrap_or(base.ncs_max),
            fifo_threads: self.fifo_threads,
            fifo_ncs_max: self.fifo_ncs_max.unwrap_or(base.fifo_ncs_max),
            grace: self.grace,
            flush: Probability::one_in(self.flush_denominator)
                .map_err(|e| CliError::Usage(e.to_string()))?,
            topology,
            seed: self.seed,
            runs: self.runs,
            log_mode: match self.log_mode {
                LogArg::Global => LogMode::Global,
                LogArg::PerThread => LogMode::PerThread,
            },
            lock_array: self.lock_array.unwrap_or(base.lock_array),
            verify_iterations: self.iterations.unwrap_or(base.verify_iterations),
            trace_iterations: self.trace_iterations.unwrap_or(base.trace_iterations),
        };
        cfg.validate().map_err(|e| CliError::Bench(e.into()))?;
        Ok(cfg)
    }
}

fn write_report(rep: &BenchReport, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
            w.write_record(CSV_HEADER).map_err(csv_err(path))?;
            for row in rep.csv_rows() {
                w.write_record(&row).map_err(csv_err(path))?;
            }
            w.flush().map_err(io_err(path))?;
            print!("{}", rep.summary());
        }
        None => {
            let stdout = Path::new("<stdout>");
            let mut w = csv::Writer::from_writer(io::stdout());
            w.write_record(CSV_HEADER).map_err(csv_err(stdout))?;
            for row in rep.csv_rows() {
                w.write_record(&row).map_err(csv_err(stdout))?;
            }
            w.flush().map_err(io_err(stdout))?;
            eprint!("{}", rep.summary());
        }
    }
    Ok(())
}

fn write_wait_log(rep: &BenchReport, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["run", "thread", "fifo", "wait"])
        .map_err(csv_err(path))?;
    for (i, run) in rep.runs.iter().enumerate() {
        for s in &run.samples {
            w.write_record([
                i.to_string(),
                s.thread.to_string(),
                s.fifo.to_string(),
                s.wait.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_trace(rep: &VerificationReport, path: &Path) -> Result<(), CliError> {
    let mut f = io::BufWriter::new(File::create(path).map_err(io_err(path))?);
    for c in rep.failures() {
        writeln!(f, "# {c}").map_err(io_err(path))?;
        writeln!(f, "stamp,thread,event,value,pre,fifo").map_err(io_err(path))?;
        for e in &c.counterexample {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                e.stamp,
                e.thread,
                e.kind.as_str(),
                e.value,
                e.pre,
                e.fifo
            )
            .map_err(io_err(path))?;
        }
    }
    f.flush().map_err(io_err(path))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bench(a) => {
            let cfg = a.config(BenchConfig::default())?;
            let rep = run_mutexbench_with(&cfg, a.wait_log.is_some())?;
            if let Some(p) = &a.wait_log {
                write_wait_log(&rep, p)?;
            }
            write_report(&rep, a.out.as_deref())
        }
        Command::Atomic(a) => {
            if a.wait_log.is_some() {
                return Err(CliError::Usage(
                    "--wait-log is only supported by bench".to_owned(),
                ));
            }
            let cfg = a.config(BenchConfig::atomic_default())?;
            let rep = run_atomic_workload(&cfg)?;
            write_report(&rep, a.out.as_deref())
        }
        Command::Verify(a) => {
            let cfg = a.config(BenchConfig::default())?;
            let rep = run_verification(&cfg)?;
            println!(
                "verify {} | threads {} (+{} fifo)",
                cfg.lock, cfg.threads, cfg.fifo_threads
            );
            for c in &rep.checks {
                println!("  {c}");
            }
            if rep.passed() {
                Ok(())
            } else {
                let path = a
                    .out
                    .unwrap_or_else(|| PathBuf::from("fissile-verify-trace.csv"));
                write_trace(&rep, &path)?;
                eprintln!("counterexample trace written to {}", path.display());
                Err(CliError::VerificationFailed)
            }
        }
    }
}

/// Inserts the flags from `--config FILE` right after the subcommand so
/// that later, explicit flags override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => match it.next() {
                Some(p) => path = Some(PathBuf::from(p)),
                None => return Err(CliError::Usage("--config needs a file".to_owned())),
            },
            Some(s) if s.starts_with("--config=") => {
                path = Some(PathBuf::from(&s["--config=".len()..]))
            }
            _ => rest.push(a),
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let extra = config_file::expand(&path)?;
    // argv[0], then the subcommand, then file flags, then the rest.
    let sub = rest
        .iter()
        .skip(1)
        .position(|a| matches!(a.to_str(), Some("bench" | "atomic" | "verify")))
        .map(|i| i + 2)
        .unwrap_or(rest.len());
    let tail = rest.split_off(sub);
    rest.extend(extra.into_iter().map(OsString::from));
    rest.extend(tail);
    Ok(rest)
}

fn main() -> ExitCode {
    env_logger::init();
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::VerificationFailed) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
