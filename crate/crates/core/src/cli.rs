//! Command-line front end. Every subcommand prints one JSON report on stdout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::bnb::{certify_with_log, CertifyOptions};
use crate::data::{generate_synthetic, read_instance, write_instance, SyntheticParams, Task};
use crate::error::{Error, Result};
use crate::fista::{solve_relaxation, FistaOptions};
use crate::model::ProblemInstance;
use crate::oracle;
use crate::prox::ProxWorkspace;

#[derive(Debug, Parser)]
#[command(name = "sparsecert", version, about = "Certifiably optimal k-sparse GLMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Regression,
    Classification,
}

#[derive(Debug, clap::Args)]
struct Hyper {
    /// Instance file written by `generate` (or hand-written in the same format).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "M", alias = "m")]
    m: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic instance.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long = "k-true")]
        k_true: usize,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 5.0)]
        snr: f64,
        #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
        task: TaskArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the root perspective relaxation.
    Relax {
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Seconds.
        #[arg(long = "time-limit", default_value_t = 1800.0)]
        time_limit: f64,
        #[arg(long = "max-iterations", default_value_t = 100_000)]
        max_iterations: usize,
        /// Disable the function-value restart.
        #[arg(long = "no-restart")]
        no_restart: bool,
        /// Per-iteration trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Branch and bound to a certified gap.
    Certify {
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long = "gap-tol", default_value_t = 1e-6)]
        gap_tol: f64,
        /// Seconds.
        #[arg(long = "time-limit", default_value_t = 1800.0)]
        time_limit: f64,
        #[arg(long = "node-limit")]
        node_limit: Option<usize>,
        #[arg(long = "beam-width", default_value_t = 5)]
        beam_width: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Node log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Time the prox of g* on random inputs.
    BenchProx {
        #[arg(long = "p-list", value_delimiter = ',', default_value = "1000,10000,100000,1000000")]
        p_list: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long = "M", alias = "m", default_value_t = 2.0)]
        m: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 11)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Brute-force reference values for small instances.
    #[command(hide = true)]
    Oracle {
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long, value_enum)]
        what: OracleKind,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OracleKind {
    Mip,
    Relaxation,
}

/// Runs the CLI with the process streams and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with_io<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok((report, target)) => match emit(&report, target, out) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(report: &Value, target: Option<PathBuf>, out: &mut dyn Write) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("reports serialize");
    match target {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => writeln!(out, "{text}")?,
    }
    Ok(())
}

fn seconds(s: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(s).map_err(|_| Error::invalid(format!("time limit must be a non-negative number of seconds, got {s}")))
}

fn load(hyper: &Hyper) -> Result<ProblemInstance> {
    read_instance(&hyper.input)
        .map_err(|e| match e {
            Error::Io(io) => Error::invalid(format!("{}: {io}", hyper.input.display())),
            other => other,
        })?
        .into_instance(hyper.k, hyper.m, hyper.lambda2)
}

fn instance_summary(inst: &ProblemInstance) -> Value {
    json!({
        "n": inst.n(),
        "p": inst.p(),
        "loss": inst.loss.label(),
        "k": inst.k,
        "M": inst.m,
        "lambda2": inst.lambda2,
    })
}

fn json_lines<T: serde::Serialize>(path: &PathBuf, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Err(Error::invalid("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn dispatch(cmd: Command) -> Result<(Value, Option<PathBuf>)> {
    match cmd {
        Command::Generate { n, p, k_true, sigma, snr, task, seed, out } => {
            let task = match task {
                TaskArg::Regression => Task::Regression,
                TaskArg::Classification => Task::Classification,
            };
            let params = SyntheticParams { n, p, k_true, sigma, snr, task, seed };
            let inst = generate_synthetic(&params)?;
            write_instance(&out, &inst)?;
            let support = crate::data::true_support(p, k_true);
            Ok((
                json!({
                    "command": "generate",
                    "params": params,
                    "instance": instance_summary(&inst),
                    "true_support": support,
                    "path": out.display().to_string(),
                }),
                None,
            ))
        }
        Command::Relax { hyper, tol, time_limit, max_iterations, no_restart, trace, threads } => {
            let inst = load(&hyper)?;
            let opts = FistaOptions {
                gap_tolerance: tol,
                time_limit: Some(seconds(time_limit)?),
                max_iterations,
                restart: !no_restart,
                record_trace: trace.is_some(),
                ..FistaOptions::default()
            };
            let start = Instant::now();
            let mut rep = in_pool(threads, || solve_relaxation(&inst, None, None, &opts))??;
            let wall = start.elapsed().as_secs_f64();
            if let Some(path) = &trace {
                json_lines(path, &rep.trace)?;
            }
            rep.trace.clear();
            Ok((
                json!({
                    "command": "relax",
                    "instance": instance_summary(&inst),
                    "tolerance": tol,
                    "restart": !no_restart,
                    "result": rep,
                    "wall_time_seconds": wall,
                }),
                hyper.report,
            ))
        }
        Command::Certify { hyper, gap_tol, time_limit, node_limit, beam_width, threads, log } => {
            let inst = load(&hyper)?;
            let opts = CertifyOptions {
                gap_tolerance: gap_tol,
                time_limit: Some(seconds(time_limit)?),
                node_limit,
                beam_width,
                threads,
                ..CertifyOptions::default()
            };
            let mut writer = match &log {
                Some(path) => Some(BufWriter::new(File::create(path)?)),
                None => None,
            };
            let mut io_error = None;
            let cert = certify_with_log(&inst, &opts, &mut |rec| {
                if let Some(w) = writer.as_mut() {
                    let line = serde_json::to_string(rec).expect("log records serialize");
                    if let Err(e) = writeln!(w, "{line}") {
                        io_error.get_or_insert(e);
                    }
                }
            })?;
            if let Some(mut w) = writer {
                w.flush()?;
            }
            if let Some(e) = io_error {
                return Err(e.into());
            }
            Ok((
                json!({
                    "command": "certify",
                    "instance": instance_summary(&inst),
                    "certificate": cert,
                }),
                hyper.report,
            ))
        }
        Command::BenchProx { p_list, k, m, rho, reps, seed } => {
            let rows = bench_prox(&p_list, k, m, rho, reps, seed)?;
            Ok((json!({ "command": "bench-prox", "k": k, "M": m, "rho": rho, "reps": reps, "rows": rows }), None))
        }
        Command::Oracle { hyper, what } => {
            let inst = load(&hyper)?;
            if inst.p() > 15 {
                return Err(Error::invalid("oracles are limited to p <= 15"));
            }
            let report = match what {
                OracleKind::Mip => {
                    let (beta, objective) = oracle::oracle_mip(&inst);
                    json!({ "command": "oracle", "what": "mip", "beta": beta, "objective": objective })
                }
                OracleKind::Relaxation => {
                    json!({ "command": "oracle", "what": "relaxation", "objective": oracle::oracle_relaxation(&inst) })
                }
            };
            Ok((report, hyper.report))
        }
    }
}

/// Median and standard deviation of `reps` timed prox evaluations per size.
pub fn bench_prox(p_list: &[usize], k: usize, m: f64, rho: f64, reps: usize, seed: u64) -> Result<Vec<Value>> {
    if reps == 0 {
        return Err(Error::invalid("--reps must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = ProxWorkspace::new();
    let mut rows = Vec::new();
    for &p in p_list {
        if k == 0 || k > p {
            return Err(Error::invalid(format!("k = {k} must lie in 1..={p}")));
        }
        let mu: Vec<f64> = (0..p).map(|_| 3.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
        let mut out = vec![0.0; p];
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t = Instant::now();
            ws.prox_gstar_into(&mu, rho, k, m, &mut out)?;
            times.push(t.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        let median = times[times.len() / 2];
        let mean = times.iter().sum::<f64>() / reps as f64;
        let std = (times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / reps as f64).sqrt();
        rows.push(json!({ "p": p, "median_seconds": median, "stddev_seconds": std }));
    }
    Ok(rows)
}
