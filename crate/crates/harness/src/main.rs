use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dmm_core::verify_trace;
use dmm_harness::bench::{bench, parse_shapes, write_csv};
use dmm_harness::format::{meter_line, read_trace, write_trace};
use dmm_harness::instance::{read_matrix, write_rows};
use dmm_harness::{run, verify, Algorithm, Instance, Kind, RunFlags};

#[derive(Parser)]
#[command(name = "dmm", version, about = "Bank-conflict-free algorithms on a simulated DMM")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a deterministic instance file.
    Gen {
        #[arg(long)]
        kind: Kind,
        #[command(flatten)]
        shape: Shape,
        /// Output file (stdout if omitted).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run one algorithm and verify its output.
    Run {
        #[arg(long)]
        alg: Algorithm,
        /// Instance file; otherwise one is generated from --w --m --seed.
        #[arg(long, conflicts_with_all = ["w", "m"])]
        input: Option<PathBuf>,
        #[arg(long)]
        w: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        mode: Mode,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Append-free CSV report (header plus one row).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the final result region as a matrix file.
        #[arg(long)]
        result_out: Option<PathBuf>,
    },
    /// Run an algorithm over shapes and seeds, writing CSV.
    Bench {
        #[arg(long)]
        alg: Algorithm,
        /// Comma-separated shapes, e.g. `16x16,64x64`.
        #[arg(long)]
        shapes: String,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[command(flatten)]
        mode: Mode,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check a result matrix against an instance.
    Verify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        result: PathBuf,
    },
    /// Re-audit a trace dump for bank conflicts.
    TraceCheck { trace: PathBuf },
}

#[derive(Args)]
struct Shape {
    #[arg(long)]
    w: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Mode {
    /// Reject conflicting steps (default).
    #[arg(long, conflicts_with = "permissive")]
    strict: bool,
    /// Serialize conflicting steps and count them.
    #[arg(long)]
    permissive: bool,
    /// Communication passes per permutation phase.
    #[arg(long)]
    alpha: Option<usize>,
}

impl Mode {
    fn flags(&self) -> RunFlags {
        RunFlags { permissive: self.permissive && !self.strict, alpha: self.alpha, ..Default::default() }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_instance(path: &Path) -> Result<Instance> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Instance::read_from(BufReader::new(f))?)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when a verification failed.
fn real_main() -> Result<bool> {
    match Cli::parse().cmd {
        Cmd::Gen { kind, shape, out } => {
            let inst = Instance::generate(kind, shape.w, shape.m, shape.seed)?;
            match out {
                Some(p) => inst.write_to(create(&p)?)?,
                None => inst.write_to(io::stdout().lock())?,
            }
            Ok(true)
        }
        Cmd::Run { alg, input, w, m, seed, mode, trace_out, csv, result_out } => {
            let inst = match (input, w, m) {
                (Some(p), _, _) => load_instance(&p)?,
                (None, Some(w), Some(m)) => Instance::generate(alg.kind(), w, m, seed)?,
                _ => bail!("give either --input or both --w and --m"),
            };
            let flags = RunFlags { trace: trace_out.is_some(), ..mode.flags() };
            let out = run(alg, &inst, &flags)?;
            println!("{}", out.report);
            println!("{}", meter_line(&dmm_core::CostMeter { steps: out.report.steps, conflicts: out.report.conflicts }, inst.w));
            let mut ok = out.report.correct;
            if let Some(why) = &out.mismatch {
                eprintln!("verification failed: {why}");
            }
            if let (Some(p), Some(trace)) = (trace_out, &out.trace) {
                let mut f = create(&p)?;
                write_trace(&mut f, trace.events.as_deref().unwrap_or_default())?;
                f.flush()?;
                let bad = verify_trace(trace)?;
                if !bad.is_empty() {
                    eprintln!("trace audit: {} conflicting (step, bank) pairs", bad.len());
                    ok = false;
                }
            }
            if let Some(p) = csv {
                write_csv(create(&p)?, alg, std::slice::from_ref(&out.report), &[])?;
            }
            if let Some(p) = result_out {
                let mut f = create(&p)?;
                write_rows(&mut f, &out.result)?;
                f.flush()?;
            }
            Ok(ok)
        }
        Cmd::Bench { alg, shapes, seeds, mode, csv } => {
            let shapes = parse_shapes(&shapes)?;
            let (reports, summaries) = bench(alg, &shapes, seeds, &mode.flags())?;
            match csv {
                Some(p) => write_csv(create(&p)?, alg, &reports, &summaries)?,
                None => write_csv(io::stdout().lock(), alg, &reports, &summaries)?,
            }
            Ok(reports.iter().all(|r| r.correct))
        }
        Cmd::Verify { input, result } => {
            let inst = load_instance(&input)?;
            let f = File::open(&result).with_context(|| format!("opening {}", result.display()))?;
            let out = read_matrix(BufReader::new(f), inst.w, inst.m)?;
            match verify::check(&inst, &out) {
                Ok(()) => {
                    println!("ok");
                    Ok(true)
                }
                Err(why) => {
                    println!("mismatch: {why}");
                    Ok(false)
                }
            }
        }
        Cmd::TraceCheck { trace } => {
            let f = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let log = read_trace(BufReader::new(f))?;
            let bad = verify_trace(&log)?;
            for v in &bad {
                println!("step {} bank {} hits {}", v.step, v.bank, v.hits);
            }
            println!("{} events, {} violations", log.events.as_ref().map_or(0, Vec::len), bad.len());
            Ok(bad.is_empty())
        }
    }
}
