use std::path::PathBuf;

use anyhow::{bail, Context};
use bkio::{Codec, CompressionSpec};
use bkio_bench::experiments::{self, CodecCsvRow};
use bkio_bench::gen::{self, SweepPoint, DEFAULT_SEED, DESK_TOTAL_BYTES, FULL_TOTAL_BYTES};
use bkio_bench::report::{write_meta, write_rows};
use bkio_bench::{emit_csv, run_benchmark, BenchOptions, Calc};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(version, about = "Dataset generator and read benchmarks for bkio files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CodecArgs {
    /// none, deflate, lz4 or lz4hc
    #[arg(long, default_value = "lz4")]
    codec: String,
    /// Codec level; the codec's default when omitted
    #[arg(long)]
    level: Option<u8>,
}

impl CodecArgs {
    fn spec(&self) -> anyhow::Result<CompressionSpec> {
        let codec: Codec = self.codec.parse()?;
        Ok(CompressionSpec::new(codec, self.level.unwrap_or(codec.default_level()))?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the event-size sweep: one file per point, same total bytes
    GenSweep {
        #[command(flatten)]
        codec: CodecArgs,
        #[arg(long)]
        total_bytes: Option<u64>,
        /// Use the 400 MB aggregate
        #[arg(long)]
        full: bool,
        /// Write only this point (needs --floats-per-event)
        #[arg(long, requires = "floats_per_event")]
        events: Option<u64>,
        #[arg(long, requires = "events")]
        floats_per_event: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Output directory
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Write a dimuon ntuple (px, py, pz, mass)
    GenDimuon {
        #[command(flatten)]
        codec: CodecArgs,
        #[arg(long, default_value_t = 1_000_000)]
        events: u64,
        /// Give the mass branch smaller baskets than the momenta
        #[arg(long)]
        misaligned: bool,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "dimuon.bkio")]
        out: PathBuf,
    },
    /// Time one access method on a file
    Bench {
        file: PathBuf,
        /// per-entry, bulk-raw, bulk-decoded or range-copy
        #[arg(long, default_value = "bulk-decoded")]
        method: String,
        /// p, e or sum; by default p, e for range-copy, sum for non-dimuon files
        #[arg(long)]
        calc: Option<String>,
        #[arg(long)]
        prefetch: bool,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// CSV file; printed to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all four experiments and write one CSV per experiment
    Report {
        #[arg(long, default_value_t = 1_000_000)]
        events: u64,
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Unzip workers for the parallel experiment; all cores by default
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Output directory
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::GenSweep {
            codec,
            total_bytes,
            full,
            events,
            floats_per_event,
            seed,
            out,
        } => {
            let total = total_bytes.unwrap_or(if full { FULL_TOTAL_BYTES } else { DESK_TOTAL_BYTES });
            let points = match (events, floats_per_event) {
                (Some(events), Some(floats_per_event)) => vec![SweepPoint { events, floats_per_event }],
                _ => gen::sweep_points(total),
            };
            if points.is_empty() {
                bail!("{total} bytes cannot be split into 10..1e6 floats per event");
            }
            for path in gen::generate_sweep(&out, total, &points, codec.spec()?, seed)? {
                println!("{}", path.display());
            }
        }
        Command::GenDimuon {
            codec,
            events,
            misaligned,
            seed,
            out,
        } => {
            gen::generate_dimuon(&out, events, codec.spec()?, misaligned, seed)?;
            println!("{}", out.display());
        }
        Command::Bench {
            file,
            method,
            calc,
            prefetch,
            threads,
            reps,
            out,
        } => {
            let opts = BenchOptions {
                method: method.parse()?,
                calc: calc.map(|c| c.parse::<Calc>()).transpose()?,
                prefetch,
                threads,
                repetitions: reps,
            };
            let r = run_benchmark(&file, &opts).with_context(|| format!("benchmarking {}", file.display()))?;
            eprintln!("reduction {:.9e}", r.reduction);
            match out {
                Some(path) => emit_csv(&[r], &path)?,
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    w.serialize(&r)?;
                    w.flush()?;
                }
            }
        }
        Command::Report {
            events,
            full,
            reps,
            threads,
            seed,
            out,
        } => report(events, full, reps, threads, seed, &out)?,
    }
    Ok(())
}

fn report(events: u64, full: bool, reps: usize, threads: Option<usize>, seed: u64, out: &std::path::Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let data = out.join("data");
    std::fs::create_dir_all(&data)?;
    let total = if full { FULL_TOTAL_BYTES } else { DESK_TOTAL_BYTES };
    let meta = |extra: serde_json::Value| json!({ "seed": seed, "events": events, "total_bytes": total, "reps": reps, "params": extra });

    let specs = [
        CompressionSpec::NONE,
        CompressionSpec::deflate(6)?,
        CompressionSpec::lz4(),
    ];
    let methods = experiments::access_methods(&data, events, &specs, seed, reps)?;
    let path = out.join("methods.csv");
    emit_csv(&methods, &path)?;
    write_meta(&path, &meta(json!({})))?;
    eprintln!("wrote {}", path.display());

    let codecs = experiments::codec_comparison(total, seed, &experiments::codec_specs())?;
    let rows: Vec<CodecCsvRow> = codecs.iter().map(Into::into).collect();
    let path = out.join("codecs.csv");
    write_rows(&rows, &path)?;
    write_meta(&path, &meta(json!({ "block_bytes": bkio::codec::DEFAULT_BLOCK_BYTES })))?;
    eprintln!("wrote {}", path.display());

    let (sweep, _) = experiments::sweep_cpu(&data, total, CompressionSpec::lz4(), seed, reps)?;
    let path = out.join("sweep.csv");
    write_rows(&sweep, &path)?;
    write_meta(&path, &meta(json!({ "codec": "lz4-1", "method": "per_entry" })))?;
    eprintln!("wrote {}", path.display());

    let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let file = data.join(format!("dimuon-deflate-6-{events}.bkio"));
    let (serial, parallel) = experiments::parallel_unzip(&file, threads, reps)?;
    let path = out.join("parallel.csv");
    emit_csv(&[serial, parallel], &path)?;
    write_meta(&path, &meta(json!({ "threads": threads })))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
