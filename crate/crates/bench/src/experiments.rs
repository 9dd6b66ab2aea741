//! The four experiments, each returning rows ready for CSV.

use std::path::{Path, PathBuf};

use bkio::codec::{ratio_and_speed, CodecRow};
use bkio::CompressionSpec;
use serde::{Deserialize, Serialize};

use crate::bench::{run_benchmark, BenchOptions, BenchResult, Calc, Method};
use crate::error::Result;
use crate::gen::{generate_dimuon, generate_sweep, sweep_payload, sweep_points, SweepPoint};

/// Codec settings compared against the deflate-6 reference.
pub fn codec_specs() -> Vec<CompressionSpec> {
    let d = |l| CompressionSpec::deflate(l).expect("valid level");
    let h = |l| CompressionSpec::lz4hc(l).expect("valid level");
    vec![d(1), d(6), d(9), CompressionSpec::lz4(), h(4), h(9)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecCsvRow {
    pub codec: String,
    pub uncompressed_bytes: u64,
    pub compressed_bytes: u64,
    pub ratio: f64,
    pub decompress_mb_per_sec: f64,
    pub relative_ratio: f64,
    pub relative_throughput: f64,
}

impl From<&CodecRow> for CodecCsvRow {
    fn from(r: &CodecRow) -> Self {
        Self {
            codec: r.spec.to_string(),
            uncompressed_bytes: r.uncompressed_bytes,
            compressed_bytes: r.compressed_bytes,
            ratio: r.ratio,
            decompress_mb_per_sec: r.decompress_throughput / 1e6,
            relative_ratio: r.relative_ratio,
            relative_throughput: r.relative_throughput,
        }
    }
}

/// Ratio and decompression speed of each codec over the sweep values.
pub fn codec_comparison(total_bytes: u64, seed: u64, specs: &[CompressionSpec]) -> Result<Vec<CodecRow>> {
    Ok(ratio_and_speed(&sweep_payload(total_bytes, seed), specs)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub events: u64,
    pub floats_per_event: u32,
    pub cpu_ms: f64,
    pub unzip_ms: f64,
    pub other_ms: f64,
    pub other_ns_per_event: f64,
    pub unzip_ns_per_byte: f64,
}

impl SweepRow {
    pub fn new(point: SweepPoint, r: &BenchResult) -> Self {
        let other_ms = r.cpu_ms - r.unzip_ms;
        Self {
            events: point.events,
            floats_per_event: point.floats_per_event,
            cpu_ms: r.cpu_ms,
            unzip_ms: r.unzip_ms,
            other_ms,
            other_ns_per_event: other_ms * 1e6 / point.events as f64,
            unzip_ns_per_byte: r.unzip_ms * 1e6 / point.bytes() as f64,
        }
    }
}

/// Writes the sweep files (if missing) and reads each entry by entry.
pub fn sweep_cpu(
    dir: &Path,
    total_bytes: u64,
    spec: CompressionSpec,
    seed: u64,
    repetitions: usize,
) -> Result<(Vec<SweepRow>, Vec<BenchResult>)> {
    let points = sweep_points(total_bytes);
    let files = sweep_files(dir, total_bytes, &points, spec, seed)?;
    let opts = BenchOptions {
        calc: Some(Calc::Sum),
        repetitions,
        ..BenchOptions::new(Method::PerEntry)
    };
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for (p, f) in points.iter().zip(&files) {
        let r = run_benchmark(f, &opts)?;
        rows.push(SweepRow::new(*p, &r));
        results.push(r);
    }
    Ok((rows, results))
}

fn sweep_files(
    dir: &Path,
    total_bytes: u64,
    points: &[SweepPoint],
    spec: CompressionSpec,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let dir = dir.join(format!("sweep-{spec}-{total_bytes}-{seed}"));
    let paths: Vec<PathBuf> = points.iter().map(|p| dir.join(p.file_name())).collect();
    if paths.iter().all(|p| p.exists()) {
        return Ok(paths);
    }
    generate_sweep(&dir, total_bytes, points, spec, seed)
}

/// Every access method on dimuon files written with each codec. Bulk
/// methods read an aligned file; the copy path reads the misaligned one.
pub fn access_methods(
    dir: &Path,
    events: u64,
    specs: &[CompressionSpec],
    seed: u64,
    repetitions: usize,
) -> Result<Vec<BenchResult>> {
    let mut out = Vec::new();
    for &spec in specs {
        let aligned = dir.join(format!("dimuon-{spec}-{events}.bkio"));
        let misaligned = dir.join(format!("dimuon-{spec}-{events}-misaligned.bkio"));
        generate_dimuon(&aligned, events, spec, false, seed)?;
        generate_dimuon(&misaligned, events, spec, true, seed)?;
        for method in Method::ALL {
            let file = if method == Method::RangeCopy { &misaligned } else { &aligned };
            out.push(run_benchmark(file, &BenchOptions { repetitions, ..BenchOptions::new(method) })?);
        }
    }
    Ok(out)
}

/// Serial and prefetching bulk reads of the same file.
pub fn parallel_unzip(path: &Path, threads: usize, repetitions: usize) -> Result<(BenchResult, BenchResult)> {
    let serial = BenchOptions {
        repetitions,
        ..BenchOptions::new(Method::BulkDecoded)
    };
    let parallel = BenchOptions {
        prefetch: true,
        threads,
        ..serial.clone()
    };
    Ok((run_benchmark(path, &serial)?, run_benchmark(path, &parallel)?))
}
