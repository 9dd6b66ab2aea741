//! One line per acceptance criterion. Exits non-zero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use bkio::{CompressionSpec, Delivery, EntryProxy, Ownership, Reader, ReaderOptions, UnzipConfig};
use bkio_bench::experiments::{codec_comparison, parallel_unzip, sweep_cpu};
use bkio_bench::fidelity::check_random_file;
use bkio_bench::gen::{generate_dimuon, DEFAULT_SEED, DESK_TOTAL_BYTES};
use bkio_bench::{run_benchmark, BenchOptions, BenchResult, Method};

enum Outcome {
    Pass(String),
    Fail(String),
    NotApplicable(String),
}

use Outcome::*;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn bench(path: &Path, method: Method, reps: usize) -> BenchResult {
    run_benchmark(path, &BenchOptions { repetitions: reps, ..BenchOptions::new(method) }).unwrap()
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn round_trip(dir: &Path) -> Outcome {
    let start = Instant::now();
    let failures: Vec<String> = (0..1000u64)
        .filter_map(|seed| {
            let path = dir.join(format!("rt-{seed}.bkio"));
            let r = check_random_file(&path, seed).err().map(|e| format!("seed {seed}: {e}"));
            let _ = std::fs::remove_file(&path);
            r
        })
        .collect();
    let elapsed = start.elapsed();
    verdict(
        failures.is_empty() && elapsed < Duration::from_secs(120),
        format!("1000 files, {} failures, {:.1}s (limit 120s) {:?}", failures.len(), elapsed.as_secs_f64(), failures.first()),
    )
}

struct SpeedupRun {
    speedup: f64,
    detail: String,
}

fn speedup(path: &Path) -> SpeedupRun {
    let per_entry = bench(path, Method::PerEntry, 1);
    let bulk = bench(path, Method::BulkDecoded, 3);
    let speedup = bulk.events_per_sec / per_entry.events_per_sec;
    SpeedupRun {
        speedup,
        detail: format!(
            "{}: per_entry {:.3e} ev/s, bulk_decoded {:.3e} ev/s, speedup {:.1}x, reductions differ by {:.1e}",
            per_entry.codec,
            per_entry.events_per_sec,
            bulk.events_per_sec,
            speedup,
            rel_diff(per_entry.reduction, bulk.reduction)
        ),
    }
}

fn bulk_speedup(plain: &Path) -> (Outcome, f64) {
    let start = Instant::now();
    generate_dimuon(plain, 5_000_000, CompressionSpec::NONE, false, DEFAULT_SEED).unwrap();
    let run = speedup(plain);
    let elapsed = start.elapsed();
    let r = verdict(
        run.speedup >= 3.0 && elapsed < Duration::from_secs(60),
        format!("5M events, {}; floor 3x; {:.1}s (limit 60s)", run.detail, elapsed.as_secs_f64()),
    );
    (r, run.speedup)
}

fn call_counts(path: &Path) -> Outcome {
    let r = Reader::open(path).unwrap();
    let ids = [0, 1, 2, 3];
    let baskets: u64 = ids.iter().map(|&b| r.baskets(b).unwrap().len() as u64).sum();

    r.reset_counters();
    for b in ids {
        for k in 0..r.baskets(b).unwrap().len() {
            let s = r.read_basket_bulk(b, k, Delivery::DecodedNative, Ownership::View).unwrap();
            std::hint::black_box(s.as_f32().unwrap());
        }
    }
    let bulk = r.counters();

    r.clear_cache();
    r.reset_counters();
    let mut proxy = EntryProxy::new();
    for e in 0..r.total_entries() {
        r.get_entry_into(&ids, e, &mut proxy).unwrap();
    }
    let per_entry = r.counters();

    let ok = bulk.decompress_calls == baskets
        && bulk.decode_passes == baskets
        && bulk.proxy_fills == 0
        && per_entry.proxy_fills == r.total_entries()
        && per_entry.decompress_calls == baskets;
    verdict(
        ok,
        format!(
            "{baskets} baskets: bulk {} decompress / {} decode / {} proxy; per-entry {} proxy fills for {} entries, {} decompress",
            bulk.decompress_calls,
            bulk.decode_passes,
            bulk.proxy_fills,
            per_entry.proxy_fills,
            r.total_entries(),
            per_entry.decompress_calls
        ),
    )
}

fn lz4_vs_deflate() -> Outcome {
    let start = Instant::now();
    let specs = [CompressionSpec::deflate(6).unwrap(), CompressionSpec::lz4()];
    let rows = codec_comparison(DESK_TOTAL_BYTES, DEFAULT_SEED, &specs).unwrap();
    let (deflate, lz4) = (&rows[0], &rows[1]);
    let speed = lz4.decompress_throughput / deflate.decompress_throughput;
    let elapsed = start.elapsed();
    verdict(
        speed >= 1.5 && lz4.compressed_bytes >= deflate.compressed_bytes && elapsed < Duration::from_secs(60),
        format!(
            "40 MB sweep data: lz4-1 {:.0} MB/s vs deflate-6 {:.0} MB/s ({speed:.2}x, floor 1.5x); size {} vs {} bytes; {:.1}s",
            lz4.decompress_throughput / 1e6,
            deflate.decompress_throughput / 1e6,
            lz4.compressed_bytes,
            deflate.compressed_bytes,
            elapsed.as_secs_f64()
        ),
    )
}

fn sweep_trend(dir: &Path) -> Outcome {
    let (rows, _) = sweep_cpu(dir, DESK_TOTAL_BYTES, CompressionSpec::lz4(), DEFAULT_SEED, 5).unwrap();
    // Rows run from 10 to 1e6 floats per event. At a fixed aggregate the
    // non-decompression CPU of the whole sweep point is what falls with
    // event size; per event it necessarily grows with the event.
    let other_falls = rows.windows(2).all(|w| w[1].other_ms < w[0].other_ms);
    let per_event_falls = rows.windows(2).all(|w| w[1].other_ns_per_event < w[0].other_ns_per_event);
    let mean = rows.iter().map(|r| r.unzip_ns_per_byte).sum::<f64>() / rows.len() as f64;
    let spread = rows
        .iter()
        .map(|r| (r.unzip_ns_per_byte / mean - 1.0).abs())
        .fold(0.0, f64::max);
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{}x{}: other {:.1} ms ({:.0} ns/ev), unzip {:.3} ns/B",
                r.events, r.floats_per_event, r.other_ms, r.other_ns_per_event, r.unzip_ns_per_byte
            )
        })
        .collect();
    verdict(
        other_falls && spread <= 0.30,
        format!(
            "non-decompression CPU at fixed 40 MB strictly falling: {other_falls} (per event: {per_event_falls}); unzip ns/B max deviation {:.0}% (limit 30%); [{}]",
            spread * 100.0,
            table.join("; ")
        ),
    )
}

fn stress_iterations(path: &Path) -> Result<(), String> {
    let digest = |r: &Reader| -> Vec<u8> {
        let mut out = Vec::new();
        for b in 0..4 {
            for k in 0..r.baskets(b).unwrap().len() {
                let s = r.read_basket_bulk(b, k, Delivery::RawSerialized, Ownership::View).unwrap();
                out.extend_from_slice(s.raw().unwrap());
            }
        }
        out
    };
    let want = digest(&Reader::open(path).unwrap());
    for i in 0..100 {
        let cfg = UnzipConfig {
            max_task_delay: Some(Duration::from_micros(500)),
            ..UnzipConfig::default().with_workers(2 + i % 3)
        };
        let r = Reader::open_with(path, ReaderOptions::prefetch(cfg)).unwrap();
        if digest(&r) != want {
            return Err(format!("iteration {i} differs"));
        }
    }
    Ok(())
}

fn parallel(dir: &Path) -> Outcome {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let file = dir.join("dimuon-deflate-1m.bkio");
    generate_dimuon(&file, 1_000_000, CompressionSpec::deflate(6).unwrap(), false, DEFAULT_SEED).unwrap();
    let (serial, par) = parallel_unzip(&file, cores.max(4), 3).unwrap();
    let identical = serial.reduction.to_bits() == par.reduction.to_bits();

    let small = dir.join("dimuon-deflate-stress.bkio");
    generate_dimuon(&small, 200_000, CompressionSpec::deflate(6).unwrap(), false, DEFAULT_SEED).unwrap();
    let stress = stress_iterations(&small);

    let wall = par.wall_ms / serial.wall_ms;
    let cpu = par.cpu_ms / serial.cpu_ms;
    let detail = format!(
        "{cores} logical cores; wall {wall:.2}x (limit 0.75x), cpu {cpu:.2}x (limit 1.30x); identical results: {identical}; 100-iteration jitter stress: {}",
        stress.as_ref().map_or_else(|e| e.clone(), |_| "ok".into())
    );
    if !identical || stress.is_err() {
        Fail(detail)
    } else if cores < 4 {
        NotApplicable(format!("needs >= 4 cores; {detail}"))
    } else {
        verdict(wall <= 0.75 && cpu <= 1.30, detail)
    }
}

fn washout(dir: &Path, plain_speedup: f64) -> Outcome {
    let file = dir.join("dimuon-deflate-5m.bkio");
    generate_dimuon(&file, 5_000_000, CompressionSpec::deflate(6).unwrap(), false, DEFAULT_SEED).unwrap();
    let run = speedup(&file);
    verdict(
        run.speedup < plain_speedup,
        format!("uncompressed speedup {plain_speedup:.1}x vs {}", run.detail),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("dimuon-none-5m.bkio");
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    let mut record = |name, outcome: Outcome| {
        let (tag, detail) = match &outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => ("FAIL", d),
            NotApplicable(d) => ("N/A ", d),
        };
        println!("[{tag}] {name}: {detail}");
        results.push((name, outcome));
    };

    record("round-trip-fidelity", round_trip(dir.path()));
    let (outcome, plain_speedup) = bulk_speedup(&plain);
    record("bulk-speedup", outcome);
    record("call-counts", call_counts(&plain));
    record("lz4-vs-deflate", lz4_vs_deflate());
    record("event-size-sweep", sweep_trend(dir.path()));
    record("parallel-unzip", parallel(dir.path()));
    record("compression-washout", washout(dir.path(), plain_speedup));

    let failed = results.iter().filter(|(_, o)| matches!(o, Fail(_))).count();
    println!("acceptance: {} criteria, {failed} failed", results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
