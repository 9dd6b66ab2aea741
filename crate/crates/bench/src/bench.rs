//! Timed reads of a file through one access method.

use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use bkio::{BranchShape, Codec, Delivery, ElementType, EntryProxy, Ownership, Reader, ReaderOptions, UnzipConfig};
use serde::{Deserialize, Serialize};

use crate::cpu::process_cpu_time;
use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PerEntry,
    BulkRaw,
    BulkDecoded,
    RangeCopy,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::PerEntry, Method::BulkRaw, Method::BulkDecoded, Method::RangeCopy];

    pub fn label(self) -> &'static str {
        match self {
            Method::PerEntry => "per_entry",
            Method::BulkRaw => "bulk_raw",
            Method::BulkDecoded => "bulk_decoded",
            Method::RangeCopy => "range_copy",
        }
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| BenchError::Invalid(format!("unknown method {s:?}")))
    }
}

/// The reduction computed over every entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calc {
    /// Sum of |p| over px, py, pz.
    Momentum,
    /// Sum of E over px, py, pz, mass.
    Energy,
    /// Sum of every value of the first branch.
    Sum,
}

impl Calc {
    /// What a method computes unless told otherwise: energy for the copy
    /// path on dimuon files, momentum for the others, a plain sum on any
    /// other schema.
    pub fn default_for(reader: &Reader, method: Method) -> Calc {
        if reader.branch_id("px").is_err() {
            Calc::Sum
        } else if method == Method::RangeCopy {
            Calc::Energy
        } else {
            Calc::Momentum
        }
    }

    fn branch_names(self) -> &'static [&'static str] {
        match self {
            Calc::Momentum => &["px", "py", "pz"],
            Calc::Energy => &["px", "py", "pz", "mass"],
            Calc::Sum => &[],
        }
    }
}

impl FromStr for Calc {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" | "momentum" => Ok(Calc::Momentum),
            "e" | "energy" => Ok(Calc::Energy),
            "sum" => Ok(Calc::Sum),
            _ => Err(BenchError::Invalid(format!("unknown calculation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub method: Method,
    pub calc: Option<Calc>,
    pub prefetch: bool,
    /// Unzip workers when prefetching.
    pub threads: usize,
    pub repetitions: usize,
}

impl BenchOptions {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            calc: None,
            prefetch: false,
            threads: 1,
            repetitions: 1,
        }
    }
}

/// Median repetition of one benchmark. Times are in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub method: String,
    pub codec: String,
    pub events: u64,
    pub wall_ms: f64,
    pub cpu_ms: f64,
    pub unzip_ms: f64,
    pub events_per_sec: f64,
    /// Compressed bytes read from the file, record headers included.
    pub bytes: u64,
    #[serde(skip)]
    pub reduction: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn run_benchmark(path: &Path, opts: &BenchOptions) -> Result<BenchResult> {
    if opts.repetitions == 0 {
        return Err(BenchError::Invalid("repetitions must be at least 1".into()));
    }
    if opts.threads == 0 {
        return Err(BenchError::Invalid("threads must be at least 1".into()));
    }

    let mut runs = Vec::with_capacity(opts.repetitions);
    let mut codec = String::from("none");
    let reader_opts = if opts.prefetch {
        // Unzip ahead only what the reduction reads.
        let probe = Reader::open(path)?;
        let calc = opts.calc.unwrap_or_else(|| Calc::default_for(&probe, opts.method));
        let names = Plan::new(&probe, path, opts.method, calc)?
            .ids
            .iter()
            .map(|&id| probe.branch(id).map(|b| b.name.clone()))
            .collect::<bkio::Result<Vec<_>>>()?;
        ReaderOptions::prefetch(UnzipConfig::default().with_workers(opts.threads)).prefetch_branches(names)
    } else {
        ReaderOptions::default()
    };

    for _ in 0..opts.repetitions {
        let reader = Reader::open_with(path, reader_opts.clone())?;
        if let Some(b) = reader.index().baskets.iter().find(|b| b.spec.codec != Codec::None) {
            codec = b.spec.to_string();
        }
        let calc = opts.calc.unwrap_or_else(|| Calc::default_for(&reader, opts.method));
        let plan = Plan::new(&reader, path, opts.method, calc)?;

        let cpu0 = process_cpu_time();
        let t0 = Instant::now();
        let reduction = plan.run(&reader)?;
        let wall = t0.elapsed();
        let cpu = process_cpu_time().saturating_sub(cpu0);
        reader.shutdown_prefetch();

        let c = reader.counters();
        runs.push(BenchResult {
            method: if opts.prefetch {
                format!("{}+prefetch", opts.method.label())
            } else {
                opts.method.label().to_string()
            },
            codec: codec.clone(),
            events: reader.total_entries(),
            wall_ms: ms(wall),
            cpu_ms: ms(cpu),
            unzip_ms: c.unzip_nanos as f64 / 1e6,
            events_per_sec: reader.total_entries() as f64 / wall.as_secs_f64().max(1e-9),
            bytes: c.compressed_bytes_read,
            reduction,
        });
    }
    runs.sort_by(|a, b| a.wall_ms.total_cmp(&b.wall_ms));
    Ok(runs.swap_remove(runs.len() / 2))
}

/// Branch ids and checks resolved before the clock starts.
struct Plan {
    method: Method,
    calc: Calc,
    ids: Vec<u32>,
}

impl Plan {
    fn new(reader: &Reader, path: &Path, method: Method, calc: Calc) -> Result<Self> {
        let unsupported = |reason: String| BenchError::Unsupported {
            method: method.label(),
            path: path.to_path_buf(),
            reason,
        };
        let ids: Vec<u32> = match calc {
            Calc::Sum => vec![0],
            _ => calc
                .branch_names()
                .iter()
                .map(|n| reader.branch_id(n))
                .collect::<bkio::Result<_>>()?,
        };
        for &id in &ids {
            let b = reader.branch(id)?;
            if b.element != ElementType::F32 {
                return Err(unsupported(format!("branch {} is {}, not f32", b.name, b.element.name())));
            }
            if calc != Calc::Sum && b.shape != BranchShape::Scalar {
                return Err(unsupported(format!("branch {} is not a scalar", b.name)));
            }
            if matches!(method, Method::BulkRaw | Method::BulkDecoded) && b.shape == BranchShape::VarArray {
                return Err(unsupported(format!("branch {} is a var_array", b.name)));
            }
        }
        if matches!(method, Method::BulkRaw | Method::BulkDecoded) {
            let first: Vec<_> = reader.baskets(ids[0])?.iter().map(|m| m.entries()).collect();
            for &id in &ids[1..] {
                let other: Vec<_> = reader.baskets(id)?.iter().map(|m| m.entries()).collect();
                if other != first {
                    return Err(unsupported(format!(
                        "baskets of {} are not aligned with {}",
                        reader.branch(id)?.name,
                        reader.branch(ids[0])?.name
                    )));
                }
            }
        }
        Ok(Self { method, calc, ids })
    }

    fn run(&self, reader: &Reader) -> Result<f64> {
        match self.method {
            Method::PerEntry => self.per_entry(reader),
            Method::BulkRaw => self.bulk_raw(reader),
            Method::BulkDecoded => self.bulk_decoded(reader),
            Method::RangeCopy => self.range_copy(reader),
        }
    }

    fn per_entry(&self, reader: &Reader) -> Result<f64> {
        let mut proxy = EntryProxy::new();
        let mut acc = 0.0;
        for e in 0..reader.total_entries() {
            reader.get_entry_into(&self.ids, e, &mut proxy)?;
            acc += match self.calc {
                Calc::Sum => proxy
                    .column(0)
                    .and_then(|c| c.as_f32())
                    .expect("checked f32")
                    .iter()
                    .map(|&v| f64::from(v))
                    .sum(),
                calc => kinematics(calc, |i| proxy.f32(i).expect("scalar f32 column")),
            };
        }
        Ok(acc)
    }

    fn bulk_decoded(&self, reader: &Reader) -> Result<f64> {
        let mut acc = 0.0;
        for k in 0..reader.baskets(self.ids[0])?.len() {
            let slices = self
                .ids
                .iter()
                .map(|&id| reader.read_basket_bulk(id, k, Delivery::DecodedNative, Ownership::View))
                .collect::<bkio::Result<Vec<_>>>()?;
            let cols = slices.iter().map(|s| s.as_f32()).collect::<bkio::Result<Vec<_>>>()?;
            acc += reduce_columns(self.calc, &cols);
        }
        Ok(acc)
    }

    fn bulk_raw(&self, reader: &Reader) -> Result<f64> {
        let mut acc = 0.0;
        for k in 0..reader.baskets(self.ids[0])?.len() {
            let slices = self
                .ids
                .iter()
                .map(|&id| reader.read_basket_bulk(id, k, Delivery::RawSerialized, Ownership::View))
                .collect::<bkio::Result<Vec<_>>>()?;
            let raws = slices.iter().map(|s| s.raw()).collect::<bkio::Result<Vec<_>>>()?;
            let at = |c: usize, i: usize| {
                let b = &raws[c][i * 4..i * 4 + 4];
                f32::from_be_bytes([b[0], b[1], b[2], b[3]])
            };
            let n = raws[0].len() / 4;
            acc += match self.calc {
                Calc::Sum => (0..n).map(|i| f64::from(at(0, i))).sum::<f64>(),
                calc => (0..n).map(|i| kinematics(calc, |c| at(c, i))).sum::<f64>(),
            };
        }
        Ok(acc)
    }

    fn range_copy(&self, reader: &Reader) -> Result<f64> {
        let mut acc = 0.0;
        for k in 0..reader.clusters().len() {
            let range = reader.clusters().range(k).expect("k < len");
            let cols = reader.read_range_aligned(&self.ids, range, true)?;
            let cols = cols.iter().map(|c| c.as_f32()).collect::<bkio::Result<Vec<_>>>()?;
            acc += reduce_columns(self.calc, &cols);
        }
        Ok(acc)
    }
}

/// |p| or E of one record; `v(i)` is the i-th of px, py, pz, mass.
#[inline]
fn kinematics(calc: Calc, v: impl Fn(usize) -> f32) -> f64 {
    let (x, y, z) = (f64::from(v(0)), f64::from(v(1)), f64::from(v(2)));
    let p2 = x * x + y * y + z * z;
    match calc {
        Calc::Energy => {
            let m = f64::from(v(3));
            (p2 + m * m).sqrt()
        }
        _ => p2.sqrt(),
    }
}

fn reduce_columns(calc: Calc, cols: &[&[f32]]) -> f64 {
    match calc {
        Calc::Sum => cols[0].iter().map(|&v| f64::from(v)).sum(),
        calc => (0..cols[0].len()).map(|i| kinematics(calc, |c| cols[c][i])).sum(),
    }
}
