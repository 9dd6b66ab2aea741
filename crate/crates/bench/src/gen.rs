//! Synthetic datasets: the event-size sweep and the dimuon ntuple.

use std::path::{Path, PathBuf};

use bkio::{BranchShape, ColumnSlice, CompressionSpec, ElementType, Writer, WriterConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{BenchError, Result};

pub const DESK_TOTAL_BYTES: u64 = 40_000_000;
pub const FULL_TOTAL_BYTES: u64 = 400_000_000;
pub const DEFAULT_SEED: u64 = 20_171_114;

pub const SWEEP_BASKET_BYTES: u32 = 256 * 1024;
/// Sweep clusters hold about this many uncompressed bytes.
pub const SWEEP_CLUSTER_BYTES: u64 = 4 << 20;

pub const DIMUON_BASKET_BYTES: u32 = 32_000;
/// Mass basket target relative to the momenta when misaligned.
pub const MISALIGNED_MASS_FACTOR: f64 = 0.7;
pub const DIMUON_CLUSTER_ENTRIES: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub events: u64,
    pub floats_per_event: u32,
}

impl SweepPoint {
    pub fn bytes(&self) -> u64 {
        self.events * u64::from(self.floats_per_event) * 4
    }

    pub fn check(&self, total_bytes: u64) -> Result<()> {
        if self.events == 0 || self.floats_per_event == 0 || self.bytes() != total_bytes {
            return Err(BenchError::Constraint {
                events: self.events,
                floats_per_event: self.floats_per_event,
                total_bytes,
            });
        }
        Ok(())
    }

    pub fn file_name(&self) -> String {
        format!("sweep-{}x{}.bkio", self.events, self.floats_per_event)
    }
}

/// Points from 10 to 1,000,000 floats per event, one per decade, that
/// divide `total_bytes` exactly. Sorted by growing event size.
pub fn sweep_points(total_bytes: u64) -> Vec<SweepPoint> {
    (1..=6)
        .map(|d| 10u32.pow(d))
        .filter(|&f| total_bytes.is_multiple_of(u64::from(f) * 4))
        .map(|f| SweepPoint {
            events: total_bytes / (u64::from(f) * 4),
            floats_per_event: f,
        })
        .collect()
}

/// Gaussian floats on a 1/16 grid: compressible, but far from constant.
pub struct SweepValues {
    rng: ChaCha8Rng,
    normal: Normal<f32>,
}

impl SweepValues {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, 1.0).expect("valid sigma"),
        }
    }

    pub fn fill(&mut self, out: &mut [f32]) {
        for v in out {
            *v = (self.normal.sample(&mut self.rng) * 16.0).round() / 16.0;
        }
    }
}

/// Big-endian bytes of `total_bytes / 4` sweep values.
pub fn sweep_payload(total_bytes: u64, seed: u64) -> Vec<u8> {
    let mut values = vec![0f32; (total_bytes / 4) as usize];
    SweepValues::new(seed).fill(&mut values);
    values.iter().flat_map(|v| v.to_be_bytes()).collect()
}

/// Writes one file per point into `dir`, each a single fixed-array branch
/// `x` of `floats_per_event` f32 values.
pub fn generate_sweep(
    dir: &Path,
    total_bytes: u64,
    points: &[SweepPoint],
    spec: CompressionSpec,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    for p in points {
        p.check(total_bytes)?;
    }
    std::fs::create_dir_all(dir)?;
    points
        .iter()
        .map(|p| {
            let path = dir.join(p.file_name());
            let event_bytes = u64::from(p.floats_per_event) * 4;
            let config = WriterConfig::new(spec, (SWEEP_CLUSTER_BYTES / event_bytes).max(1)).branch(
                "x",
                ElementType::F32,
                BranchShape::FixedArray(p.floats_per_event),
                SWEEP_BASKET_BYTES,
            );
            let mut w = Writer::create(&path, config)?;
            let mut values = SweepValues::new(seed);
            let mut event = vec![0f32; p.floats_per_event as usize];
            for _ in 0..p.events {
                values.fill(&mut event);
                w.fill(&[ColumnSlice::from(&event[..])])?;
            }
            w.close()?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimuonRecord {
    pub px: f32,
    pub py: f32,
    pub pz: f32,
    pub mass: f32,
}

impl DimuonRecord {
    pub fn p2(&self) -> f64 {
        let (x, y, z) = (f64::from(self.px), f64::from(self.py), f64::from(self.pz));
        x * x + y * y + z * z
    }

    pub fn momentum(&self) -> f64 {
        self.p2().sqrt()
    }

    pub fn energy(&self) -> f64 {
        let m = f64::from(self.mass);
        (self.p2() + m * m).sqrt()
    }
}

/// Deterministic dimuon records: momenta in GeV on a 1/64 grid, mass
/// around the Z peak.
pub struct DimuonSource {
    rng: ChaCha8Rng,
    momentum: Normal<f32>,
    mass: Normal<f32>,
}

impl DimuonSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            momentum: Normal::new(0.0, 30.0).expect("valid sigma"),
            mass: Normal::new(91.19, 2.5).expect("valid sigma"),
        }
    }
}

impl Iterator for DimuonSource {
    type Item = DimuonRecord;

    fn next(&mut self) -> Option<DimuonRecord> {
        let mut q = || (self.momentum.sample(&mut self.rng) * 64.0).round() / 64.0;
        let (px, py, pz) = (q(), q(), q());
        let mass = self.mass.sample(&mut self.rng).abs();
        Some(DimuonRecord { px, py, pz, mass })
    }
}

pub fn dimuon_config(spec: CompressionSpec, misaligned_mass: bool) -> WriterConfig {
    let mass_target = if misaligned_mass {
        (f64::from(DIMUON_BASKET_BYTES) * MISALIGNED_MASS_FACTOR) as u32
    } else {
        DIMUON_BASKET_BYTES
    };
    WriterConfig::new(spec, DIMUON_CLUSTER_ENTRIES)
        .branch("px", ElementType::F32, BranchShape::Scalar, DIMUON_BASKET_BYTES)
        .branch("py", ElementType::F32, BranchShape::Scalar, DIMUON_BASKET_BYTES)
        .branch("pz", ElementType::F32, BranchShape::Scalar, DIMUON_BASKET_BYTES)
        .branch("mass", ElementType::F32, BranchShape::Scalar, mass_target)
}

pub fn generate_dimuon(
    path: &Path,
    events: u64,
    spec: CompressionSpec,
    misaligned_mass: bool,
    seed: u64,
) -> Result<()> {
    if events == 0 {
        return Err(BenchError::Invalid("events must be at least 1".into()));
    }
    let mut w = Writer::create(path, dimuon_config(spec, misaligned_mass))?;
    for r in DimuonSource::new(seed).take(events as usize) {
        w.fill(&[(&r.px).into(), (&r.py).into(), (&r.pz).into(), (&r.mass).into()])?;
    }
    w.close()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_points_span_forty_bytes_to_four_megabytes() {
        let pts = sweep_points(DESK_TOTAL_BYTES);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], SweepPoint { events: 1_000_000, floats_per_event: 10 });
        assert_eq!(pts[5], SweepPoint { events: 10, floats_per_event: 1_000_000 });
        assert!(pts.iter().all(|p| p.bytes() == DESK_TOTAL_BYTES));
    }

    #[test]
    fn full_points_match_four_hundred_megabytes() {
        let pts = sweep_points(FULL_TOTAL_BYTES);
        assert!(pts.contains(&SweepPoint { events: 100, floats_per_event: 1_000_000 }));
        assert!(pts.contains(&SweepPoint { events: 10_000_000, floats_per_event: 10 }));
        assert!(pts.iter().all(|p| p.check(FULL_TOTAL_BYTES).is_ok()));
    }

    #[test]
    fn broken_product_is_rejected() {
        let p = SweepPoint { events: 100, floats_per_event: 999_999 };
        assert!(matches!(p.check(FULL_TOTAL_BYTES), Err(BenchError::Constraint { .. })));
    }

    #[test]
    fn dimuon_source_is_deterministic() {
        let a: Vec<_> = DimuonSource::new(5).take(100).collect();
        let b: Vec<_> = DimuonSource::new(5).take(100).collect();
        assert_eq!(a, b);
        assert_ne!(a, DimuonSource::new(6).take(100).collect::<Vec<_>>());
    }
}
