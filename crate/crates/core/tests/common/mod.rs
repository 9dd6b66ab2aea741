#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bkio::{BranchShape, ColumnSlice, ColumnValues, CompressionSpec, ElementType, Writer, WriterConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Values written for one branch, entry by entry.
#[derive(Debug, Clone)]
pub struct Column {
    pub values: ColumnValues,
    /// Prefix sums of element counts, one per entry plus a leading 0.
    pub offsets: Vec<usize>,
}

impl Column {
    pub fn entry_be(&self, entry: usize) -> Vec<u8> {
        let mut out = Vec::new();
        self.values
            .as_slice()
            .slice(self.offsets[entry]..self.offsets[entry + 1])
            .write_be(&mut out);
        out
    }

    pub fn range_be(&self, range: std::ops::Range<usize>) -> Vec<u8> {
        let mut out = Vec::new();
        self.values
            .as_slice()
            .slice(self.offsets[range.start]..self.offsets[range.end])
            .write_be(&mut out);
        out
    }
}

pub fn be(values: ColumnSlice<'_>) -> Vec<u8> {
    let mut out = Vec::new();
    values.write_be(&mut out);
    out
}

fn random_values(rng: &mut ChaCha8Rng, element: ElementType, n: usize) -> ColumnValues {
    match element {
        ElementType::F32 => ColumnValues::F32((0..n).map(|_| (rng.gen_range(-64i32..64) as f32) / 8.0).collect()),
        ElementType::F64 => ColumnValues::F64((0..n).map(|_| rng.gen::<f64>() * 1e3).collect()),
        ElementType::I32 => ColumnValues::I32((0..n).map(|_| rng.gen_range(-1000..1000)).collect()),
        ElementType::I64 => ColumnValues::I64((0..n).map(|_| rng.gen()).collect()),
        ElementType::U8 => ColumnValues::U8((0..n).map(|_| rng.gen_range(0..4)).collect()),
    }
}

/// Writes `entries` entries of random data for `config` and returns what
/// was written.
pub fn write_random(path: &Path, config: &WriterConfig, entries: usize, seed: u64) -> Vec<Column> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Column> = config
        .branches
        .iter()
        .map(|b| {
            let mut offsets = vec![0usize];
            for _ in 0..entries {
                let n = match b.shape {
                    BranchShape::Scalar => 1,
                    BranchShape::FixedArray(n) => n as usize,
                    BranchShape::VarArray => rng.gen_range(0..6),
                };
                offsets.push(offsets.last().unwrap() + n);
            }
            let values = random_values(&mut rng, b.element, *offsets.last().unwrap());
            Column { values, offsets }
        })
        .collect();

    let mut w = Writer::create(path, config.clone()).unwrap();
    for e in 0..entries {
        let row: Vec<ColumnSlice<'_>> = columns
            .iter()
            .map(|c| c.values.as_slice().slice(c.offsets[e]..c.offsets[e + 1]))
            .collect();
        w.fill(&row).unwrap();
    }
    w.close().unwrap();
    columns
}

pub fn dimuon_config(spec: CompressionSpec, misaligned: bool, cluster_every: u64) -> WriterConfig {
    let mass_target = if misaligned { 2800 } else { 4000 };
    WriterConfig::new(spec, cluster_every)
        .branch("px", ElementType::F32, BranchShape::Scalar, 4000)
        .branch("py", ElementType::F32, BranchShape::Scalar, 4000)
        .branch("pz", ElementType::F32, BranchShape::Scalar, 4000)
        .branch("mass", ElementType::F32, BranchShape::Scalar, mass_target)
}

pub fn temp_path(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}
