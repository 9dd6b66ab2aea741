//! Write/read round trips of randomized files through every read path.

use std::ops::Range;
use std::path::Path;

use bkio::{
    BranchShape, ColumnSlice, ColumnValues, CompressionSpec, Delivery, ElementType, Ownership, Reader, Writer,
    WriterConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Column {
    values: ColumnValues,
    offsets: Vec<usize>,
}

impl Column {
    fn be(&self, entries: Range<usize>) -> Vec<u8> {
        be(self.values.as_slice().slice(self.offsets[entries.start]..self.offsets[entries.end]))
    }
}

fn be(values: ColumnSlice<'_>) -> Vec<u8> {
    let mut out = Vec::new();
    values.write_be(&mut out);
    out
}

fn random_spec(rng: &mut ChaCha8Rng) -> CompressionSpec {
    match rng.gen_range(0..4) {
        0 => CompressionSpec::NONE,
        1 => CompressionSpec::deflate(rng.gen_range(1..=9)).expect("valid level"),
        2 => CompressionSpec::lz4(),
        _ => CompressionSpec::lz4hc(rng.gen_range(1..=12)).expect("valid level"),
    }
}

fn random_values(rng: &mut ChaCha8Rng, element: ElementType, n: usize) -> ColumnValues {
    // Small alphabets keep the codecs from falling back to stored baskets.
    match element {
        ElementType::F32 => ColumnValues::F32((0..n).map(|_| rng.gen_range(-40i32..40) as f32 * 0.25).collect()),
        ElementType::F64 => ColumnValues::F64((0..n).map(|_| rng.gen_range(-1e6..1e6)).collect()),
        ElementType::I32 => ColumnValues::I32((0..n).map(|_| rng.gen_range(-300..300)).collect()),
        ElementType::I64 => ColumnValues::I64((0..n).map(|_| rng.gen()).collect()),
        ElementType::U8 => ColumnValues::U8((0..n).map(|_| rng.gen_range(0..8)).collect()),
    }
}

/// Writes a file with a schema, codec and contents drawn from `seed`, then
/// checks every value through the per-entry, bulk and range APIs.
pub fn check_random_file(path: &Path, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = WriterConfig::new(random_spec(&mut rng), rng.gen_range(1..500));
    for i in 0..rng.gen_range(1..=5) {
        let element = ElementType::ALL[rng.gen_range(0..ElementType::ALL.len())];
        let shape = match rng.gen_range(0..4) {
            0 | 1 => BranchShape::Scalar,
            2 => BranchShape::FixedArray(rng.gen_range(1..8)),
            _ => BranchShape::VarArray,
        };
        config = config.branch(format!("b{i}"), element, shape, rng.gen_range(16..4096));
    }
    let entries = rng.gen_range(0..2000usize);

    let cols: Vec<Column> = config
        .branches
        .iter()
        .map(|b| {
            let mut offsets = vec![0];
            for _ in 0..entries {
                let n = b.shape.fixed_len().unwrap_or_else(|| rng.gen_range(0..5));
                offsets.push(offsets.last().unwrap() + n);
            }
            let values = random_values(&mut rng, b.element, *offsets.last().unwrap());
            Column { values, offsets }
        })
        .collect();

    let err = |e: bkio::Error| e.to_string();
    let mut w = Writer::create(path, config.clone()).map_err(err)?;
    for e in 0..entries {
        let row: Vec<_> = cols
            .iter()
            .map(|c| c.values.as_slice().slice(c.offsets[e]..c.offsets[e + 1]))
            .collect();
        w.fill(&row).map_err(err)?;
    }
    w.close().map_err(err)?;

    let r = Reader::open(path).map_err(err)?;
    if r.total_entries() != entries as u64 || r.branches() != &config.branches[..] {
        return Err("schema or entry count differs".into());
    }
    let ids: Vec<u32> = (0..cols.len() as u32).collect();

    for e in 0..entries {
        let proxy = r.get_entry(&ids, e as u64).map_err(err)?;
        for (i, c) in cols.iter().enumerate() {
            if be(proxy.column(i).expect("one column per id").as_slice()) != c.be(e..e + 1) {
                return Err(format!("per-entry mismatch at entry {e}, branch {i}"));
            }
        }
    }

    for (i, c) in cols.iter().enumerate() {
        let id = i as u32;
        if config.branches[i].shape == BranchShape::VarArray {
            continue;
        }
        for (k, m) in r.baskets(id).map_err(err)?.to_vec().into_iter().enumerate() {
            let want = c.be(m.first_entry as usize..m.end_entry() as usize);
            let raw = r.read_basket_bulk(id, k, Delivery::RawSerialized, Ownership::View).map_err(err)?;
            let dec = r.read_basket_bulk(id, k, Delivery::DecodedNative, Ownership::Copy).map_err(err)?;
            if raw.raw().map_err(err)? != &want[..] || be(dec.values().map_err(err)?) != want {
                return Err(format!("bulk mismatch in basket {k} of branch {i}"));
            }
        }
    }

    let cut = if entries > 0 { rng.gen_range(0..=entries) } else { 0 };
    for range in [0..entries, 0..cut, cut..entries] {
        for force_copy in [false, true] {
            let got = r
                .read_range_aligned(&ids, range.start as u64..range.end as u64, force_copy)
                .map_err(err)?;
            for (i, c) in cols.iter().enumerate() {
                if be(got[i].values().map_err(err)?) != c.be(range.clone()) {
                    return Err(format!("range {range:?} mismatch in branch {i}"));
                }
            }
        }
    }
    Ok(())
}
