use std::cell::RefCell;
use std::fs::File;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use crate::codec;
use crate::error::{Error, Result};
use crate::format::{decode_record_header, RECORD_HEADER_LEN};
use crate::types::{BasketMeta, BranchDescriptor, BranchShape, ColumnSlice, ColumnValues};

/// Positional reads on a shared file handle.
#[derive(Debug)]
pub(crate) struct FileSource {
    file: File,
}

impl FileSource {
    pub(crate) fn new(file: File) -> Self {
        Self { file }
    }

    #[cfg(unix)]
    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
        std::os::unix::fs::FileExt::read_exact_at(&self.file, buf, offset)
    }

    #[cfg(windows)]
    fn read_exact_at(&self, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
        use std::os::windows::fs::FileExt;
        while !buf.is_empty() {
            match self.file.seek_read(buf, offset) {
                Ok(0) => return Err(std::io::ErrorKind::UnexpectedEof.into()),
                Ok(n) => {
                    buf = &mut buf[n..];
                    offset += n as u64;
                }
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// Reads the record described by `meta` and checks its header against it.
    pub(crate) fn read_record(&self, meta: &BasketMeta, buf: &mut Vec<u8>) -> Result<()> {
        buf.resize(RECORD_HEADER_LEN + meta.compressed_size as usize, 0);
        self.read_exact_at(buf, meta.file_offset).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated(format!("basket record at {}", meta.file_offset))
            } else {
                e.into()
            }
        })?;
        let on_disk = decode_record_header(&buf[..RECORD_HEADER_LEN], meta.file_offset)?;
        if on_disk != *meta {
            return Err(Error::Inconsistent(format!(
                "record at {} disagrees with the footer",
                meta.file_offset
            )));
        }
        Ok(())
    }
}

/// Read-path instrumentation.
#[derive(Debug, Default)]
pub struct Counters {
    decompress_calls: AtomicU64,
    decode_passes: AtomicU64,
    proxy_fills: AtomicU64,
    unzip_nanos: AtomicU64,
    compressed_bytes_read: AtomicU64,
    tasks_scheduled: AtomicU64,
}

/// Point-in-time copy of [`Counters`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    /// Basket decompressions, on any thread.
    pub decompress_calls: u64,
    /// Whole-basket byte-order conversions.
    pub decode_passes: u64,
    /// Entry proxies built or refilled by the per-entry API.
    pub proxy_fills: u64,
    /// Time spent inside codec calls, summed over threads.
    pub unzip_nanos: u64,
    /// Record bytes (header and payload) read from the file.
    pub compressed_bytes_read: u64,
    /// Prefetch tasks submitted to the worker pool.
    pub tasks_scheduled: u64,
}

impl Counters {
    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            decompress_calls: self.decompress_calls.load(Ordering::Relaxed),
            decode_passes: self.decode_passes.load(Ordering::Relaxed),
            proxy_fills: self.proxy_fills.load(Ordering::Relaxed),
            unzip_nanos: self.unzip_nanos.load(Ordering::Relaxed),
            compressed_bytes_read: self.compressed_bytes_read.load(Ordering::Relaxed),
            tasks_scheduled: self.tasks_scheduled.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        for c in [
            &self.decompress_calls,
            &self.decode_passes,
            &self.proxy_fills,
            &self.unzip_nanos,
            &self.compressed_bytes_read,
            &self.tasks_scheduled,
        ] {
            c.store(0, Ordering::Relaxed);
        }
    }

    pub(crate) fn add_proxy_fill(&self) {
        self.proxy_fills.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn add_decode_pass(&self) {
        self.decode_passes.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn add_tasks(&self, n: u64) {
        self.tasks_scheduled.fetch_add(n, Ordering::Relaxed);
    }
}

/// Everything a thread needs to turn a basket record into a [`Basket`].
#[derive(Debug)]
pub(crate) struct UnzipContext {
    pub(crate) source: FileSource,
    pub(crate) branches: Vec<BranchDescriptor>,
    pub(crate) counters: Arc<Counters>,
}

impl UnzipContext {
    /// Reads, decompresses and indexes one basket.
    pub(crate) fn unzip(&self, meta: &BasketMeta) -> Result<Basket> {
        thread_local! {
            static RECORD: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
        }
        let mut raw = Vec::new();
        let stats = RECORD.with_borrow_mut(|record| {
            self.source.read_record(meta, record)?;
            self.counters
                .compressed_bytes_read
                .fetch_add(record.len() as u64, Ordering::Relaxed);
            codec::decompress_into(
                &record[RECORD_HEADER_LEN..],
                meta.spec,
                meta.uncompressed_size as usize,
                &mut raw,
            )
        });
        self.counters.decompress_calls.fetch_add(1, Ordering::Relaxed);
        let stats = stats?;
        self.counters
            .unzip_nanos
            .fetch_add(stats.elapsed.as_nanos() as u64, Ordering::Relaxed);

        let branch = &self.branches[meta.branch_id as usize];
        Basket::new(*meta, branch, raw)
    }
}

/// One decompressed basket. `raw` holds the on-disk big-endian payload.
#[derive(Debug)]
pub struct Basket {
    meta: BasketMeta,
    branch: BranchDescriptor,
    raw: Vec<u8>,
    /// Start of the element bytes within `raw`.
    data_start: usize,
    /// Element-count prefix sums, var_array only.
    offsets: Option<Vec<u32>>,
    decoded: OnceLock<ColumnValues>,
}

impl Basket {
    pub(crate) fn new(meta: BasketMeta, branch: &BranchDescriptor, raw: Vec<u8>) -> Result<Self> {
        let width = branch.element.width();
        let corrupt = |what: &str| {
            Error::Inconsistent(format!(
                "basket at entry {} of '{}': {what}",
                meta.first_entry, branch.name
            ))
        };
        let (data_start, offsets) = match branch.shape {
            BranchShape::VarArray => {
                let n = meta.entry_count as usize + 1;
                if raw.len() < n * 4 {
                    return Err(corrupt("offset table cut off"));
                }
                let offsets: Vec<u32> = raw[..n * 4]
                    .chunks_exact(4)
                    .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
                    return Err(corrupt("offsets not monotone from zero"));
                }
                if offsets[n - 1] as usize * width != raw.len() - n * 4 {
                    return Err(corrupt("offsets disagree with payload length"));
                }
                (n * 4, Some(offsets))
            }
            _ => {
                let per_entry = branch.entry_bytes().expect("fixed shape");
                if raw.len() != per_entry * meta.entry_count as usize {
                    return Err(corrupt("payload length disagrees with shape"));
                }
                (0, None)
            }
        };
        Ok(Self {
            meta,
            branch: branch.clone(),
            raw,
            data_start,
            offsets,
            decoded: OnceLock::new(),
        })
    }

    pub fn meta(&self) -> &BasketMeta {
        &self.meta
    }

    /// Uncompressed payload exactly as stored.
    pub fn raw(&self) -> &[u8] {
        &self.raw
    }

    /// Big-endian element bytes, without the var_array offset table.
    pub fn element_bytes(&self) -> &[u8] {
        &self.raw[self.data_start..]
    }

    /// Range of element indices belonging to `local` entries of this basket.
    pub(crate) fn element_range(&self, local: std::ops::Range<usize>) -> std::ops::Range<usize> {
        match &self.offsets {
            Some(o) => o[local.start] as usize..o[local.end] as usize,
            None => {
                let n = self.branch.shape.fixed_len().expect("fixed shape");
                local.start * n..local.end * n
            }
        }
    }

    /// Host-native elements, converted once and then shared.
    pub(crate) fn decoded(&self, counters: &Counters) -> &ColumnValues {
        self.decoded.get_or_init(|| {
            counters.add_decode_pass();
            let mut v = ColumnValues::with_capacity(
                self.branch.element,
                self.element_bytes().len() / self.branch.element.width(),
            );
            v.extend_from_be(self.element_bytes());
            v
        })
    }

    pub(crate) fn decoded_slice(&self) -> Option<ColumnSlice<'_>> {
        self.decoded.get().map(|v| v.as_slice())
    }

    /// Appends the elements of `local` entries to `out`, converting from
    /// big-endian on the way.
    pub(crate) fn decode_entries_into(&self, local: std::ops::Range<usize>, out: &mut ColumnValues) {
        let width = self.branch.element.width();
        let elems = self.element_range(local);
        let bytes = &self.element_bytes()[elems.start * width..elems.end * width];
        out.extend_from_be(bytes);
    }

    /// Element counts of `local` entries, var_array only.
    pub(crate) fn entry_lengths(&self, local: std::ops::Range<usize>) -> Option<impl Iterator<Item = u32> + '_> {
        self.offsets
            .as_ref()
            .map(move |o| o[local.start..=local.end].windows(2).map(|w| w[1] - w[0]))
    }
}
