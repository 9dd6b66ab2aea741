//! File writer.
//!
//! Every branch owns one in-memory buffer. A branch flushes its buffer into
//! a basket as soon as the buffer reaches the branch's `basket_target_bytes`,
//! independently of the other branches. Every `cluster_every` entries all
//! branches are flushed together, closing an event cluster.
//!
//! A `Writer` is single-threaded.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::codec;
use crate::error::{Error, Result};
use crate::format::{self, FORMAT_VERSION, HEADER_LEN};
use crate::types::{
    validate_branches, BasketMeta, BranchDescriptor, BranchShape, ClusterIndex, ColumnSlice,
    CompressionSpec, ElementType,
};

#[derive(Debug, Clone)]
pub struct WriterConfig {
    pub branches: Vec<BranchDescriptor>,
    /// Applies to every basket of the file.
    pub spec: CompressionSpec,
    /// Entries per event cluster.
    pub cluster_every: u64,
}

impl WriterConfig {
    pub fn new(spec: CompressionSpec, cluster_every: u64) -> Self {
        Self {
            branches: Vec::new(),
            spec,
            cluster_every,
        }
    }

    /// Adds a branch with the next free id.
    pub fn branch(
        mut self,
        name: impl Into<String>,
        element: ElementType,
        shape: BranchShape,
        basket_target_bytes: u32,
    ) -> Self {
        let id = self.branches.len() as u32;
        self.branches.push(BranchDescriptor::new(
            id,
            name,
            element,
            shape,
            basket_target_bytes,
        ));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cluster_every == 0 {
            return Err(Error::InvalidConfig("cluster_every must be at least 1".into()));
        }
        self.spec
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        validate_branches(&self.branches).map_err(Error::InvalidConfig)
    }
}

/// Totals reported by [`Writer::close`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteSummary {
    pub total_entries: u64,
    pub baskets: usize,
    pub bytes_written: u64,
    /// Sum of basket payload sizes before compression.
    pub uncompressed_bytes: u64,
    /// Sum of basket payload sizes as stored.
    pub compressed_bytes: u64,
}

#[derive(Debug)]
struct BranchBuffer {
    first_entry: u64,
    entries: u32,
    data: Vec<u8>,
    /// Element-count prefix sums, var_array branches only.
    offsets: Vec<u32>,
}

impl BranchBuffer {
    fn new(first_entry: u64, var: bool) -> Self {
        Self {
            first_entry,
            entries: 0,
            data: Vec::new(),
            offsets: if var { vec![0] } else { Vec::new() },
        }
    }

    fn payload_len(&self) -> usize {
        self.data.len() + self.offsets.len() * 4
    }
}

pub struct Writer<W: Write = BufWriter<File>> {
    config: WriterConfig,
    sink: W,
    offset: u64,
    buffers: Vec<BranchBuffer>,
    next_entry: u64,
    baskets: Vec<BasketMeta>,
    boundaries: Vec<u64>,
    scratch: Vec<u8>,
    uncompressed_bytes: u64,
    compressed_bytes: u64,
    closed: bool,
}

impl Writer<BufWriter<File>> {
    /// Creates `path` and writes the file header.
    pub fn create(path: impl AsRef<Path>, config: WriterConfig) -> Result<Self> {
        config.validate()?;
        let file = File::create(path)?;
        Writer::new(BufWriter::with_capacity(1 << 20, file), config)
    }
}

impl<W: Write> Writer<W> {
    pub fn new(mut sink: W, config: WriterConfig) -> Result<Self> {
        config.validate()?;
        sink.write_all(&format::encode_file_header(FORMAT_VERSION)?)?;
        let buffers = config
            .branches
            .iter()
            .map(|b| BranchBuffer::new(0, b.shape == BranchShape::VarArray))
            .collect();
        Ok(Self {
            config,
            sink,
            offset: HEADER_LEN as u64,
            buffers,
            next_entry: 0,
            baskets: Vec::new(),
            boundaries: Vec::new(),
            scratch: Vec::new(),
            uncompressed_bytes: 0,
            compressed_bytes: 0,
            closed: false,
        })
    }

    pub fn config(&self) -> &WriterConfig {
        &self.config
    }

    /// Entries filled so far.
    pub fn entries(&self) -> u64 {
        self.next_entry
    }

    /// Baskets flushed so far, in file order.
    pub fn baskets(&self) -> &[BasketMeta] {
        &self.baskets
    }

    pub fn cluster_boundaries(&self) -> &[u64] {
        &self.boundaries
    }

    /// Entries currently buffered for `branch_id`.
    pub fn buffered_entries(&self, branch_id: u32) -> Option<u32> {
        self.buffers.get(branch_id as usize).map(|b| b.entries)
    }

    /// Appends one entry: exactly one value per branch, in branch-id order.
    /// Scalars are passed as one-element slices.
    pub fn fill(&mut self, values: &[ColumnSlice<'_>]) -> Result<()> {
        if self.closed {
            return Err(Error::WriterClosed);
        }
        if values.len() != self.config.branches.len() {
            return Err(Error::ValueMismatch {
                branch: "*".into(),
                message: format!(
                    "expected {} values, got {}",
                    self.config.branches.len(),
                    values.len()
                ),
            });
        }
        for (branch, value) in self.config.branches.iter().zip(values) {
            check_value(branch, value)?;
        }

        for (i, value) in values.iter().enumerate() {
            let branch = &self.config.branches[i];
            let target = branch.basket_target_bytes as usize;
            let var = branch.shape == BranchShape::VarArray;
            let entry_bytes = value.len() * branch.element.width() + if var { 4 } else { 0 };

            let buf = &self.buffers[i];
            if buf.entries > 0 && buf.payload_len() + entry_bytes > target {
                self.flush_branch(i)?;
            }
            let buf = &mut self.buffers[i];
            value.write_be(&mut buf.data);
            if var {
                let elements = buf.offsets.last().copied().unwrap_or(0) as usize + value.len();
                let elements = u32::try_from(elements).map_err(|_| Error::ValueMismatch {
                    branch: self.config.branches[i].name.clone(),
                    message: "basket element count exceeds u32".into(),
                })?;
                buf.offsets.push(elements);
            }
            buf.entries += 1;
            if buf.payload_len() >= target {
                self.flush_branch(i)?;
            }
        }

        self.next_entry += 1;
        if self.next_entry.is_multiple_of(self.config.cluster_every) {
            self.flush_cluster()?;
        }
        Ok(())
    }

    /// Flushes every non-empty branch buffer and closes the current cluster.
    /// A no-op when no entry was filled since the last boundary.
    pub fn flush_cluster(&mut self) -> Result<()> {
        if self.closed {
            return Err(Error::WriterClosed);
        }
        for i in 0..self.buffers.len() {
            if self.buffers[i].entries > 0 {
                self.flush_branch(i)?;
            }
        }
        let last = self.boundaries.last().copied().unwrap_or(0);
        if self.next_entry > last {
            self.boundaries.push(self.next_entry);
        }
        Ok(())
    }

    fn flush_branch(&mut self, i: usize) -> Result<()> {
        let var = self.config.branches[i].shape == BranchShape::VarArray;
        let next = BranchBuffer::new(
            self.buffers[i].first_entry + u64::from(self.buffers[i].entries),
            var,
        );
        let buf = std::mem::replace(&mut self.buffers[i], next);

        let payload: &[u8] = if var {
            self.scratch.clear();
            self.scratch.reserve(buf.payload_len());
            for o in &buf.offsets {
                self.scratch.extend_from_slice(&o.to_be_bytes());
            }
            self.scratch.extend_from_slice(&buf.data);
            &self.scratch
        } else {
            &buf.data
        };
        let uncompressed_size = u32::try_from(payload.len()).map_err(|_| Error::ValueMismatch {
            branch: self.config.branches[i].name.clone(),
            message: format!("basket of {} bytes exceeds the 4 GiB limit", payload.len()),
        })?;

        let (compressed, _) = codec::compress(payload, self.config.spec)?;
        let meta = BasketMeta {
            branch_id: i as u32,
            first_entry: buf.first_entry,
            entry_count: buf.entries,
            file_offset: self.offset,
            compressed_size: compressed.bytes.len() as u32,
            uncompressed_size,
            spec: compressed.spec,
        };
        let mut header = Vec::with_capacity(format::RECORD_HEADER_LEN);
        format::write_record_header(&meta, &mut header);
        self.sink.write_all(&header)?;
        self.sink.write_all(&compressed.bytes)?;
        self.offset += (header.len() + compressed.bytes.len()) as u64;
        self.uncompressed_bytes += u64::from(uncompressed_size);
        self.compressed_bytes += compressed.bytes.len() as u64;
        self.baskets.push(meta);
        Ok(())
    }

    /// Flushes remaining entries and writes the footer. Calling it again
    /// returns [`Error::WriterClosed`].
    pub fn close(&mut self) -> Result<WriteSummary> {
        if self.closed {
            return Err(Error::WriterClosed);
        }
        self.flush_cluster()?;
        let footer = format::encode_footer(
            &self.config.branches,
            &self.baskets,
            &ClusterIndex::new(self.boundaries.clone()),
            self.next_entry,
            self.offset,
        )?;
        self.sink.write_all(&footer)?;
        self.sink.flush()?;
        self.offset += footer.len() as u64;
        self.closed = true;
        Ok(WriteSummary {
            total_entries: self.next_entry,
            baskets: self.baskets.len(),
            bytes_written: self.offset,
            uncompressed_bytes: self.uncompressed_bytes,
            compressed_bytes: self.compressed_bytes,
        })
    }

    /// Returns the underlying sink.
    pub fn into_inner(self) -> W {
        self.sink
    }
}

fn check_value(branch: &BranchDescriptor, value: &ColumnSlice<'_>) -> Result<()> {
    if value.element_type() != branch.element {
        return Err(Error::ValueMismatch {
            branch: branch.name.clone(),
            message: format!(
                "expected {} elements, got {}",
                branch.element,
                value.element_type()
            ),
        });
    }
    if let Some(n) = branch.shape.fixed_len() {
        if value.len() != n {
            return Err(Error::ValueMismatch {
                branch: branch.name.clone(),
                message: format!("expected {n} elements per entry, got {}", value.len()),
            });
        }
    }
    Ok(())
}
