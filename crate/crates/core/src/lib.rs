//! Columnar event storage tuned for analysis reads.
//!
//! A file holds a set of branches (columns). Each branch is cut into
//! baskets, compressed blocks of consecutive entries, and every branch is
//! flushed together at event-cluster boundaries. The reader offers a
//! per-entry API and bulk APIs that hand over a whole basket per call, and
//! can decompress the baskets of upcoming clusters on a worker pool while
//! the caller is still busy with the current one.
//!
//! ```no_run
//! use bkio::{BranchShape, ColumnSlice, CompressionSpec, ElementType, Reader, Writer, WriterConfig};
//!
//! # fn main() -> bkio::Result<()> {
//! let config = WriterConfig::new(CompressionSpec::lz4(), 10_000)
//!     .branch("px", ElementType::F32, BranchShape::Scalar, 32_000);
//! let mut w = Writer::create("events.bkio", config)?;
//! for i in 0..100_000 {
//!     w.fill(&[ColumnSlice::from(&(i as f32))])?;
//! }
//! w.close()?;
//!
//! let r = Reader::open("events.bkio")?;
//! let cols = r.read_range_aligned(&[0], 0..1000, false)?;
//! let sum: f32 = cols[0].as_f32()?.iter().sum();
//! # let _ = sum;
//! # Ok(())
//! # }
//! ```

pub mod codec;
mod error;
pub mod format;
pub mod reader;
pub mod types;
pub mod unzip;
pub mod writer;

pub use codec::{compress, decompress, CodecStats, Compressed};
pub use error::{Error, Result};
pub use format::{decode_file, FileIndex};
pub use reader::{
    decode_elements, AlignedColumn, BulkSlice, CounterSnapshot, Delivery, EntryProxy, Ownership,
    Reader, ReaderOptions,
};
pub use types::{
    BasketKey, BasketMeta, BranchDescriptor, BranchShape, ClusterIndex, Codec, ColumnSlice,
    ColumnValues, CompressionSpec, ElementType, Scalar,
};
pub use unzip::{BasketStatus, UnzipConfig};
pub use writer::{WriteSummary, Writer, WriterConfig};
