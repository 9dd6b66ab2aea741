//! The "BKIO" v1 file layout.
//!
//! ```text
//! header   "BKIO" | version u32 | reserved u32                      12 bytes
//! records  branch_id u32 | first_entry u64 | entry_count u32 |
//!          codec u8 | level u8 | uncompressed_size u32 |
//!          compressed_size u32 | payload                            26 + n bytes
//! footer   branch table | basket table | cluster boundaries | total_entries
//! trailer  footer_offset u64 | "BKIO"                               12 bytes
//! ```
//!
//! Every integer is big-endian. The footer is the only source of basket
//! locations; the per-record header repeats the metadata so that a reader
//! can detect a footer that does not match the body.

use std::collections::HashSet;
use std::io::{Read, Seek, SeekFrom};

use crate::error::{Error, Result};
use crate::types::{
    validate_branches, BasketMeta, BranchDescriptor, BranchShape, ClusterIndex, Codec,
    CompressionSpec, ElementType,
};

pub const MAGIC: [u8; 4] = *b"BKIO";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 12;
pub const TRAILER_LEN: usize = 12;
pub const RECORD_HEADER_LEN: usize = 26;

const SHAPE_SCALAR: u8 = 0;
const SHAPE_FIXED: u8 = 1;
const SHAPE_VAR: u8 = 2;

/// Decoded footer tables of a file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileIndex {
    pub branches: Vec<BranchDescriptor>,
    /// Baskets in file order.
    pub baskets: Vec<BasketMeta>,
    pub clusters: ClusterIndex,
    pub total_entries: u64,
}

pub fn encode_file_header(version: u32) -> Result<[u8; HEADER_LEN]> {
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut out = [0u8; HEADER_LEN];
    out[..4].copy_from_slice(&MAGIC);
    out[4..8].copy_from_slice(&version.to_be_bytes());
    Ok(out)
}

/// Returns the format version recorded in a file header.
pub fn decode_file_header(bytes: &[u8]) -> Result<u32> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated("file shorter than header".into()));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    Ok(version)
}

pub fn encode_basket_record(meta: &BasketMeta, payload: &[u8]) -> Result<Vec<u8>> {
    if payload.len() != meta.compressed_size as usize {
        return Err(Error::SizeMismatch {
            expected: meta.compressed_size as usize,
            actual: payload.len(),
        });
    }
    let mut out = Vec::with_capacity(RECORD_HEADER_LEN + payload.len());
    write_record_header(meta, &mut out);
    out.extend_from_slice(payload);
    Ok(out)
}

pub(crate) fn write_record_header(meta: &BasketMeta, out: &mut Vec<u8>) {
    out.extend_from_slice(&meta.branch_id.to_be_bytes());
    out.extend_from_slice(&meta.first_entry.to_be_bytes());
    out.extend_from_slice(&meta.entry_count.to_be_bytes());
    out.push(meta.spec.codec.code());
    out.push(meta.spec.level);
    out.extend_from_slice(&meta.uncompressed_size.to_be_bytes());
    out.extend_from_slice(&meta.compressed_size.to_be_bytes());
}

/// Parses one record located at `file_offset`. Returns the metadata and the
/// compressed payload.
pub fn decode_basket_record(bytes: &[u8], file_offset: u64) -> Result<(BasketMeta, &[u8])> {
    let meta = decode_record_header(bytes, file_offset)?;
    let payload = bytes
        .get(RECORD_HEADER_LEN..RECORD_HEADER_LEN + meta.compressed_size as usize)
        .ok_or_else(|| Error::Truncated("record payload".into()))?;
    Ok((meta, payload))
}

pub(crate) fn decode_record_header(bytes: &[u8], file_offset: u64) -> Result<BasketMeta> {
    let mut cur = Cursor::new(bytes);
    let truncated = |_| Error::Truncated("record header".into());
    let branch_id = cur.u32().map_err(truncated)?;
    let first_entry = cur.u64().map_err(truncated)?;
    let entry_count = cur.u32().map_err(truncated)?;
    let codec = cur.u8().map_err(truncated)?;
    let level = cur.u8().map_err(truncated)?;
    let uncompressed_size = cur.u32().map_err(truncated)?;
    let compressed_size = cur.u32().map_err(truncated)?;
    let codec = Codec::from_code(codec)
        .ok_or_else(|| Error::Inconsistent(format!("unknown codec code {codec}")))?;
    let spec = CompressionSpec::new(codec, level)
        .map_err(|e| Error::Inconsistent(format!("record at {file_offset}: {e}")))?;
    Ok(BasketMeta {
        branch_id,
        first_entry,
        entry_count,
        file_offset,
        compressed_size,
        uncompressed_size,
        spec,
    })
}

/// Encodes the footer tables followed by the trailer pointing back at
/// `footer_offset`.
pub fn encode_footer(
    branches: &[BranchDescriptor],
    baskets: &[BasketMeta],
    clusters: &ClusterIndex,
    total_entries: u64,
    footer_offset: u64,
) -> Result<Vec<u8>> {
    validate_index(branches, baskets, clusters, total_entries, None)?;

    let mut out = Vec::with_capacity(64 + branches.len() * 32 + baskets.len() * 34);
    out.extend_from_slice(&(branches.len() as u32).to_be_bytes());
    for b in branches {
        let name = b.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Inconsistent(format!("branch name too long: {}", name.len())))?;
        out.extend_from_slice(&b.branch_id.to_be_bytes());
        out.extend_from_slice(&name_len.to_be_bytes());
        out.extend_from_slice(name);
        out.push(b.element.code());
        let (shape, len) = match b.shape {
            BranchShape::Scalar => (SHAPE_SCALAR, 0),
            BranchShape::FixedArray(n) => (SHAPE_FIXED, n),
            BranchShape::VarArray => (SHAPE_VAR, 0),
        };
        out.push(shape);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&b.basket_target_bytes.to_be_bytes());
    }

    out.extend_from_slice(&(baskets.len() as u64).to_be_bytes());
    for m in baskets {
        out.extend_from_slice(&m.branch_id.to_be_bytes());
        out.extend_from_slice(&m.first_entry.to_be_bytes());
        out.extend_from_slice(&m.entry_count.to_be_bytes());
        out.extend_from_slice(&m.file_offset.to_be_bytes());
        out.push(m.spec.codec.code());
        out.push(m.spec.level);
        out.extend_from_slice(&m.uncompressed_size.to_be_bytes());
        out.extend_from_slice(&m.compressed_size.to_be_bytes());
    }

    out.extend_from_slice(&(clusters.boundaries.len() as u32).to_be_bytes());
    for b in &clusters.boundaries {
        out.extend_from_slice(&b.to_be_bytes());
    }
    out.extend_from_slice(&total_entries.to_be_bytes());

    out.extend_from_slice(&footer_offset.to_be_bytes());
    out.extend_from_slice(&MAGIC);
    Ok(out)
}

fn decode_footer(bytes: &[u8]) -> Result<FileIndex> {
    let overrun = |_| Error::Inconsistent("footer ends early".into());
    let mut cur = Cursor::new(bytes);

    let branch_count = cur.u32().map_err(overrun)?;
    let mut branches = Vec::with_capacity(branch_count.min(1 << 16) as usize);
    for _ in 0..branch_count {
        let branch_id = cur.u32().map_err(overrun)?;
        let name_len = cur.u16().map_err(overrun)?;
        let name = cur.take(name_len as usize).map_err(overrun)?;
        let name = std::str::from_utf8(name)
            .map_err(|_| Error::Inconsistent(format!("branch {branch_id} name is not UTF-8")))?
            .to_owned();
        let element = cur.u8().map_err(overrun)?;
        let element = ElementType::from_code(element)
            .ok_or_else(|| Error::Inconsistent(format!("unknown element code {element}")))?;
        let shape = cur.u8().map_err(overrun)?;
        let len = cur.u32().map_err(overrun)?;
        let shape = match shape {
            SHAPE_SCALAR => BranchShape::Scalar,
            SHAPE_FIXED => BranchShape::FixedArray(len),
            SHAPE_VAR => BranchShape::VarArray,
            other => return Err(Error::Inconsistent(format!("unknown shape code {other}"))),
        };
        let basket_target_bytes = cur.u32().map_err(overrun)?;
        branches.push(BranchDescriptor {
            branch_id,
            name,
            element,
            shape,
            basket_target_bytes,
        });
    }

    let basket_count = cur.u64().map_err(overrun)?;
    if basket_count > (bytes.len() / 34) as u64 {
        return Err(Error::Inconsistent(format!(
            "basket count {basket_count} exceeds footer size"
        )));
    }
    let mut baskets = Vec::with_capacity(basket_count as usize);
    for _ in 0..basket_count {
        let branch_id = cur.u32().map_err(overrun)?;
        let first_entry = cur.u64().map_err(overrun)?;
        let entry_count = cur.u32().map_err(overrun)?;
        let file_offset = cur.u64().map_err(overrun)?;
        let codec = cur.u8().map_err(overrun)?;
        let level = cur.u8().map_err(overrun)?;
        let uncompressed_size = cur.u32().map_err(overrun)?;
        let compressed_size = cur.u32().map_err(overrun)?;
        let codec = Codec::from_code(codec)
            .ok_or_else(|| Error::Inconsistent(format!("unknown codec code {codec}")))?;
        let spec = CompressionSpec::new(codec, level)
            .map_err(|e| Error::Inconsistent(e.to_string()))?;
        baskets.push(BasketMeta {
            branch_id,
            first_entry,
            entry_count,
            file_offset,
            compressed_size,
            uncompressed_size,
            spec,
        });
    }

    let cluster_count = cur.u32().map_err(overrun)?;
    if cluster_count as usize > bytes.len() / 8 {
        return Err(Error::Inconsistent(format!(
            "cluster count {cluster_count} exceeds footer size"
        )));
    }
    let mut boundaries = Vec::with_capacity(cluster_count as usize);
    for _ in 0..cluster_count {
        boundaries.push(cur.u64().map_err(overrun)?);
    }
    let total_entries = cur.u64().map_err(overrun)?;
    if cur.remaining() != 0 {
        return Err(Error::Inconsistent(format!(
            "{} unexpected bytes after footer tables",
            cur.remaining()
        )));
    }

    Ok(FileIndex {
        branches,
        baskets,
        clusters: ClusterIndex::new(boundaries),
        total_entries,
    })
}

/// Checks every cross-table invariant of a file index. `body_end`, when
/// known, bounds the byte extent of basket records.
pub fn validate_index(
    branches: &[BranchDescriptor],
    baskets: &[BasketMeta],
    clusters: &ClusterIndex,
    total_entries: u64,
    body_end: Option<u64>,
) -> Result<()> {
    validate_branches(branches).map_err(Error::Inconsistent)?;

    let mut per_branch: Vec<Vec<&BasketMeta>> = vec![Vec::new(); branches.len()];
    for m in baskets {
        let branch = branches.get(m.branch_id as usize).ok_or_else(|| {
            Error::Inconsistent(format!("basket references undefined branch {}", m.branch_id))
        })?;
        if m.entry_count == 0 {
            return Err(Error::Inconsistent(format!(
                "empty basket at entry {} of branch '{}'",
                m.first_entry, branch.name
            )));
        }
        m.spec
            .validate()
            .map_err(|e| Error::Inconsistent(e.to_string()))?;
        let expected = branch.entry_bytes().map(|w| m.entry_count as u64 * w as u64);
        match expected {
            Some(e) if e != u64::from(m.uncompressed_size) => {
                return Err(Error::Inconsistent(format!(
                    "basket at entry {} of '{}' holds {} bytes, shape requires {e}",
                    m.first_entry, branch.name, m.uncompressed_size
                )));
            }
            None if u64::from(m.uncompressed_size) < (u64::from(m.entry_count) + 1) * 4 => {
                return Err(Error::Inconsistent(format!(
                    "basket at entry {} of '{}' too small for its offsets",
                    m.first_entry, branch.name
                )));
            }
            _ => {}
        }
        if let Some(end) = body_end {
            let record_end = m.file_offset + (RECORD_HEADER_LEN as u64) + u64::from(m.compressed_size);
            if m.file_offset < HEADER_LEN as u64 || record_end > end {
                return Err(Error::Inconsistent(format!(
                    "basket record at offset {} extends past the body",
                    m.file_offset
                )));
            }
        }
        per_branch[m.branch_id as usize].push(m);
    }

    for (branch, list) in branches.iter().zip(per_branch.iter_mut()) {
        list.sort_by_key(|m| m.first_entry);
        let mut next = 0u64;
        for m in list.iter() {
            if m.first_entry != next {
                return Err(Error::Inconsistent(format!(
                    "branch '{}' baskets are not contiguous at entry {next}",
                    branch.name
                )));
            }
            next = m.end_entry();
        }
        if next != total_entries {
            return Err(Error::Inconsistent(format!(
                "branch '{}' covers {next} entries, file has {total_entries}",
                branch.name
            )));
        }
    }

    let mut prev = 0u64;
    for &b in &clusters.boundaries {
        if b <= prev {
            return Err(Error::Inconsistent(format!(
                "cluster boundaries not strictly increasing at {b}"
            )));
        }
        prev = b;
    }
    if prev != total_entries {
        return Err(Error::Inconsistent(format!(
            "last cluster boundary {prev} differs from total entries {total_entries}"
        )));
    }

    let starts: HashSet<(u32, u64)> = baskets
        .iter()
        .map(|m| (m.branch_id, m.first_entry))
        .collect();
    for &b in &clusters.boundaries {
        if b == total_entries {
            continue;
        }
        for branch in branches {
            if !starts.contains(&(branch.branch_id, b)) {
                return Err(Error::Inconsistent(format!(
                    "branch '{}' has no basket starting at cluster boundary {b}",
                    branch.name
                )));
            }
        }
    }
    Ok(())
}

/// Reads and validates the header and footer of a file.
pub fn decode_file<R: Read + Seek>(src: &mut R) -> Result<FileIndex> {
    let len = src.seek(SeekFrom::End(0))?;
    let mut head = [0u8; HEADER_LEN];
    if len < HEADER_LEN as u64 {
        return Err(Error::Truncated(format!("file is {len} bytes")));
    }
    src.seek(SeekFrom::Start(0))?;
    src.read_exact(&mut head)?;
    decode_file_header(&head)?;

    if len < (HEADER_LEN + TRAILER_LEN) as u64 {
        return Err(Error::Truncated(format!("file is {len} bytes, no trailer")));
    }
    let mut tail = [0u8; TRAILER_LEN];
    src.seek(SeekFrom::Start(len - TRAILER_LEN as u64))?;
    src.read_exact(&mut tail)?;
    let footer_offset = u64::from_be_bytes(tail[..8].try_into().expect("8 bytes"));
    let footer_end = len - TRAILER_LEN as u64;
    let offset_plausible = (HEADER_LEN as u64..=footer_end).contains(&footer_offset);

    if tail[8..] != MAGIC {
        if offset_plausible {
            return Err(Error::BadTrailer("trailing magic mismatch".into()));
        }
        return Err(diagnose_missing_trailer(src, len));
    }
    if !offset_plausible {
        return Err(Error::BadTrailer(format!(
            "footer offset {footer_offset} outside file of {len} bytes"
        )));
    }

    let mut footer = vec![0u8; (footer_end - footer_offset) as usize];
    src.seek(SeekFrom::Start(footer_offset))?;
    src.read_exact(&mut footer)?;
    let index = decode_footer(&footer)?;
    validate_index(
        &index.branches,
        &index.baskets,
        &index.clusters,
        index.total_entries,
        Some(footer_offset),
    )?;
    Ok(index)
}

/// Distinguishes a file cut short from one whose trailer was overwritten by
/// walking the record chain from the header.
fn diagnose_missing_trailer<R: Read + Seek>(src: &mut R, len: u64) -> Error {
    let mut pos = HEADER_LEN as u64;
    let mut header = [0u8; RECORD_HEADER_LEN];
    loop {
        if pos == len {
            return Error::Truncated("no footer after last basket record".into());
        }
        if pos + RECORD_HEADER_LEN as u64 > len {
            return Error::Truncated(format!("record header at {pos} cut off"));
        }
        if src.seek(SeekFrom::Start(pos)).is_err() || src.read_exact(&mut header).is_err() {
            return Error::Truncated(format!("record header at {pos} unreadable"));
        }
        let Ok(meta) = decode_record_header(&header, pos) else {
            return Error::BadTrailer("trailing magic mismatch".into());
        };
        pos += RECORD_HEADER_LEN as u64 + u64::from(meta.compressed_size);
        if pos > len {
            return Error::Truncated(format!(
                "basket record at {} needs {} payload bytes",
                meta.file_offset, meta.compressed_size
            ));
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

struct Overrun;

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], Overrun> {
        let out = self.bytes.get(self.pos..self.pos + n).ok_or(Overrun)?;
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], Overrun> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> std::result::Result<u8, Overrun> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, Overrun> {
        self.array().map(u16::from_be_bytes)
    }

    fn u32(&mut self) -> std::result::Result<u32, Overrun> {
        self.array().map(u32::from_be_bytes)
    }

    fn u64(&mut self) -> std::result::Result<u64, Overrun> {
        self.array().map(u64::from_be_bytes)
    }
}
