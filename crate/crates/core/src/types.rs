//! Domain types shared by the writer, the reader and the on-disk layout.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Primitive element stored in a branch. Floats are IEEE-754, integers
/// two's complement; all are big-endian on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementType {
    F32,
    F64,
    I32,
    I64,
    U8,
}

impl ElementType {
    pub const ALL: [ElementType; 5] = [
        ElementType::F32,
        ElementType::F64,
        ElementType::I32,
        ElementType::I64,
        ElementType::U8,
    ];

    /// Byte width of one element.
    pub const fn width(self) -> usize {
        match self {
            ElementType::F32 | ElementType::I32 => 4,
            ElementType::F64 | ElementType::I64 => 8,
            ElementType::U8 => 1,
        }
    }

    pub(crate) const fn code(self) -> u8 {
        match self {
            ElementType::F32 => 0,
            ElementType::F64 => 1,
            ElementType::I32 => 2,
            ElementType::I64 => 3,
            ElementType::U8 => 4,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub const fn name(self) -> &'static str {
        match self {
            ElementType::F32 => "f32",
            ElementType::F64 => "f64",
            ElementType::I32 => "i32",
            ElementType::I64 => "i64",
            ElementType::U8 => "u8",
        }
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-entry shape of a branch value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchShape {
    Scalar,
    /// Exactly `len` elements per entry; `len >= 1`.
    FixedArray(u32),
    /// Any number of elements per entry, including zero.
    VarArray,
}

impl BranchShape {
    /// Elements per entry for shapes that have a fixed count.
    pub fn fixed_len(self) -> Option<usize> {
        match self {
            BranchShape::Scalar => Some(1),
            BranchShape::FixedArray(n) => Some(n as usize),
            BranchShape::VarArray => None,
        }
    }
}

/// Schema of one column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchDescriptor {
    pub branch_id: u32,
    pub name: String,
    pub element: ElementType,
    pub shape: BranchShape,
    /// Uncompressed buffer size that triggers a basket flush.
    pub basket_target_bytes: u32,
}

impl BranchDescriptor {
    pub fn new(
        branch_id: u32,
        name: impl Into<String>,
        element: ElementType,
        shape: BranchShape,
        basket_target_bytes: u32,
    ) -> Self {
        Self {
            branch_id,
            name: name.into(),
            element,
            shape,
            basket_target_bytes,
        }
    }

    /// Uncompressed bytes of one entry, when that is fixed by the shape.
    pub fn entry_bytes(&self) -> Option<usize> {
        self.shape.fixed_len().map(|n| n * self.element.width())
    }
}

/// Validates a branch table: dense ids in order, unique non-empty names,
/// positive fixed-array lengths and a target of at least one element.
pub(crate) fn validate_branches(branches: &[BranchDescriptor]) -> std::result::Result<(), String> {
    let mut names = std::collections::HashSet::new();
    for (i, b) in branches.iter().enumerate() {
        if b.branch_id as usize != i {
            return Err(format!("branch '{}' has id {}, expected {i}", b.name, b.branch_id));
        }
        if b.name.is_empty() {
            return Err(format!("branch {i} has an empty name"));
        }
        if !names.insert(b.name.as_str()) {
            return Err(format!("duplicate branch name '{}'", b.name));
        }
        if b.shape == BranchShape::FixedArray(0) {
            return Err(format!("branch '{}' has a zero-length fixed array", b.name));
        }
        if (b.basket_target_bytes as usize) < b.element.width() {
            return Err(format!(
                "branch '{}' basket target {} is smaller than one {} element",
                b.name, b.basket_target_bytes, b.element
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Codec {
    None,
    Deflate,
    Lz4,
    Lz4Hc,
}

impl Codec {
    pub(crate) const fn code(self) -> u8 {
        match self {
            Codec::None => 0,
            Codec::Deflate => 1,
            Codec::Lz4 => 2,
            Codec::Lz4Hc => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Codec::None),
            1 => Some(Codec::Deflate),
            2 => Some(Codec::Lz4),
            3 => Some(Codec::Lz4Hc),
            _ => None,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Codec::None => "none",
            Codec::Deflate => "deflate",
            Codec::Lz4 => "lz4",
            Codec::Lz4Hc => "lz4hc",
        }
    }

    /// Valid level range for this codec.
    pub const fn levels(self) -> (u8, u8) {
        match self {
            Codec::None => (0, 0),
            Codec::Deflate => (1, 9),
            Codec::Lz4 => (1, 1),
            Codec::Lz4Hc => (1, 12),
        }
    }

    /// Level used when none is given.
    pub const fn default_level(self) -> u8 {
        match self {
            Codec::None => 0,
            Codec::Deflate => 6,
            Codec::Lz4 => 1,
            Codec::Lz4Hc => 9,
        }
    }
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Codec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Codec::None),
            "deflate" | "zlib" => Ok(Codec::Deflate),
            "lz4" => Ok(Codec::Lz4),
            "lz4hc" => Ok(Codec::Lz4Hc),
            other => Err(Error::InvalidSpec(format!("unknown codec '{other}'"))),
        }
    }
}

/// Codec plus level governing the payload encoding of a basket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CompressionSpec {
    pub codec: Codec,
    pub level: u8,
}

impl CompressionSpec {
    pub const NONE: CompressionSpec = CompressionSpec {
        codec: Codec::None,
        level: 0,
    };

    /// Builds a spec, rejecting levels outside the codec's range.
    pub fn new(codec: Codec, level: u8) -> Result<Self> {
        let spec = CompressionSpec { codec, level };
        spec.validate()?;
        Ok(spec)
    }

    pub fn deflate(level: u8) -> Result<Self> {
        Self::new(Codec::Deflate, level)
    }

    pub fn lz4() -> Self {
        CompressionSpec {
            codec: Codec::Lz4,
            level: 1,
        }
    }

    pub fn lz4hc(level: u8) -> Result<Self> {
        Self::new(Codec::Lz4Hc, level)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.codec.levels();
        if self.level < lo || self.level > hi {
            return Err(Error::InvalidSpec(format!(
                "{} level must be in {lo}..={hi}, got {}",
                self.codec, self.level
            )));
        }
        Ok(())
    }
}

impl Default for CompressionSpec {
    fn default() -> Self {
        CompressionSpec::NONE
    }
}

impl fmt::Display for CompressionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.codec, self.level)
    }
}

impl FromStr for CompressionSpec {
    type Err = Error;

    /// Parses `codec` or `codec-level`, e.g. `deflate-6`, `lz4`, `none-0`.
    fn from_str(s: &str) -> Result<Self> {
        let (codec, level) = match s.rsplit_once('-') {
            Some((c, l)) if l.chars().all(|ch| ch.is_ascii_digit()) && !l.is_empty() => {
                let level = l
                    .parse::<u8>()
                    .map_err(|_| Error::InvalidSpec(format!("bad level in '{s}'")))?;
                (c.parse::<Codec>()?, level)
            }
            _ => {
                let codec = s.parse::<Codec>()?;
                (codec, codec.default_level())
            }
        };
        Self::new(codec, level)
    }
}

/// Location and encoding of one basket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasketMeta {
    pub branch_id: u32,
    pub first_entry: u64,
    pub entry_count: u32,
    pub file_offset: u64,
    pub compressed_size: u32,
    pub uncompressed_size: u32,
    pub spec: CompressionSpec,
}

impl BasketMeta {
    pub fn end_entry(&self) -> u64 {
        self.first_entry + u64::from(self.entry_count)
    }

    pub fn entries(&self) -> Range<u64> {
        self.first_entry..self.end_entry()
    }

    pub fn key(&self) -> BasketKey {
        BasketKey {
            branch_id: self.branch_id,
            first_entry: self.first_entry,
        }
    }
}

/// Identifies a basket within one file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasketKey {
    pub branch_id: u32,
    pub first_entry: u64,
}

/// Entry numbers at which every branch was flushed. Boundary `k` closes
/// cluster `k`, so cluster `k` spans `[boundaries[k-1], boundaries[k])`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterIndex {
    pub boundaries: Vec<u64>,
}

impl ClusterIndex {
    pub fn new(boundaries: Vec<u64>) -> Self {
        Self { boundaries }
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// Entry range of cluster `k`.
    pub fn range(&self, k: usize) -> Option<Range<u64>> {
        let end = *self.boundaries.get(k)?;
        let start = if k == 0 { 0 } else { self.boundaries[k - 1] };
        Some(start..end)
    }

    /// Cluster containing `entry`.
    pub fn cluster_of(&self, entry: u64) -> Option<usize> {
        let k = self.boundaries.partition_point(|&b| b <= entry);
        (k < self.boundaries.len()).then_some(k)
    }
}

/// Borrowed run of elements of one type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnSlice<'a> {
    F32(&'a [f32]),
    F64(&'a [f64]),
    I32(&'a [i32]),
    I64(&'a [i64]),
    U8(&'a [u8]),
}

macro_rules! each_variant {
    ($value:expr, $inner:ident => $body:expr) => {
        match $value {
            ColumnSlice::F32($inner) => $body,
            ColumnSlice::F64($inner) => $body,
            ColumnSlice::I32($inner) => $body,
            ColumnSlice::I64($inner) => $body,
            ColumnSlice::U8($inner) => $body,
        }
    };
}

macro_rules! each_owned {
    ($value:expr, $inner:ident => $body:expr) => {
        match $value {
            ColumnValues::F32($inner) => $body,
            ColumnValues::F64($inner) => $body,
            ColumnValues::I32($inner) => $body,
            ColumnValues::I64($inner) => $body,
            ColumnValues::U8($inner) => $body,
        }
    };
}

impl<'a> ColumnSlice<'a> {
    pub fn element_type(&self) -> ElementType {
        match self {
            ColumnSlice::F32(_) => ElementType::F32,
            ColumnSlice::F64(_) => ElementType::F64,
            ColumnSlice::I32(_) => ElementType::I32,
            ColumnSlice::I64(_) => ElementType::I64,
            ColumnSlice::U8(_) => ElementType::U8,
        }
    }

    pub fn len(&self) -> usize {
        each_variant!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends the big-endian encoding of every element.
    pub fn write_be(&self, out: &mut Vec<u8>) {
        out.reserve(self.len() * self.element_type().width());
        each_variant!(self, v => {
            for x in v.iter() {
                out.extend_from_slice(&x.to_be_bytes());
            }
        })
    }

    pub fn to_owned(&self) -> ColumnValues {
        match *self {
            ColumnSlice::F32(v) => ColumnValues::F32(v.to_vec()),
            ColumnSlice::F64(v) => ColumnValues::F64(v.to_vec()),
            ColumnSlice::I32(v) => ColumnValues::I32(v.to_vec()),
            ColumnSlice::I64(v) => ColumnValues::I64(v.to_vec()),
            ColumnSlice::U8(v) => ColumnValues::U8(v.to_vec()),
        }
    }

    pub fn slice(&self, range: Range<usize>) -> ColumnSlice<'a> {
        match *self {
            ColumnSlice::F32(v) => ColumnSlice::F32(&v[range]),
            ColumnSlice::F64(v) => ColumnSlice::F64(&v[range]),
            ColumnSlice::I32(v) => ColumnSlice::I32(&v[range]),
            ColumnSlice::I64(v) => ColumnSlice::I64(&v[range]),
            ColumnSlice::U8(v) => ColumnSlice::U8(&v[range]),
        }
    }

    pub fn get(&self, i: usize) -> Option<Scalar> {
        Some(match *self {
            ColumnSlice::F32(v) => Scalar::F32(*v.get(i)?),
            ColumnSlice::F64(v) => Scalar::F64(*v.get(i)?),
            ColumnSlice::I32(v) => Scalar::I32(*v.get(i)?),
            ColumnSlice::I64(v) => Scalar::I64(*v.get(i)?),
            ColumnSlice::U8(v) => Scalar::U8(*v.get(i)?),
        })
    }

    pub fn as_f32(&self) -> Option<&'a [f32]> {
        match *self {
            ColumnSlice::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<&'a [f64]> {
        match *self {
            ColumnSlice::F64(v) => Some(v),
            _ => None,
        }
    }
}

impl<'a> From<&'a [f32]> for ColumnSlice<'a> {
    fn from(v: &'a [f32]) -> Self {
        ColumnSlice::F32(v)
    }
}

impl<'a> From<&'a [f64]> for ColumnSlice<'a> {
    fn from(v: &'a [f64]) -> Self {
        ColumnSlice::F64(v)
    }
}

impl<'a> From<&'a [i32]> for ColumnSlice<'a> {
    fn from(v: &'a [i32]) -> Self {
        ColumnSlice::I32(v)
    }
}

impl<'a> From<&'a [i64]> for ColumnSlice<'a> {
    fn from(v: &'a [i64]) -> Self {
        ColumnSlice::I64(v)
    }
}

impl<'a> From<&'a [u8]> for ColumnSlice<'a> {
    fn from(v: &'a [u8]) -> Self {
        ColumnSlice::U8(v)
    }
}

impl<'a> From<&'a f32> for ColumnSlice<'a> {
    fn from(v: &'a f32) -> Self {
        ColumnSlice::F32(std::slice::from_ref(v))
    }
}

impl<'a> From<&'a f64> for ColumnSlice<'a> {
    fn from(v: &'a f64) -> Self {
        ColumnSlice::F64(std::slice::from_ref(v))
    }
}

impl<'a> From<&'a i32> for ColumnSlice<'a> {
    fn from(v: &'a i32) -> Self {
        ColumnSlice::I32(std::slice::from_ref(v))
    }
}

impl<'a> From<&'a i64> for ColumnSlice<'a> {
    fn from(v: &'a i64) -> Self {
        ColumnSlice::I64(std::slice::from_ref(v))
    }
}

impl<'a> From<&'a u8> for ColumnSlice<'a> {
    fn from(v: &'a u8) -> Self {
        ColumnSlice::U8(std::slice::from_ref(v))
    }
}

/// A single element value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    F32(f32),
    F64(f64),
    I32(i32),
    I64(i64),
    U8(u8),
}

impl Scalar {
    /// Widening conversion used by reductions.
    pub fn as_f64(self) -> f64 {
        match self {
            Scalar::F32(x) => f64::from(x),
            Scalar::F64(x) => x,
            Scalar::I32(x) => f64::from(x),
            Scalar::I64(x) => x as f64,
            Scalar::U8(x) => f64::from(x),
        }
    }
}

/// Owned, host-native array of elements of one type.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
    I64(Vec<i64>),
    U8(Vec<u8>),
}

impl ColumnValues {
    pub fn with_capacity(element: ElementType, n: usize) -> Self {
        match element {
            ElementType::F32 => ColumnValues::F32(Vec::with_capacity(n)),
            ElementType::F64 => ColumnValues::F64(Vec::with_capacity(n)),
            ElementType::I32 => ColumnValues::I32(Vec::with_capacity(n)),
            ElementType::I64 => ColumnValues::I64(Vec::with_capacity(n)),
            ElementType::U8 => ColumnValues::U8(Vec::with_capacity(n)),
        }
    }

    pub fn element_type(&self) -> ElementType {
        self.as_slice().element_type()
    }

    pub fn len(&self) -> usize {
        each_owned!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        each_owned!(self, v => v.clear())
    }

    pub fn as_slice(&self) -> ColumnSlice<'_> {
        match self {
            ColumnValues::F32(v) => ColumnSlice::F32(v),
            ColumnValues::F64(v) => ColumnSlice::F64(v),
            ColumnValues::I32(v) => ColumnSlice::I32(v),
            ColumnValues::I64(v) => ColumnSlice::I64(v),
            ColumnValues::U8(v) => ColumnSlice::U8(v),
        }
    }

    pub fn get(&self, i: usize) -> Option<Scalar> {
        self.as_slice().get(i)
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match self {
            ColumnValues::F32(v) => Some(v),
            _ => None,
        }
    }

    /// Appends elements decoded from big-endian bytes. `raw.len()` must be a
    /// multiple of the element width; a trailing partial element is ignored.
    pub fn extend_from_be(&mut self, raw: &[u8]) {
        match self {
            ColumnValues::F32(v) => v.extend(
                raw.chunks_exact(4)
                    .map(|c| f32::from_be_bytes([c[0], c[1], c[2], c[3]])),
            ),
            ColumnValues::F64(v) => v.extend(raw.chunks_exact(8).map(|c| {
                f64::from_be_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]])
            })),
            ColumnValues::I32(v) => v.extend(
                raw.chunks_exact(4)
                    .map(|c| i32::from_be_bytes([c[0], c[1], c[2], c[3]])),
            ),
            ColumnValues::I64(v) => v.extend(raw.chunks_exact(8).map(|c| {
                i64::from_be_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]])
            })),
            ColumnValues::U8(v) => v.extend_from_slice(raw),
        }
    }
}
