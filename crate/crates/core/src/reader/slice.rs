use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{ColumnSlice, ColumnValues, ElementType, Scalar};

use super::basket::Basket;
use super::cache::BasketCache;

/// Form in which bulk data is delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// On-disk big-endian bytes; no conversion performed.
    RawSerialized,
    /// Host-native element values.
    DecodedNative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ownership {
    /// Aliases the reader's cache; valid until the basket is evicted.
    View,
    /// Independent memory; valid indefinitely.
    Copy,
}

/// Guard carried by views: the basket they alias and the cache slot stamp
/// that must still be live for the view to be usable.
#[derive(Debug, Clone)]
pub(crate) struct ViewGuard {
    pub(crate) basket: Arc<Basket>,
    pub(crate) stamp: u64,
    pub(crate) cache: Arc<BasketCache>,
}

impl ViewGuard {
    fn check(&self) -> Result<&Basket> {
        let key = self.basket.meta().key();
        if self.cache.is_live(&key, self.stamp) {
            Ok(&self.basket)
        } else {
            Err(Error::StaleView {
                branch_id: key.branch_id,
                first_entry: key.first_entry,
            })
        }
    }
}

#[derive(Debug, Clone)]
enum SliceData {
    View(ViewGuard),
    Raw(Vec<u8>),
    Decoded(ColumnValues),
}

/// All entries of one basket, delivered by a single bulk call.
#[derive(Debug, Clone)]
pub struct BulkSlice {
    pub branch_id: u32,
    pub first_entry: u64,
    pub entry_count: u32,
    pub element: ElementType,
    pub elements_per_entry: usize,
    pub mode: Delivery,
    pub ownership: Ownership,
    data: SliceData,
}

impl BulkSlice {
    pub(crate) fn view(basket: ViewGuard, mode: Delivery, element: ElementType, per_entry: usize) -> Self {
        let meta = *basket.basket.meta();
        Self {
            branch_id: meta.branch_id,
            first_entry: meta.first_entry,
            entry_count: meta.entry_count,
            element,
            elements_per_entry: per_entry,
            mode,
            ownership: Ownership::View,
            data: SliceData::View(basket),
        }
    }

    pub(crate) fn raw_copy(basket: &Basket, element: ElementType, per_entry: usize) -> Self {
        let meta = basket.meta();
        Self {
            branch_id: meta.branch_id,
            first_entry: meta.first_entry,
            entry_count: meta.entry_count,
            element,
            elements_per_entry: per_entry,
            mode: Delivery::RawSerialized,
            ownership: Ownership::Copy,
            data: SliceData::Raw(basket.element_bytes().to_vec()),
        }
    }

    pub(crate) fn decoded_copy(basket: &Basket, values: ColumnValues, per_entry: usize) -> Self {
        let meta = basket.meta();
        Self {
            branch_id: meta.branch_id,
            first_entry: meta.first_entry,
            entry_count: meta.entry_count,
            element: values.element_type(),
            elements_per_entry: per_entry,
            mode: Delivery::DecodedNative,
            ownership: Ownership::Copy,
            data: SliceData::Decoded(values),
        }
    }

    /// Entry range covered by this slice.
    pub fn entries(&self) -> Range<u64> {
        self.first_entry..self.first_entry + u64::from(self.entry_count)
    }

    /// False once a view's basket has been evicted. Copies are always valid.
    pub fn is_valid(&self) -> bool {
        match &self.data {
            SliceData::View(g) => g.check().is_ok(),
            _ => true,
        }
    }

    /// Big-endian element bytes. Requires `Delivery::RawSerialized`.
    pub fn raw(&self) -> Result<&[u8]> {
        if self.mode != Delivery::RawSerialized {
            return Err(Error::ModeMismatch {
                held: "decoded",
                requested: "raw",
            });
        }
        match &self.data {
            SliceData::View(g) => Ok(g.check()?.element_bytes()),
            SliceData::Raw(v) => Ok(v),
            SliceData::Decoded(_) => unreachable!("mode checked"),
        }
    }

    /// Host-native elements. Requires `Delivery::DecodedNative`.
    pub fn values(&self) -> Result<ColumnSlice<'_>> {
        if self.mode != Delivery::DecodedNative {
            return Err(Error::ModeMismatch {
                held: "raw",
                requested: "decoded",
            });
        }
        match &self.data {
            SliceData::View(g) => Ok(g
                .check()?
                .decoded_slice()
                .expect("decoded views are decoded on creation")),
            SliceData::Decoded(v) => Ok(v.as_slice()),
            SliceData::Raw(_) => unreachable!("mode checked"),
        }
    }

    /// Shorthand for `values()` on f32 branches.
    pub fn as_f32(&self) -> Result<&[f32]> {
        let v = self.values()?;
        v.as_f32().ok_or(Error::ModeMismatch {
            held: v.element_type().name(),
            requested: "f32",
        })
    }

    /// Element `i` of the slice (flat index), in either delivery mode.
    pub fn get(&self, i: usize) -> Result<Option<Scalar>> {
        match self.mode {
            Delivery::DecodedNative => Ok(self.values()?.get(i)),
            Delivery::RawSerialized => {
                let w = self.element.width();
                let raw = self.raw()?;
                let Some(bytes) = raw.get(i * w..(i + 1) * w) else {
                    return Ok(None);
                };
                let mut one = ColumnValues::with_capacity(self.element, 1);
                one.extend_from_be(bytes);
                Ok(one.get(0))
            }
        }
    }
}

#[derive(Debug, Clone)]
enum ColumnData {
    View { guard: ViewGuard, elements: Range<usize> },
    Owned(ColumnValues),
}

/// One branch's values over an entry range, index-aligned with the other
/// columns returned by the same `read_range_aligned` call.
#[derive(Debug, Clone)]
pub struct AlignedColumn {
    pub branch_id: u32,
    pub ownership: Ownership,
    data: ColumnData,
    /// Per-entry prefix sums into the values, var_array only.
    offsets: Option<Vec<u32>>,
}

impl AlignedColumn {
    pub(crate) fn view(branch_id: u32, guard: ViewGuard, elements: Range<usize>) -> Self {
        Self {
            branch_id,
            ownership: Ownership::View,
            data: ColumnData::View { guard, elements },
            offsets: None,
        }
    }

    pub(crate) fn owned(branch_id: u32, values: ColumnValues, offsets: Option<Vec<u32>>) -> Self {
        Self {
            branch_id,
            ownership: Ownership::Copy,
            data: ColumnData::Owned(values),
            offsets,
        }
    }

    pub fn is_valid(&self) -> bool {
        match &self.data {
            ColumnData::View { guard, .. } => guard.check().is_ok(),
            ColumnData::Owned(_) => true,
        }
    }

    /// Contiguous host-native values; fails with `StaleView` if this is a
    /// view whose basket was evicted.
    pub fn values(&self) -> Result<ColumnSlice<'_>> {
        match &self.data {
            ColumnData::View { guard, elements } => Ok(guard
                .check()?
                .decoded_slice()
                .expect("decoded views are decoded on creation")
                .slice(elements.clone())),
            ColumnData::Owned(v) => Ok(v.as_slice()),
        }
    }

    pub fn as_f32(&self) -> Result<&[f32]> {
        let v = self.values()?;
        v.as_f32().ok_or(Error::ModeMismatch {
            held: v.element_type().name(),
            requested: "f32",
        })
    }

    /// Entry boundaries into `values()` for var_array branches.
    pub fn offsets(&self) -> Option<&[u32]> {
        self.offsets.as_deref()
    }

    /// Materializes the column, detaching it from the reader cache.
    pub fn into_owned(self) -> Result<AlignedColumn> {
        match self.data {
            ColumnData::Owned(_) => Ok(self),
            ColumnData::View { .. } => {
                let values = self.values()?.to_owned();
                Ok(AlignedColumn::owned(self.branch_id, values, self.offsets))
            }
        }
    }
}
