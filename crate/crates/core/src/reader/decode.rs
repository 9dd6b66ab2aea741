use crate::error::{Error, Result};
use crate::types::{ColumnValues, ElementType};

/// Converts big-endian bytes into host-native elements. Element `k` is the
/// big-endian reading of bytes `[k*w, (k+1)*w)`.
pub fn decode_elements(raw: &[u8], element: ElementType) -> Result<ColumnValues> {
    let width = element.width();
    if !raw.len().is_multiple_of(width) {
        return Err(Error::Misaligned {
            len: raw.len(),
            width,
        });
    }
    let mut out = ColumnValues::with_capacity(element, raw.len() / width);
    out.extend_from_be(raw);
    Ok(out)
}
