//! Canonical byte encoding for protocol transactions and records.
//!
//! Every on-ledger payload is a flat list of byte fields carrying a
//! leading index table, so a decoder can recover field `i` exactly by
//! its declared index. Layout:
//!
//! ```text
//! u8 field_count | u8 index[field_count] | (u64 BE length | bytes)[field_count]
//! ```
//!
//! Indices are 1-based and must be exactly `1..=field_count` in order;
//! anything else is rejected as malformed.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated input at byte {0}")]
    Truncated(usize),
    #[error("bad index table: expected {expected} entries in order, got {found:?}")]
    BadIndexTable { expected: u8, found: Vec<u8> },
    #[error("trailing bytes after last field")]
    TrailingBytes,
    #[error("field {0} out of range")]
    FieldOutOfRange(usize),
}

/// Encode `fields` with a leading 1-based index table.
pub fn encode_fields(fields: &[&[u8]]) -> Vec<u8> {
    assert!(fields.len() < 256, "field count must fit in u8");
    let total: usize = fields.iter().map(|f| 8 + f.len()).sum();
    let mut out = Vec::with_capacity(1 + fields.len() + total);
    out.push(fields.len() as u8);
    for i in 0..fields.len() {
        out.push((i + 1) as u8);
    }
    for field in fields {
        out.extend_from_slice(&(field.len() as u64).to_be_bytes());
        out.extend_from_slice(field);
    }
    out
}

/// Decode a field list previously produced by [`encode_fields`].
pub fn decode_fields(bytes: &[u8]) -> Result<Vec<Vec<u8>>, CodecError> {
    let mut pos = 0usize;
    let count = *bytes.first().ok_or(CodecError::Truncated(0))? as usize;
    pos += 1;
    if bytes.len() < pos + count {
        return Err(CodecError::Truncated(bytes.len()));
    }
    let table = &bytes[pos..pos + count];
    let expected: Vec<u8> = (1..=count as u8).collect();
    if table != expected.as_slice() {
        return Err(CodecError::BadIndexTable {
            expected: count as u8,
            found: table.to_vec(),
        });
    }
    pos += count;

    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        if bytes.len() < pos + 8 {
            return Err(CodecError::Truncated(pos));
        }
        let mut len_buf = [0u8; 8];
        len_buf.copy_from_slice(&bytes[pos..pos + 8]);
        let len = u64::from_be_bytes(len_buf) as usize;
        pos += 8;
        if bytes.len() < pos + len {
            return Err(CodecError::Truncated(pos));
        }
        fields.push(bytes[pos..pos + len].to_vec());
        pos += len;
    }
    if pos != bytes.len() {
        return Err(CodecError::TrailingBytes);
    }
    Ok(fields)
}

/// Fetch field at 1-based `index` from a decoded field list.
pub fn field<'a>(fields: &'a [Vec<u8>], index: usize) -> Result<&'a [u8], CodecError> {
    if index == 0 || index > fields.len() {
        return Err(CodecError::FieldOutOfRange(index));
    }
    Ok(&fields[index - 1])
}
