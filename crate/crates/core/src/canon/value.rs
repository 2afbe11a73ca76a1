//! Tagged, length-prefixed binary encoding of value trees.
//!
//! Layout (all integers big-endian):
//!
//! ```text
//! bytes   0x01 | len:u64 | raw bytes
//! uint    0x02 | value:u64
//! list    0x03 | count:u64 | item*
//! record  0x04 | count:u64 | field*
//! ```
//!
//! The leading kind byte keeps leaves of different kinds apart, so the
//! encoding is injective over value trees.

use std::ops::Deref;

use super::CanonError;

const KIND_BYTES: u8 = 0x01;
const KIND_UINT: u8 = 0x02;
const KIND_LIST: u8 = 0x03;
const KIND_RECORD: u8 = 0x04;

/// Nesting limit applied when decoding untrusted input.
pub const MAX_DEPTH: usize = 64;

/// A structured value: byte-strings, unsigned integers, ordered lists and
/// fixed-field records.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Bytes(Vec<u8>),
    Uint(u64),
    List(Vec<Value>),
    Record(Vec<Value>),
}

impl Value {
    pub fn bytes(b: impl AsRef<[u8]>) -> Self {
        Value::Bytes(b.as_ref().to_vec())
    }

    /// Builds an integer leaf from any integer type, rejecting values that do
    /// not fit in 64 unsigned bits.
    pub fn try_uint<T>(n: T) -> Result<Self, CanonError>
    where
        T: TryInto<u64> + Copy + std::fmt::Display,
    {
        n.try_into()
            .map(Value::Uint)
            .map_err(|_| CanonError::IntegerOverflow(n.to_string()))
    }

    pub fn record(fields: impl IntoIterator<Item = Value>) -> Self {
        Value::Record(fields.into_iter().collect())
    }

    pub fn list(items: impl IntoIterator<Item = Value>) -> Self {
        Value::List(items.into_iter().collect())
    }
}

/// Output of [`encode_canonical`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct CanonicalBytes(Vec<u8>);

impl CanonicalBytes {
    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

impl Deref for CanonicalBytes {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl AsRef<[u8]> for CanonicalBytes {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

pub fn encode_canonical(value: &Value) -> CanonicalBytes {
    let mut out = Vec::with_capacity(encoded_len(value));
    write_value(value, &mut out);
    CanonicalBytes(out)
}

fn encoded_len(value: &Value) -> usize {
    match value {
        Value::Bytes(b) => 9 + b.len(),
        Value::Uint(_) => 9,
        Value::List(items) | Value::Record(items) => 9 + items.iter().map(encoded_len).sum::<usize>(),
    }
}

fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Bytes(b) => {
            out.push(KIND_BYTES);
            out.extend_from_slice(&(b.len() as u64).to_be_bytes());
            out.extend_from_slice(b);
        }
        Value::Uint(n) => {
            out.push(KIND_UINT);
            out.extend_from_slice(&n.to_be_bytes());
        }
        Value::List(items) => {
            out.push(KIND_LIST);
            out.extend_from_slice(&(items.len() as u64).to_be_bytes());
            items.iter().for_each(|v| write_value(v, out));
        }
        Value::Record(fields) => {
            out.push(KIND_RECORD);
            out.extend_from_slice(&(fields.len() as u64).to_be_bytes());
            fields.iter().for_each(|v| write_value(v, out));
        }
    }
}

/// Decodes exactly one value spanning all of `input`.
pub fn decode_canonical(input: &[u8]) -> Result<Value, CanonError> {
    let mut reader = Reader { input, pos: 0 };
    let value = reader.value(0)?;
    if reader.pos != input.len() {
        return Err(CanonError::TrailingBytes(input.len() - reader.pos));
    }
    Ok(value)
}

struct Reader<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CanonError> {
        if self.remaining() < n {
            return Err(CanonError::UnexpectedEof);
        }
        let s = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CanonError> {
        let raw = self.take(8)?;
        let mut buf = [0u8; 8];
        buf.copy_from_slice(raw);
        Ok(u64::from_be_bytes(buf))
    }

    fn value(&mut self, depth: usize) -> Result<Value, CanonError> {
        if depth > MAX_DEPTH {
            return Err(CanonError::TooDeep);
        }
        let kind = self.take(1)?[0];
        match kind {
            KIND_BYTES => {
                let len = self.u64()?;
                if len > self.remaining() as u64 {
                    return Err(CanonError::UnexpectedEof);
                }
                Ok(Value::Bytes(self.take(len as usize)?.to_vec()))
            }
            KIND_UINT => Ok(Value::Uint(self.u64()?)),
            KIND_LIST | KIND_RECORD => {
                let count = self.u64()?;
                // every element occupies at least 9 bytes
                if count > (self.remaining() / 9) as u64 {
                    return Err(CanonError::UnexpectedEof);
                }
                let mut items = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    items.push(self.value(depth + 1)?);
                }
                Ok(if kind == KIND_LIST {
                    Value::List(items)
                } else {
                    Value::Record(items)
                })
            }
            other => Err(CanonError::UnknownKind(other)),
        }
    }
}
