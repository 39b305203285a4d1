//! Minimal Protocol Buffers wire-format reader/writer.
//!
//! ONNX models are protobuf messages; we only need the handful of message
//! types that make up a ModelProto, so a small hand-rolled codec keeps the
//! byte-level behavior (and round-trip fidelity) fully under our control.
//! Reference: <https://protobuf.dev/programming-guides/encoding/>

use crate::error::{Error, Result};

pub const WIRE_VARINT: u8 = 0;
pub const WIRE_FIXED64: u8 = 1;
pub const WIRE_LEN: u8 = 2;
pub const WIRE_FIXED32: u8 = 5;

#[derive(Debug, Clone, Copy)]
pub enum Value<'a> {
    Varint(u64),
    Fixed64(u64),
    Bytes(&'a [u8]),
    Fixed32(u32),
}

impl<'a> Value<'a> {
    pub fn as_u64(&self) -> Result<u64> {
        match self {
            Value::Varint(v) => Ok(*v),
            _ => Err(Error::Decode("expected varint field".into())),
        }
    }

    pub fn as_i64(&self) -> Result<i64> {
        Ok(self.as_u64()? as i64)
    }

    pub fn as_bytes(&self) -> Result<&'a [u8]> {
        match self {
            Value::Bytes(b) => Ok(b),
            _ => Err(Error::Decode("expected length-delimited field".into())),
        }
    }

    pub fn as_string(&self) -> Result<String> {
        String::from_utf8(self.as_bytes()?.to_vec())
            .map_err(|_| Error::Decode("invalid UTF-8 in string field".into()))
    }

    pub fn as_f32(&self) -> Result<f32> {
        match self {
            Value::Fixed32(v) => Ok(f32::from_bits(*v)),
            _ => Err(Error::Decode("expected fixed32 field".into())),
        }
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn read_varint(&mut self) -> Result<u64> {
        let mut out: u64 = 0;
        let mut shift = 0u32;
        loop {
            let byte = *self
                .buf
                .get(self.pos)
                .ok_or_else(|| Error::Decode("truncated varint".into()))?;
            self.pos += 1;
            if shift < 64 {
                out |= u64::from(byte & 0x7f) << shift;
            }
            if byte & 0x80 == 0 {
                return Ok(out);
            }
            shift += 7;
            if shift > 70 {
                return Err(Error::Decode("varint too long".into()));
            }
        }
    }

    /// Read the next (field number, value) pair.
    pub fn next_field(&mut self) -> Result<(u32, Value<'a>)> {
        let key = self.read_varint()?;
        let field = (key >> 3) as u32;
        let wire = (key & 7) as u8;
        if field == 0 {
            return Err(Error::Decode("field number 0".into()));
        }
        let value = match wire {
            WIRE_VARINT => Value::Varint(self.read_varint()?),
            WIRE_FIXED64 => {
                let end = self.pos + 8;
                let bytes = self
                    .buf
                    .get(self.pos..end)
                    .ok_or_else(|| Error::Decode("truncated fixed64".into()))?;
                self.pos = end;
                Value::Fixed64(u64::from_le_bytes(bytes.try_into().unwrap()))
            }
            WIRE_LEN => {
                let len = self.read_varint()? as usize;
                let end = self
                    .pos
                    .checked_add(len)
                    .ok_or_else(|| Error::Decode("length overflow".into()))?;
                let bytes = self
                    .buf
                    .get(self.pos..end)
                    .ok_or_else(|| Error::Decode("truncated length-delimited field".into()))?;
                self.pos = end;
                Value::Bytes(bytes)
            }
            WIRE_FIXED32 => {
                let end = self.pos + 4;
                let bytes = self
                    .buf
                    .get(self.pos..end)
                    .ok_or_else(|| Error::Decode("truncated fixed32".into()))?;
                self.pos = end;
                Value::Fixed32(u32::from_le_bytes(bytes.try_into().unwrap()))
            }
            other => return Err(Error::Decode(format!("unsupported wire type {other}"))),
        };
        Ok((field, value))
    }
}

/// Decode a packed repeated varint payload as i64 values.
pub fn packed_varints(bytes: &[u8]) -> Result<Vec<i64>> {
    let mut r = Reader::new(bytes);
    let mut out = Vec::new();
    while !r.is_empty() {
        out.push(r.read_varint()? as i64);
    }
    Ok(out)
}

/// Decode a packed repeated fixed32 payload as f32 values.
pub fn packed_f32s(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Decode("packed float payload not a multiple of 4".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    fn varint(&mut self, mut v: u64) {
        loop {
            let byte = (v & 0x7f) as u8;
            v >>= 7;
            if v == 0 {
                self.buf.push(byte);
                return;
            }
            self.buf.push(byte | 0x80);
        }
    }

    fn key(&mut self, field: u32, wire: u8) {
        self.varint(u64::from(field) << 3 | u64::from(wire));
    }

    pub fn uint(&mut self, field: u32, v: u64) {
        self.key(field, WIRE_VARINT);
        self.varint(v);
    }

    pub fn int(&mut self, field: u32, v: i64) {
        self.uint(field, v as u64);
    }

    pub fn float(&mut self, field: u32, v: f32) {
        self.key(field, WIRE_FIXED32);
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    pub fn bytes(&mut self, field: u32, v: &[u8]) {
        self.key(field, WIRE_LEN);
        self.varint(v.len() as u64);
        self.buf.extend_from_slice(v);
    }

    pub fn string(&mut self, field: u32, v: &str) {
        self.bytes(field, v.as_bytes());
    }

    pub fn message(&mut self, field: u32, inner: Writer) {
        self.bytes(field, &inner.buf);
    }

    pub fn packed_ints(&mut self, field: u32, vals: &[i64]) {
        let mut inner = Writer::new();
        for &v in vals {
            inner.varint(v as u64);
        }
        self.bytes(field, &inner.buf);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn varint_roundtrip() {
        let mut w = Writer::new();
        w.uint(1, 0);
        w.uint(2, 300);
        w.int(3, -1);
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.next_field().unwrap().1.as_u64().unwrap(), 0);
        assert_eq!(r.next_field().unwrap().1.as_u64().unwrap(), 300);
        assert_eq!(r.next_field().unwrap().1.as_i64().unwrap(), -1);
        assert!(r.is_empty());
    }

    #[test]
    fn truncated_input_errors() {
        // key for field 1, wire type 2, length 10, but no payload
        let bytes = [0x0a, 0x0a];
        let mut r = Reader::new(&bytes);
        assert!(r.next_field().is_err());
    }

    #[test]
    fn float_bits_preserved() {
        let mut w = Writer::new();
        w.float(2, f32::from_bits(0x7fc0_0001)); // a signalling-ish NaN payload
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes);
        let (_, v) = r.next_field().unwrap();
        assert_eq!(v.as_f32().unwrap().to_bits(), 0x7fc0_0001);
    }
}
