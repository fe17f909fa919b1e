//! Checkpoint container: a magic line, a text metadata header of escaped
//! `key=value` lines terminated by a blank line, then binary parameter
//! records.
//!
//! Record layout (all integers little-endian `u32`):
//! `count`, then per record `name_len`, UTF-8 name, `ndims`, dims...,
//! and `product(dims)` little-endian `f32` values.

use std::io::{Read, Write};

use super::array::Array;
use crate::error::{Error, Result};
use crate::textio::KeyValues;

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    /// Magic identifying the payload kind, e.g. `SRL-MODEL 1`.
    pub magic: String,
    pub header: KeyValues,
    pub records: Vec<(String, Array<f32>)>,
}

impl Container {
    pub fn new(magic: impl Into<String>) -> Self {
        Container {
            magic: magic.into(),
            header: KeyValues::new(),
            records: Vec::new(),
        }
    }

    pub fn record(&self, name: &str) -> Result<&Array<f32>> {
        self.records
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| Error::invalid(format!("checkpoint has no parameter `{}`", name)))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.magic.as_bytes())?;
        w.write_all(b"\n")?;
        w.write_all(self.header.to_text().as_bytes())?;
        w.write_all(b"\n")?;
        write_u32(&mut w, self.records.len())?;
        for (name, array) in &self.records {
            write_u32(&mut w, name.len())?;
            w.write_all(name.as_bytes())?;
            write_u32(&mut w, array.shape().len())?;
            for &d in array.shape() {
                write_u32(&mut w, d)?;
            }
            let mut buf = Vec::with_capacity(array.len() * 4);
            for v in array.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R, expected_magic: &str) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, expected_magic)
    }

    pub fn from_bytes(bytes: &[u8], expected_magic: &str) -> Result<Self> {
        let mut pos = 0;
        let mut lines = Vec::new();
        loop {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::invalid("truncated checkpoint header"))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end])
                .map_err(|_| Error::invalid("checkpoint header is not UTF-8"))?;
            pos += end + 1;
            if line.is_empty() {
                break;
            }
            lines.push(line.to_string());
        }
        let magic = lines.first().cloned().unwrap_or_default();
        if magic != expected_magic {
            return Err(Error::invalid(format!(
                "expected `{}` file, found `{}`",
                expected_magic, magic
            )));
        }
        let header = KeyValues::parse(&lines[1..].join("\n"))?;
        let mut cursor = Cursor { bytes, pos };
        let count = cursor.u32()?;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let len = cursor.u32()?;
            let name = String::from_utf8(cursor.take(len)?.to_vec())
                .map_err(|_| Error::invalid("record name is not UTF-8"))?;
            let ndims = cursor.u32()?;
            let mut shape = Vec::with_capacity(ndims);
            for _ in 0..ndims {
                shape.push(cursor.u32()?);
            }
            let n: usize = shape.iter().product();
            let raw = cursor.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            records.push((name, Array::from_vec(&shape, data)?));
        }
        if cursor.pos != bytes.len() {
            return Err(Error::invalid("trailing bytes after checkpoint records"));
        }
        Ok(Container { magic, header, records })
    }
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid("value exceeds u32 range"))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::invalid("truncated checkpoint record"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let mut c = Container::new("TEST 1");
        c.header.push("config.hidden", 4);
        c.header.push("label", "A0 with space");
        c.records.push((
            "w".into(),
            Array::from_vec(&[2, 2], vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE]).unwrap(),
        ));
        c.records.push(("b".into(), Array::from_vec(&[1], vec![0.125]).unwrap()));
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes, "TEST 1").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn wrong_magic_and_truncation_are_errors() {
        let mut c = Container::new("TEST 1");
        c.records.push(("w".into(), Array::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap()));
        let bytes = c.to_bytes();
        assert!(Container::from_bytes(&bytes, "OTHER 1").is_err());
        assert!(Container::from_bytes(&bytes[..bytes.len() - 2], "TEST 1").is_err());
    }
}
