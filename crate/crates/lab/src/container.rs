//! Binary container shared by datasets and checkpoints.
//!
//! Layout: 8-byte magic, `u32` version, then records until end of file. A
//! record is a `u8` tag length, the UTF-8 tag, a `u64` payload length and the
//! payload. All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use oasis_core::params::ParamStore;
use oasis_core::tensor::Tensor;

use crate::error::{LabError, Result};

pub const VERSION: u32 = 1;

/// Accumulates one record payload.
#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }

    pub fn str(&mut self, v: &str) {
        self.bytes(v.as_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    pub fn tensor(&mut self, t: &Tensor) {
        self.u32(t.shape().len() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &x in t.data() {
            self.f64(x);
        }
    }

    pub fn params(&mut self, store: &ParamStore) {
        self.u32(store.len() as u32);
        for (name, t) in store.iter() {
            self.str(name);
            self.tensor(t);
        }
    }
}

/// Reads one record payload. Errors carry the absolute file offset.
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    base: u64,
    path: &'a Path,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8], base: u64, path: &'a Path) -> Self {
        Decoder {
            buf,
            pos: 0,
            base,
            path,
        }
    }

    pub fn offset(&self) -> u64 {
        self.base + self.pos as u64
    }

    pub fn error(&self, reason: impl Into<String>) -> LabError {
        LabError::format(self.path, self.offset(), reason)
    }

    pub fn error_at(&self, offset: u64, reason: impl Into<String>) -> LabError {
        LabError::format(self.path, offset, reason)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.error(format!(
                "truncated: need {n} bytes, {} left",
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    /// A length prefix, checked against the bytes that remain.
    fn len(&mut self, elem: usize) -> Result<usize> {
        let at = self.offset();
        let n = self.u64()?;
        let left = (self.buf.len() - self.pos) as u64;
        if n.checked_mul(elem as u64).is_none_or(|b| b > left) {
            return Err(LabError::format(
                self.path,
                at,
                format!("length {n} exceeds the {left} bytes left"),
            ));
        }
        Ok(n as usize)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let at = self.offset();
        let b = self.bytes()?;
        String::from_utf8(b.to_vec())
            .map_err(|_| LabError::format(self.path, at, "string is not UTF-8"))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn tensor(&mut self) -> Result<Tensor> {
        let at = self.offset();
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(LabError::format(
                self.path,
                at,
                format!("tensor rank {rank} is implausible"),
            ));
        }
        let shape = (0..rank)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        if len.is_none_or(|n| n.saturating_mul(8) > self.buf.len() - self.pos) {
            return Err(LabError::format(
                self.path,
                at,
                format!("tensor shape {shape:?} exceeds the payload"),
            ));
        }
        let data = (0..len.unwrap_or(0))
            .map(|_| self.f64())
            .collect::<Result<Vec<_>>>()?;
        Tensor::new(&shape, data).map_err(|e| LabError::format(self.path, at, e.to_string()))
    }

    /// Overwrites `store` in place; names and shapes must match exactly.
    pub fn params_into(&mut self, store: &mut ParamStore) -> Result<()> {
        let at = self.offset();
        let count = self.u32()? as usize;
        if count != store.len() {
            return Err(LabError::format(
                self.path,
                at,
                format!("{count} parameter tensors, model has {}", store.len()),
            ));
        }
        for i in 0..count {
            let at = self.offset();
            let name = self.str()?;
            let t = self.tensor()?;
            if name != store.names()[i] || t.shape() != store.tensors()[i].shape() {
                return Err(LabError::format(
                    self.path,
                    at,
                    format!(
                        "parameter {name} {:?} does not match {} {:?}",
                        t.shape(),
                        store.names()[i],
                        store.tensors()[i].shape()
                    ),
                ));
            }
            store.tensors_mut()[i] = t;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.error(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub struct ContainerWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl ContainerWriter {
    pub fn create(path: &Path, magic: &[u8; 8]) -> Result<Self> {
        let file = File::create(path).map_err(|e| LabError::io(path, e))?;
        let mut w = ContainerWriter {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        w.write(magic)?;
        w.write(&VERSION.to_le_bytes())?;
        Ok(w)
    }

    fn write(&mut self, b: &[u8]) -> Result<()> {
        self.out
            .write_all(b)
            .map_err(|e| LabError::io(&self.path, e))
    }

    pub fn record(&mut self, tag: &str, payload: &[u8]) -> Result<()> {
        let len = u8::try_from(tag.len()).expect("record tags are short");
        self.write(&[len])?;
        self.write(tag.as_bytes())?;
        self.write(&(payload.len() as u64).to_le_bytes())?;
        self.write(payload)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| LabError::io(&self.path, e))
    }
}

/// Header of one record; the payload starts at `offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordHeader {
    pub tag: String,
    pub len: u64,
    pub offset: u64,
}

/// Sequential record reader. Unbuffered, so a skipped payload is never
/// read from disk.
pub struct ContainerReader {
    input: File,
    path: PathBuf,
    pos: u64,
    size: u64,
    read: Vec<String>,
}

impl ContainerReader {
    pub fn open(path: &Path, magic: &[u8; 8]) -> Result<Self> {
        let file = File::open(path).map_err(|e| LabError::io(path, e))?;
        let size = file.metadata().map_err(|e| LabError::io(path, e))?.len();
        let mut r = ContainerReader {
            input: file,
            path: path.to_path_buf(),
            pos: 0,
            size,
            read: Vec::new(),
        };
        let mut head = [0u8; 12];
        r.read_exact(&mut head)?;
        if &head[..8] != magic {
            return Err(LabError::format(
                path,
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&head[..8]),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let version = u32::from_le_bytes(head[8..].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(LabError::format(
                path,
                8,
                format!("format version {version}, this build reads {VERSION}"),
            ));
        }
        Ok(r)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        if self.size - self.pos < buf.len() as u64 {
            return Err(LabError::format(
                &self.path,
                self.pos,
                format!(
                    "truncated: need {} bytes, {} left",
                    buf.len(),
                    self.size - self.pos
                ),
            ));
        }
        self.input
            .read_exact(buf)
            .map_err(|e| LabError::io(&self.path, e))?;
        self.pos += buf.len() as u64;
        Ok(())
    }

    /// The next record header, or `None` at end of file.
    pub fn next_header(&mut self) -> Result<Option<RecordHeader>> {
        if self.pos == self.size {
            return Ok(None);
        }
        let mut len = [0u8; 1];
        self.read_exact(&mut len)?;
        let mut tag = vec![0u8; len[0] as usize];
        self.read_exact(&mut tag)?;
        let at = self.pos;
        let mut n = [0u8; 8];
        self.read_exact(&mut n)?;
        let len = u64::from_le_bytes(n);
        if len > self.size - self.pos {
            return Err(LabError::format(
                &self.path,
                at,
                format!("record length {len} runs past end of file"),
            ));
        }
        let tag = String::from_utf8(tag)
            .map_err(|_| LabError::format(&self.path, at, "record tag is not UTF-8"))?;
        Ok(Some(RecordHeader {
            tag,
            len,
            offset: self.pos,
        }))
    }

    pub fn read_payload(&mut self, h: &RecordHeader) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; h.len as usize];
        self.read_exact(&mut buf)?;
        self.read.push(h.tag.clone());
        Ok(buf)
    }

    /// Tags whose payloads have been read so far.
    pub fn payloads_read(&self) -> &[String] {
        &self.read
    }

    pub fn skip_payload(&mut self, h: &RecordHeader) -> Result<()> {
        self.input
            .seek(SeekFrom::Current(h.len as i64))
            .map_err(|e| LabError::io(&self.path, e))?;
        self.pos += h.len;
        Ok(())
    }

    /// Reads every record into `(header, payload)` pairs.
    pub fn read_all(mut self) -> Result<Vec<(RecordHeader, Vec<u8>)>> {
        let mut out = Vec::new();
        while let Some(h) = self.next_header()? {
            let p = self.read_payload(&h)?;
            out.push((h, p));
        }
        Ok(out)
    }
}

/// Finds the single record named `tag`.
pub fn take_record<'a>(
    records: &'a [(RecordHeader, Vec<u8>)],
    tag: &str,
    path: &Path,
) -> Result<&'a (RecordHeader, Vec<u8>)> {
    let mut found = records.iter().filter(|(h, _)| h.tag == tag);
    let first = found
        .next()
        .ok_or_else(|| LabError::format(path, 12, format!("missing record {tag:?}")))?;
    if let Some((h, _)) = found.next() {
        return Err(LabError::format(
            path,
            h.offset,
            format!("duplicate record {tag:?}"),
        ));
    }
    Ok(first)
}
