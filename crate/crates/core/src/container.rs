//! POFT binary tensor container.
//!
//! Each record is: magic `b"POFT"`, version `u16`, dtype code `u8`
//! (1 = f32, 2 = f64), ndim `u8`, `ndim` dims as `u32`, then the row-major
//! payload. Every multi-byte field is little-endian. A file holds one or
//! more records back to back.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"POFT";
pub const VERSION: u16 = 1;
const MAX_NDIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 1,
    F64 = 2,
}

impl DType {
    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            other => Err(Error::Container(format!("unknown dtype code {other}"))),
        }
    }

    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::checked(dims, TensorData::F32(data))
    }

    pub fn f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::checked(dims, TensorData::F64(data))
    }

    fn checked(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let t = Tensor { dims, data };
        if t.dims.len() > MAX_NDIM {
            return Err(Error::Container(format!(
                "{} dims exceed the limit of {MAX_NDIM}",
                t.dims.len()
            )));
        }
        if t.dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Container("dimension does not fit in u32".into()));
        }
        let expected: usize = t.dims.iter().product();
        if expected != t.len() {
            return Err(Error::Container(format!(
                "payload has {} elements, dims {:?} need {expected}",
                t.len(),
                t.dims
            )));
        }
        Ok(t)
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn into_f32(self) -> Vec<f32> {
        match self.data {
            TensorData::F32(v) => v,
            TensorData::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        }
    }

    /// Fails unless the tensor has exactly the given shape.
    pub fn expect_dims(&self, dims: &[usize]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::Container(format!(
                "expected dims {dims:?}, found {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.dtype() as u8, self.dims.len() as u8])?;
        for &d in &self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        match &self.data {
            TensorData::F32(v) => {
                let mut buf = Vec::with_capacity(v.len() * 4);
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
            TensorData::F64(v) => {
                let mut buf = Vec::with_capacity(v.len() * 8);
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
        }
        Ok(())
    }

    /// Reads one record; `Ok(None)` on a clean end of stream.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>> {
        let mut magic = [0u8; 4];
        let got = read_fully(r, &mut magic)?;
        if got == 0 {
            return Ok(None);
        }
        if got < 4 || &magic != MAGIC {
            return Err(Error::Container("missing POFT magic".into()));
        }
        let mut head = [0u8; 4];
        read_exact(r, &mut head, "header")?;
        let version = u16::from_le_bytes([head[0], head[1]]);
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let dtype = DType::from_code(head[2])?;
        let ndim = head[3] as usize;
        if ndim > MAX_NDIM {
            return Err(Error::Container(format!(
                "{ndim} dims exceed the limit of {MAX_NDIM}"
            )));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 4];
            read_exact(r, &mut b, "dims")?;
            dims.push(u32::from_le_bytes(b) as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(dtype.size()).map(|_| n))
            .ok_or_else(|| Error::Container("tensor size overflows".into()))?;
        let mut payload = vec![0u8; count * dtype.size()];
        read_exact(r, &mut payload, "payload")?;
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                    .collect(),
            ),
        };
        Ok(Some(Tensor { dims, data }))
    }
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    if read_fully(r, buf)? != buf.len() {
        return Err(Error::Container(format!("truncated {what}")));
    }
    Ok(())
}

pub fn write_tensors(path: &Path, tensors: &[Tensor]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in tensors {
        t.write_to(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<Vec<Tensor>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some(t) = Tensor::read_from(&mut r)? {
        out.push(t);
    }
    if out.is_empty() {
        return Err(Error::Container(format!(
            "{} holds no tensors",
            path.display()
        )));
    }
    Ok(out)
}
