//! Versioned binary dumps of Ulam matrices and path ensembles.
//!
//! Layout: magic `RDSL`, format version (u32), record kind (u8), payload,
//! then the SHA-256 of everything before it. Integers are little-endian
//! u64, floats little-endian f64 bit patterns.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::processes::{PathEnsemble, ProcessKind};
use crate::random_system::MapFamily;
use crate::transfer::{FiberMeasure, UlamMatrix};

pub const MAGIC: &[u8; 4] = b"RDSL";
pub const FORMAT_VERSION: u32 = 1;

const KIND_ULAM: u8 = 1;
const KIND_ENSEMBLE: u8 = 2;

/// A stored Ulam matrix with the fiber it came from and an optional density.
#[derive(Clone, Debug, PartialEq)]
pub struct UlamDump {
    pub family: MapFamily,
    pub alpha: f64,
    pub matrix: UlamMatrix,
    pub density: Option<FiberMeasure>,
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Enc(Vec<u8>);

impl Enc {
    fn new(kind: u8) -> Self {
        let mut v = MAGIC.to_vec();
        v.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        v.push(kind);
        Enc(v)
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64s(&mut self, xs: &[f64]) {
        self.u64(xs.len() as u64);
        xs.iter().for_each(|&x| self.f64(x));
    }
    fn finish<W: Write>(mut self, mut w: W) -> Result<()> {
        let digest = Sha256::digest(&self.0);
        self.0.extend_from_slice(&digest);
        w.write_all(&self.0)?;
        Ok(())
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Dec<'a> {
    fn open(buf: &'a [u8], kind: u8) -> Result<Self> {
        if buf.len() < 9 + 32 {
            return Err(Error::Format("file too short".into()));
        }
        let (body, sum) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(Error::Format("checksum mismatch".into()));
        }
        if &body[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        if body[8] != kind {
            return Err(Error::Format(format!("record kind {} where {kind} was expected", body[8])));
        }
        Ok(Dec { buf: body, at: 9 })
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("truncated payload".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()? as usize;
        // each element needs at least one byte
        if n > self.buf.len() {
            return Err(Error::Format("implausible length".into()));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn done(&self) -> Result<()> {
        if self.at != self.buf.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(())
    }
}

fn read_all<R: Read>(mut r: R) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    Ok(buf)
}

fn family_code(f: MapFamily) -> u8 {
    match f {
        MapFamily::Lsv => 1,
        MapFamily::Expanding => 2,
    }
}

fn kind_code(k: ProcessKind) -> u8 {
    match k {
        ProcessKind::Raw => 1,
        ProcessKind::SelfNormalized => 2,
        ProcessKind::Brownian => 3,
        ProcessKind::TimeReversed => 4,
    }
}

pub fn write_ulam<W: Write>(dump: &UlamDump, w: W) -> Result<()> {
    let mut e = Enc::new(KIND_ULAM);
    let m = &dump.matrix;
    e.u64(m.resolution() as u64);
    e.0.push(family_code(dump.family));
    e.f64(dump.alpha);
    e.u64(m.nnz() as u64);
    m.row_ptr().iter().for_each(|&p| e.u64(p as u64));
    m.cols().iter().for_each(|&c| e.0.extend_from_slice(&c.to_le_bytes()));
    m.vals().iter().for_each(|&v| e.f64(v));
    match &dump.density {
        Some(d) => {
            e.0.push(1);
            e.f64s(&d.density);
        }
        None => e.0.push(0),
    }
    e.finish(w)
}

pub fn read_ulam<R: Read>(r: R) -> Result<UlamDump> {
    let buf = read_all(r)?;
    let mut d = Dec::open(&buf, KIND_ULAM)?;
    let n = d.len()?;
    let family = match d.u8()? {
        1 => MapFamily::Lsv,
        2 => MapFamily::Expanding,
        c => return Err(Error::Format(format!("unknown family code {c}"))),
    };
    let alpha = d.f64()?;
    let nnz = d.len()?;
    let row_ptr = (0..=n).map(|_| d.u64().map(|p| p as usize)).collect::<Result<Vec<_>>>()?;
    let cols = (0..nnz)
        .map(|_| d.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())))
        .collect::<Result<Vec<_>>>()?;
    let vals = (0..nnz).map(|_| d.f64()).collect::<Result<Vec<_>>>()?;
    let density = match d.u8()? {
        0 => None,
        _ => Some(FiberMeasure { density: d.f64s()? }),
    };
    d.done()?;
    if cols.iter().any(|&c| c as usize >= n) {
        return Err(Error::Format("column index out of range".into()));
    }
    Ok(UlamDump {
        family,
        alpha,
        matrix: UlamMatrix::from_parts(n, row_ptr, cols, vals)?,
        density,
    })
}

pub fn write_ensemble<W: Write>(ens: &PathEnsemble, w: W) -> Result<()> {
    let mut e = Enc::new(KIND_ENSEMBLE);
    e.0.push(kind_code(ens.kind));
    e.u64(ens.n as u64);
    e.u64(ens.seed);
    match ens.fiber_seed {
        Some(s) => {
            e.0.push(1);
            e.u64(s);
        }
        None => e.0.push(0),
    }
    e.f64s(&ens.times);
    e.u64(ens.paths.len() as u64);
    for p in &ens.paths {
        e.f64s(p);
    }
    e.finish(w)
}

pub fn read_ensemble<R: Read>(r: R) -> Result<PathEnsemble> {
    let buf = read_all(r)?;
    let mut d = Dec::open(&buf, KIND_ENSEMBLE)?;
    let kind = match d.u8()? {
        1 => ProcessKind::Raw,
        2 => ProcessKind::SelfNormalized,
        3 => ProcessKind::Brownian,
        4 => ProcessKind::TimeReversed,
        c => return Err(Error::Format(format!("unknown process kind {c}"))),
    };
    let n = d.u64()? as usize;
    let seed = d.u64()?;
    let fiber_seed = match d.u8()? {
        0 => None,
        _ => Some(d.u64()?),
    };
    let times = d.f64s()?;
    let count = d.len()?;
    let paths = (0..count).map(|_| d.f64s()).collect::<Result<Vec<_>>>()?;
    d.done()?;
    if paths.iter().any(|p| p.len() != times.len()) {
        return Err(Error::Format("path length differs from the time grid".into()));
    }
    Ok(PathEnsemble {
        kind,
        n,
        times,
        paths,
        seed,
        fiber_seed,
    })
}
