//! Tensor file formats.
//!
//! Text COO: a header line `dims d1 d2 d3 [d4]` followed by one
//! `i j k [l] value` line per nonzero, zero-based. Blank lines and lines
//! starting with `#` are skipped.
//!
//! Binary: magic `CPDT`, `u32` order, `u32` extents, then row-major
//! little-endian `f64` values.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{CooTensor, DenseTensor};

pub const MAGIC: &[u8; 4] = b"CPDT";

pub fn write_coo_text<W: Write>(t: &CooTensor, mut w: W) -> Result<()> {
    write!(w, "dims")?;
    for d in t.dims() {
        write!(w, " {d}")?;
    }
    writeln!(w)?;
    for (idx, v) in t.iter() {
        for i in idx {
            write!(w, "{i} ")?;
        }
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

pub fn read_coo_text<R: Read>(r: R) -> Result<CooTensor> {
    let mut lines = BufReader::new(r)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.trim_start().starts_with('#')));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("empty file".into()))?;
    let header = header?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("dims") {
        return Err(Error::Format(format!("expected `dims` header, found {header:?}")));
    }
    let dims = fields
        .map(|s| s.parse::<usize>().map_err(|e| Error::Format(format!("bad extent {s:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let order = dims.len();
    let mut entries = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != order + 1 {
            return Err(Error::Format(format!(
                "line {}: expected {} fields, found {}",
                lineno + 1,
                order + 1,
                fields.len()
            )));
        }
        let idx = fields[..order]
            .iter()
            .map(|s| s.parse::<usize>().map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1))))
            .collect::<Result<Vec<_>>>()?;
        let v = fields[order]
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        entries.push((idx, v));
    }
    CooTensor::from_unsorted(dims, entries)
}

pub fn write_binary<W: Write>(t: &DenseTensor, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.order() as u32).to_le_bytes())?;
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in t.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<DenseTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let order = u32::from_le_bytes(word) as usize;
    if order == 0 || order > super::MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let mut dims = Vec::with_capacity(order);
    for _ in 0..order {
        r.read_exact(&mut word)?;
        dims.push(u32::from_le_bytes(word) as usize);
    }
    let len: usize = dims.iter().product();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(Error::Format(format!(
            "expected {} value bytes, found {}",
            len * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseTensor::new(dims, values)
}

/// Loads a dense tensor, choosing the format by sniffing the magic bytes.
pub fn load_dense(path: &Path) -> Result<DenseTensor> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        read_binary(bytes.as_slice())
    } else {
        Ok(read_coo_text(bytes.as_slice())?.to_dense())
    }
}

/// Writes `.coo`/`.txt` paths as text COO and everything else as binary.
pub fn save_dense(t: &DenseTensor, path: &Path) -> Result<()> {
    let w = BufWriter::new(fs::File::create(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("coo") | Some("txt") => write_coo_text(&CooTensor::from_dense(t), w),
        _ => write_binary(t, w),
    }
}
