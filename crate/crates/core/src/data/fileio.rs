//! On-disk dataset format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "FCLD" | version u16 = 1 | n u32 | C u8 | H u16 | W u16 | has_labels u8
//! | n*C*H*W pixel bytes (u8, CHW row-major, value/255 on load)
//! | n label u16 values, present iff has_labels = 1
//! ```
//!
//! Pixels are quantized to u8 on save, so save-then-load is lossless exactly
//! for datasets that have already passed through the format once.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::types::{Dataset, Example, Shape};
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"FCLD";
const VERSION: u16 = 1;

/// Write `ds` to `path`, quantizing pixels to u8.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let (c, h, w) = ds.shape();
    if c > u8::MAX as usize || h > u16::MAX as usize || w > u16::MAX as usize {
        return Err(Error::Config(format!(
            "shape {:?} exceeds the file format's limits",
            ds.shape()
        )));
    }
    if ds.len() > u32::MAX as usize {
        return Err(Error::Config(format!(
            "{} examples exceed the file format's u32 count",
            ds.len()
        )));
    }
    let has_labels = ds.len() > 0 && ds.get(0).label.is_some();

    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(ds.len() as u32).to_le_bytes())?;
    out.write_all(&[c as u8])?;
    out.write_all(&(h as u16).to_le_bytes())?;
    out.write_all(&(w as u16).to_le_bytes())?;
    out.write_all(&[has_labels as u8])?;
    let mut buf = Vec::with_capacity(c * h * w);
    for ex in ds.examples() {
        buf.clear();
        buf.extend(ex.pixels.iter().map(|&p| (p * 255.0).round() as u8));
        out.write_all(&buf)?;
    }
    if has_labels {
        for ex in ds.examples() {
            let label = ex.label.expect("dataset invariant: uniform labeling");
            out.write_all(&label.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// A reader that remembers how far it has gotten, for precise parse errors.
struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn take(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Parse {
                    offset: at,
                    msg: format!("truncated while reading {what}"),
                }
            } else {
                Error::Io(e)
            }
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.take(&mut b, what)?;
        Ok(b[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.take(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }
}

/// Read a dataset written by [`save_dataset`].
///
/// For labeled files `n_classes` is inferred as `max(label) + 1`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = Cursor {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };

    let mut magic = [0u8; 4];
    r.take(&mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"FCLD\""),
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let n = r.u32("example count")? as usize;
    let c = r.u8("channel count")? as usize;
    let h = r.u16("height")? as usize;
    let w = r.u16("width")? as usize;
    let has_labels = match r.u8("label flag")? {
        0 => false,
        1 => true,
        other => {
            return Err(Error::Parse {
                offset: r.offset - 1,
                msg: format!("label flag must be 0 or 1, got {other}"),
            })
        }
    };

    let per_example = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .filter(|&v| v > 0)
        .ok_or(Error::Parse {
            offset: 10,
            msg: format!("shape ({c},{h},{w}) is empty or overflows"),
        })?;
    n.checked_mul(per_example).ok_or(Error::Parse {
        offset: 10,
        msg: format!("{n} examples of {per_example} pixels overflow"),
    })?;

    let shape: Shape = (c, h, w);
    let mut pixel_buf = vec![0u8; per_example];
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        r.take(&mut pixel_buf, &format!("pixels of example {i}"))?;
        raw.push(pixel_buf.iter().map(|&b| b as f64 / 255.0).collect());
    }

    let labels = if has_labels {
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            labels.push(r.u16(&format!("label of example {i}"))?);
        }
        Some(labels)
    } else {
        None
    };

    let n_classes = labels
        .as_ref()
        .map(|ls| ls.iter().copied().max().unwrap_or(0) + 1);
    let examples = raw
        .into_iter()
        .enumerate()
        .map(|(i, pixels)| {
            Example::new(pixels, shape, labels.as_ref().map(|ls| ls[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(shape, examples, n_classes)
}
