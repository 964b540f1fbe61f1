//! Frame and vector file formats.
//!
//! * Binary PPM (`P6`, maxval 255) for viewable frames.
//! * `FRAM` raw float container: magic `FRAM`, then little-endian `u32`
//!   width, height, channels, followed by `w·h·c` little-endian `f32` samples.
//! * Vector files: little-endian `u32` dimension followed by any number of
//!   `dim`-long little-endian `f32` rows.

use std::io::{BufRead, Read, Write};

use crate::error::{ensure, Error, Result};
use crate::frame::Frame;
use crate::scalar::Real;

pub const FRAM_MAGIC: &[u8; 4] = b"FRAM";

pub fn write_ppm<T: Real, W: Write>(frame: &Frame<T>, mut w: W) -> Result<()> {
    ensure!(frame.channels == 3 || frame.channels == 1, "ppm needs 1 or 3 channels");
    write!(w, "P6\n{} {}\n255\n", frame.width, frame.height)?;
    let mut bytes = Vec::with_capacity(frame.width * frame.height * 3);
    for px in frame.data.chunks_exact(frame.channels) {
        for c in 0..3 {
            let v = px[c.min(frame.channels - 1)].as_f64();
            bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_ppm<T: Real, R: BufRead>(mut r: R) -> Result<Frame<T>> {
    let mut header = Vec::new();
    // magic, width, height, maxval, each separated by whitespace; '#' comments.
    while header.len() < 4 {
        let mut token = Vec::new();
        loop {
            let mut b = [0u8];
            r.read_exact(&mut b)
                .map_err(|_| Error::Format("truncated ppm header".into()))?;
            match b[0] {
                b'#' if token.is_empty() => {
                    let mut skip = Vec::new();
                    r.read_until(b'\n', &mut skip)?;
                }
                c if c.is_ascii_whitespace() => {
                    if !token.is_empty() {
                        break;
                    }
                }
                c => token.push(c),
            }
        }
        header.push(String::from_utf8_lossy(&token).into_owned());
    }
    if header[0] != "P6" {
        return Err(Error::Format(format!("expected P6 ppm, found magic {:?}", header[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad ppm header field {s:?}")))
    };
    let (width, height, maxval) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit ppm supported, maxval {maxval}")));
    }
    let mut bytes = vec![0u8; width * height * 3];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("truncated ppm pixel data".into()))?;
    let data = bytes.iter().map(|b| T::lit(*b as f64 / 255.0)).collect();
    Frame::new(width, height, 3, data)
}

pub fn write_fram<T: Real, W: Write>(frame: &Frame<T>, mut w: W) -> Result<()> {
    w.write_all(FRAM_MAGIC)?;
    for v in [frame.width, frame.height, frame.channels] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(frame.data.len() * 4);
    for v in &frame.data {
        bytes.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_fram<T: Real, R: Read>(mut r: R) -> Result<Frame<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated FRAM header".into()))?;
    if &magic != FRAM_MAGIC {
        return Err(Error::Format(format!("bad FRAM magic {magic:?}")));
    }
    let width = read_u32(&mut r)? as usize;
    let height = read_u32(&mut r)? as usize;
    let channels = read_u32(&mut r)? as usize;
    let data = read_f32s(&mut r, width * height * channels)?
        .into_iter()
        .map(|v| T::lit(v as f64))
        .collect();
    Frame::new(width, height, channels, data)
}

/// Writes row vectors, all of length `dim`, as a vector file.
pub fn write_vectors<T: Real, W: Write>(dim: usize, rows: &[T], mut w: W) -> Result<()> {
    ensure!(dim > 0 && rows.len() % dim == 0, "vector data is not a multiple of dim {dim}");
    w.write_all(&(dim as u32).to_le_bytes())?;
    let mut bytes = Vec::with_capacity(rows.len() * 4);
    for v in rows {
        bytes.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a vector file, returning `(dim, flat rows)`.
pub fn read_vectors<T: Real, R: Read>(mut r: R) -> Result<(usize, Vec<T>)> {
    let dim = read_u32(&mut r)? as usize;
    if dim == 0 {
        return Err(Error::Format("vector file has dim 0".into()));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % (4 * dim) != 0 {
        return Err(Error::Format(format!(
            "vector payload of {} bytes is not a whole number of {dim}-d rows",
            bytes.len()
        )));
    }
    let rows = bytes
        .chunks_exact(4)
        .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
        .collect();
    Ok((dim, rows))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("unexpected end of file".into()))?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("unexpected end of file".into()))?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("unexpected end of file".into()))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}
