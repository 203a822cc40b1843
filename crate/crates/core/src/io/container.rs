//! `USDPCRF1` binary container for RF datasets.
//!
//! Layout (little-endian throughout):
//!
//! | field | type |
//! |---|---|
//! | magic `USDPCRF1` | 8 bytes |
//! | version | u16 |
//! | n_transmits, n_elements, n_samples | u32 each |
//! | sampling frequency (Hz), center frequency (Hz), pitch (m), c0 (m/s), time origin (s) | f64 each |
//! | angles (rad), acquisition order | f64 x n_transmits |
//! | samples `[transmit][element][sample]` | f32 |
//!
//! Samples are stored as `f32`; any dataset read from a container writes back
//! to identical bytes.

use ndarray::Array2;
use std::fs;
use std::path::Path;

use crate::acoustics::{ProbeGeometry, RFDataSet, RFFrame};
use crate::error::{Error, FormatError, Result};

pub const MAGIC: &[u8; 8] = b"USDPCRF1";
pub const VERSION: u16 = 1;
const FIXED_HEADER: usize = 8 + 2 + 3 * 4 + 5 * 8;

pub fn encode_rf(dataset: &RFDataSet) -> Result<Vec<u8>> {
    let first = dataset.frames.first().ok_or_else(|| Error::param("dataset has no frames"))?;
    let (n_el, n_s) = first.samples.dim();
    for f in &dataset.frames {
        if f.samples.dim() != (n_el, n_s) {
            return Err(FormatError::DimensionMismatch("frames differ in shape".into()).into());
        }
        if f.time_origin != first.time_origin || f.sampling_frequency != first.sampling_frequency {
            return Err(FormatError::DimensionMismatch("frames differ in time axis".into()).into());
        }
        if f.predelay != 0.0 {
            return Err(Error::param("container stores raw RF; frame carries a pre-delay"));
        }
    }
    if n_el != dataset.probe.n_elements() {
        return Err(FormatError::DimensionMismatch(format!(
            "{n_el} channels for a {}-element probe",
            dataset.probe.n_elements()
        ))
        .into());
    }
    let n_t = dataset.frames.len();
    let to_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::param("dimension exceeds u32"));
    let mut out = Vec::with_capacity(FIXED_HEADER + 8 * n_t + 4 * n_t * n_el * n_s);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [n_t, n_el, n_s] {
        out.extend_from_slice(&to_u32(v)?.to_le_bytes());
    }
    let p = &dataset.probe;
    for v in [p.sampling_frequency(), p.center_frequency(), p.pitch(), dataset.sound_speed, first.time_origin] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for f in &dataset.frames {
        out.extend_from_slice(&f.tilt_angle.to_le_bytes());
    }
    for f in &dataset.frames {
        for v in f.samples.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_rf(bytes: &[u8]) -> Result<RFDataSet> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(FormatError::BadMagic.into());
    }
    let need = |n: usize| -> Result<()> {
        if bytes.len() < n {
            Err(FormatError::Truncated { expected: n, actual: bytes.len() }.into())
        } else {
            Ok(())
        }
    };
    need(10)?;
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    need(FIXED_HEADER)?;
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (n_t, n_el, n_s) = (u32_at(10), u32_at(14), u32_at(18));
    if n_t == 0 || n_el == 0 || n_s == 0 {
        return Err(FormatError::DimensionMismatch(format!("empty dimension {n_t}x{n_el}x{n_s}")).into());
    }
    let payload = n_t
        .checked_mul(n_el)
        .and_then(|v| v.checked_mul(n_s))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| FormatError::DimensionMismatch("dimensions overflow".into()))?;
    let expected = FIXED_HEADER + 8 * n_t + payload;
    need(expected)?;
    if bytes.len() > expected {
        return Err(FormatError::DimensionMismatch(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        ))
        .into());
    }
    let (fs, fc, pitch, c0, t0) = (f64_at(22), f64_at(30), f64_at(38), f64_at(46), f64_at(54));
    let bad = |e: Error| Error::Format(FormatError::DimensionMismatch(format!("invalid header: {e}")));
    let probe = ProbeGeometry::new(n_el, pitch, fc, fs).map_err(bad)?;
    if !(c0 > 0.0) {
        return Err(FormatError::DimensionMismatch(format!("invalid sound speed {c0}")).into());
    }
    let mut offset = FIXED_HEADER;
    let angles: Vec<f64> = (0..n_t).map(|i| f64_at(offset + 8 * i)).collect();
    offset += 8 * n_t;
    let mut frames = Vec::with_capacity(n_t);
    for &theta in &angles {
        let samples = Array2::from_shape_fn((n_el, n_s), |(e, k)| {
            let o = offset + 4 * (e * n_s + k);
            f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64
        });
        offset += 4 * n_el * n_s;
        frames.push(RFFrame::new(samples, fs, t0, theta).map_err(bad)?);
    }
    Ok(RFDataSet { probe, sound_speed: c0, frames })
}

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn write_rf(dataset: &RFDataSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_rf(dataset)?).map_err(with_path(path))
}

pub fn read_rf(path: impl AsRef<Path>) -> Result<RFDataSet> {
    let path = path.as_ref();
    decode_rf(&fs::read(path).map_err(with_path(path))?)
}
