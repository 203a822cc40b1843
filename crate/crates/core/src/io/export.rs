//! Image export: 16-bit binary PGM with a scaling sidecar, and CSV with axes.
//!
//! Maps are indexed `[ix, iz]`; exported rows run along x, one row per depth.

use ndarray::Array2;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::beamform::BeamformGrid;
use crate::error::{Error, FormatError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm16,
    Csv,
}

impl ImageFormat {
    /// `.csv` selects CSV, anything else PGM.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ImageFormat::Csv,
            _ => ImageFormat::Pgm16,
        }
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm16" | "pgm" => Ok(ImageFormat::Pgm16),
            "csv" => Ok(ImageFormat::Csv),
            _ => Err(Error::param(format!("unknown image format {s:?} (pgm16, csv)"))),
        }
    }
}

fn check_finite(values: &Array2<f64>) -> Result<()> {
    match values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((ix, iz), _)) => Err(Error::NonFinite { ix, iz }),
        None => Ok(()),
    }
}

/// Path of the text file recording the PGM intensity scaling.
pub fn scale_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".scale.txt");
    PathBuf::from(s)
}

/// Linear map of `[min, max]` onto `[0, 65535]`; a constant image maps to zeros.
pub fn pgm16_bytes(values: &Array2<f64>) -> Result<(Vec<u8>, f64, f64)> {
    check_finite(values)?;
    let (nx, nz) = values.dim();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{nx} {nz}\n65535\n").into_bytes();
    out.reserve(2 * nx * nz);
    for iz in 0..nz {
        for ix in 0..nx {
            let level = if max > min { ((values[[ix, iz]] - min) / (max - min) * 65535.0).round() as u16 } else { 0 };
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    Ok((out, min, max))
}

pub fn csv_text(values: &Array2<f64>, grid: &BeamformGrid) -> Result<String> {
    check_finite(values)?;
    let (nx, nz) = values.dim();
    if (nx, nz) != grid.shape() {
        return Err(Error::GridMismatch);
    }
    let mut s = String::from("z_mm\\x_mm");
    for ix in 0..nx {
        let _ = write!(s, ",{}", grid.x(ix) * 1e3);
    }
    s.push('\n');
    for iz in 0..nz {
        let _ = write!(s, "{}", grid.z(iz) * 1e3);
        for ix in 0..nx {
            let _ = write!(s, ",{}", values[[ix, iz]]);
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn export_image(values: &Array2<f64>, grid: &BeamformGrid, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ImageFormat::Pgm16 => {
            if values.dim() != grid.shape() {
                return Err(Error::GridMismatch);
            }
            let (bytes, min, max) = pgm16_bytes(values)?;
            fs::write(path, bytes)?;
            fs::write(
                scale_sidecar(path),
                format!("min {min}\nmax {max}\nlevels 65535\nx_mm {} {}\nz_mm {} {}\npixel_pitch_mm {}\n",
                    grid.x_min * 1e3, grid.x(grid.nx() - 1) * 1e3, grid.z_min * 1e3, grid.z(grid.nz() - 1) * 1e3, grid.pixel_pitch * 1e3),
            )?;
        }
        ImageFormat::Csv => fs::write(path, csv_text(values, grid)?)?,
    }
    Ok(())
}

/// A map re-imported from CSV: values `[ix, iz]` and the axes in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvImage {
    pub values: Array2<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn parse_csv(text: &str) -> Result<CsvImage> {
    let bad = |m: String| Error::Format(FormatError::DimensionMismatch(m));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("not a number: {s:?}")));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty csv".into()))?;
    let x = header.split(',').skip(1).map(|v| num(v).map(|v| v * 1e-3)).collect::<Result<Vec<_>>>()?;
    let mut z = Vec::new();
    let mut rows = Vec::new();
    for line in lines {
        let mut cells = line.split(',');
        z.push(num(cells.next().unwrap_or_default())? * 1e-3);
        let row = cells.map(num).collect::<Result<Vec<_>>>()?;
        if row.len() != x.len() {
            return Err(bad(format!("row {} has {} values, header has {}", z.len(), row.len(), x.len())));
        }
        rows.push(row);
    }
    let values = Array2::from_shape_fn((x.len(), z.len()), |(ix, iz)| rows[iz][ix]);
    Ok(CsvImage { values, x, z })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvImage> {
    parse_csv(&fs::read_to_string(path)?)
}
