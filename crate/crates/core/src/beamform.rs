//! Delay-and-sum beamforming of plane-wave transmits onto a Cartesian grid.
//!
//! For pixel `(x, z)` and transmit tilt `theta` the two-way delay is
//! `(z cos(theta) + x sin(theta)) / c + sqrt(z^2 + (x - x_e)^2) / c`. The analytic
//! channel signal is sampled there by linear interpolation and summed over the
//! receive aperture `|x_e - x| <= z tan(asin(na))` with a Hann window renormalised
//! per pixel.

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::acoustics::{analytic_signal, AnalyticFrame, ProbeGeometry, RFDataSet};
use crate::error::{Error, Result};

/// Magnitudes below this fraction of the peak are clamped before log compression.
pub const BMODE_FLOOR: f64 = 1e-10;

/// Pixel grid in metres; pixel `(i, j)` sits at `(x_min + i p, z_min + j p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamformGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub pixel_pitch: f64,
}

impl BeamformGrid {
    pub fn new(x_min: f64, x_max: f64, z_min: f64, z_max: f64, pixel_pitch: f64) -> Result<Self> {
        if !(x_max > x_min) || !(z_max > z_min) || !(z_min > 0.0) || !(pixel_pitch > 0.0) {
            return Err(Error::param(format!(
                "bad grid x [{x_min}, {x_max}] z [{z_min}, {z_max}] pitch {pixel_pitch}"
            )));
        }
        Ok(Self { x_min, x_max, z_min, z_max, pixel_pitch })
    }

    /// Quarter-wavelength pixels, the default for phase imaging.
    pub fn quarter_wavelength(
        x_min: f64,
        x_max: f64,
        z_min: f64,
        z_max: f64,
        probe: &ProbeGeometry,
        sound_speed: f64,
    ) -> Result<Self> {
        Self::new(x_min, x_max, z_min, z_max, probe.wavelength(sound_speed) / 4.0)
    }

    pub fn nx(&self) -> usize {
        ((self.x_max - self.x_min) / self.pixel_pitch + 1e-9).floor() as usize + 1
    }

    pub fn nz(&self) -> usize {
        ((self.z_max - self.z_min) / self.pixel_pitch + 1e-9).floor() as usize + 1
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx(), self.nz())
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.pixel_pitch
    }

    #[inline]
    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.pixel_pitch
    }

    /// Nearest pixel indices, clamped to the grid.
    pub fn index_of(&self, x: f64, z: f64) -> (usize, usize) {
        let i = ((x - self.x_min) / self.pixel_pitch).round().clamp(0.0, (self.nx() - 1) as f64);
        let j = ((z - self.z_min) / self.pixel_pitch).round().clamp(0.0, (self.nz() - 1) as f64);
        (i as usize, j as usize)
    }

    pub fn width(&self) -> f64 {
        (self.nx() - 1) as f64 * self.pixel_pitch
    }
}

/// Beamformed complex field, `values[[ix, iz]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    pub values: Array2<Complex64>,
    pub grid: BeamformGrid,
    pub angle: f64,
    /// Pre-delay applied to the RF before beamforming (s).
    pub predelay: f64,
    /// Element contributions that needed samples outside the record.
    pub out_of_range: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Apodization {
    #[default]
    Hann,
    Rectangular,
}

/// Receive aperture: numerical aperture (sine of the half-angle) and window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiveAperture {
    pub na: f64,
    pub apodization: Apodization,
}

impl ReceiveAperture {
    pub fn new(na: f64) -> Result<Self> {
        if !(na > 0.0 && na <= 1.0) {
            return Err(Error::param(format!("numerical aperture must lie in (0, 1], got {na}")));
        }
        Ok(Self { na, apodization: Apodization::Hann })
    }

    /// Half-width of the accepted aperture at depth `z`.
    pub fn half_width(&self, z: f64) -> f64 {
        if self.na >= 1.0 {
            return f64::INFINITY;
        }
        z * self.na / (1.0 - self.na * self.na).sqrt()
    }

    #[inline]
    fn weight(&self, offset: f64, half: f64) -> f64 {
        match self.apodization {
            Apodization::Rectangular => 1.0,
            Apodization::Hann if half.is_infinite() => 1.0,
            Apodization::Hann => 0.5 * (1.0 + (std::f64::consts::PI * offset / half).cos()),
        }
    }
}

/// Delay-and-sum with a Hann-windowed receive aperture of numerical aperture `na`.
pub fn das_beamform(
    frame: &AnalyticFrame,
    probe: &ProbeGeometry,
    grid: &BeamformGrid,
    sound_speed: f64,
    na: f64,
) -> Result<ComplexImage> {
    das_beamform_with(frame, probe, grid, sound_speed, &ReceiveAperture::new(na)?)
}

pub fn das_beamform_with(
    frame: &AnalyticFrame,
    probe: &ProbeGeometry,
    grid: &BeamformGrid,
    sound_speed: f64,
    aperture: &ReceiveAperture,
) -> Result<ComplexImage> {
    if frame.n_elements() != probe.n_elements() {
        return Err(Error::param(format!(
            "frame has {} channels, probe has {} elements",
            frame.n_elements(),
            probe.n_elements()
        )));
    }
    if !(aperture.na > 0.0 && aperture.na <= 1.0) {
        return Err(Error::param(format!("numerical aperture must lie in (0, 1], got {}", aperture.na)));
    }
    if !(sound_speed > 0.0) {
        return Err(Error::param("sound speed must be positive"));
    }
    let (nx, nz) = grid.shape();
    let n_samples = frame.n_samples();
    let fs = frame.sampling_frequency;
    let inv_c = 1.0 / sound_speed;
    let (sin_t, cos_t) = frame.tilt_angle.sin_cos();
    let pitch = probe.pitch();
    let x0 = probe.element_position(0);
    let n_el = probe.n_elements();
    let last = n_samples as f64 - 1.0;
    let out_of_range = AtomicUsize::new(0);

    let mut values = Array2::<Complex64>::zeros((nx, nz));
    values.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(ix, mut column)| {
        let x = grid.x(ix);
        let mut missed = 0usize;
        for (iz, out) in column.iter_mut().enumerate() {
            let z = grid.z(iz);
            let half = aperture.half_width(z);
            let lo = (((x - half - x0) / pitch).ceil().max(0.0)) as usize;
            let hi_f = ((x + half - x0) / pitch).floor();
            if hi_f < 0.0 {
                continue;
            }
            let hi = (hi_f as usize).min(n_el - 1);
            if lo > hi {
                continue;
            }
            let tx = (z * cos_t + x * sin_t) * inv_c - frame.time_origin;
            let mut acc = Complex64::default();
            let mut wsum = 0.0;
            for e in lo..=hi {
                let xe = x0 + e as f64 * pitch;
                let dx = x - xe;
                let w = aperture.weight(dx, half);
                if w <= 0.0 {
                    continue;
                }
                wsum += w;
                let pos = (tx + (z * z + dx * dx).sqrt() * inv_c) * fs;
                if !(pos >= 0.0 && pos <= last) {
                    missed += 1;
                    continue;
                }
                let k = pos.floor() as usize;
                let frac = pos - k as f64;
                let a = frame.samples[[e, k]];
                let v = if k + 1 < n_samples { a + (frame.samples[[e, k + 1]] - a) * frac } else { a };
                acc += v * w;
            }
            if wsum > 0.0 {
                *out = acc / wsum;
            }
        }
        out_of_range.fetch_add(missed, Ordering::Relaxed);
    });

    Ok(ComplexImage {
        values,
        grid: *grid,
        angle: frame.tilt_angle,
        predelay: frame.predelay,
        out_of_range: out_of_range.into_inner(),
    })
}

/// Pixel-wise complex sum of images on one grid.
pub fn compound_coherent(images: &[ComplexImage]) -> Result<ComplexImage> {
    let first = images.first().ok_or_else(|| Error::param("nothing to compound"))?;
    let mut values = first.values.clone();
    for img in &images[1..] {
        if img.grid != first.grid {
            return Err(Error::GridMismatch);
        }
        values += &img.values;
    }
    Ok(ComplexImage {
        values,
        grid: first.grid,
        angle: if images.len() == 1 { first.angle } else { f64::NAN },
        predelay: first.predelay,
        out_of_range: images.iter().map(|i| i.out_of_range).sum(),
    })
}

/// Log-compressed envelope image normalised to 0 dB at its peak.
#[derive(Debug, Clone, PartialEq)]
pub struct BModeImage {
    /// `[ix, iz]`, dB
    pub values: Array2<f64>,
    pub grid: BeamformGrid,
}

/// Standard pulse-echo image: beamform every frame, compound coherently, log-compress.
pub fn bmode(
    dataset: &RFDataSet,
    probe: &ProbeGeometry,
    grid: &BeamformGrid,
    sound_speed: f64,
    na: f64,
) -> Result<BModeImage> {
    if dataset.frames.is_empty() {
        return Err(Error::param("dataset has no frames"));
    }
    let images = dataset
        .frames
        .iter()
        .map(|f| das_beamform(&analytic_signal(f)?, probe, grid, sound_speed, na))
        .collect::<Result<Vec<_>>>()?;
    let compound = compound_coherent(&images)?;
    Ok(log_compress(&compound))
}

pub fn log_compress(image: &ComplexImage) -> BModeImage {
    let peak = image.values.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let values = if peak > 0.0 {
        image.values.mapv(|c| 20.0 * (c.norm() / peak).max(BMODE_FLOOR).log10())
    } else {
        Array2::from_elem(image.values.raw_dim(), 20.0 * BMODE_FLOOR.log10())
    };
    BModeImage { values, grid: image.grid }
}

/// Full width at half maximum of `|image|` along x through the brightest pixel,
/// with linear interpolation of the half-maximum crossings.
pub fn lateral_fwhm(image: &ComplexImage) -> f64 {
    let mag = image.values.mapv(|c| c.norm());
    let (mut bi, mut bj, mut best) = (0, 0, -1.0);
    Zip::indexed(&mag).for_each(|(i, j), &v| {
        if v > best {
            best = v;
            bi = i;
            bj = j;
        }
    });
    let row: Vec<f64> = mag.column(bj).to_vec();
    let half = best / 2.0;
    let mut left = bi as f64;
    for i in (0..bi).rev() {
        if row[i] < half {
            left = i as f64 + (half - row[i]) / (row[i + 1] - row[i]);
            break;
        }
        left = i as f64;
    }
    let mut right = bi as f64;
    for i in bi + 1..row.len() {
        if row[i] < half {
            right = (i - 1) as f64 + (row[i - 1] - half) / (row[i - 1] - row[i]);
            break;
        }
        right = i as f64;
    }
    (right - left) * image.grid.pixel_pitch
}

/// Location of the brightest pixel.
pub fn peak_location(image: &ComplexImage) -> (f64, f64) {
    let (mut bi, mut bj, mut best) = (0, 0, -1.0);
    Zip::indexed(&image.values).for_each(|(i, j), v| {
        let m = v.norm_sqr();
        if m > best {
            best = m;
            bi = i;
            bj = j;
        }
    });
    (image.grid.x(bi), image.grid.z(bj))
}
