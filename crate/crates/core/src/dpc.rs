//! Differential phase contrast from pairs of tilted plane-wave transmits.
//!
//! Per pre-delay `T` (in sampling periods) and transmit pair `(n, n + m)`:
//!
//! 1. advance the raw RF of frame `n` by `T cos(theta_n)` sampling periods,
//! 2. convert to analytic signal and beamform as usual,
//! 3. shift the two images laterally by `-dx/2` and `+dx/2`, where
//!    `dx = (c T / 2)(tan(theta_n) - tan(theta_{n+m}))`,
//! 4. take `arg(B_n conj(B_{n+m}))` pixel by pixel.
//!
//! Pair images are then averaged over `n` and `T`.

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::acoustics::{analytic_signal, ProbeGeometry, RFDataSet, RFFrame};
use crate::beamform::{das_beamform, BeamformGrid, ComplexImage};
use crate::error::{Error, Result};

/// Smoothing width used when smoothing is requested without an explicit value (m).
pub const DEFAULT_SMOOTHING_SIGMA: f64 = 0.5e-3;

/// Pre-delays used for delay compounding, in sampling periods.
pub const DELAY_COMPOUND_PERIODS: [f64; 4] = [600.0, 800.0, 1000.0, 1200.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompoundingMode {
    /// Arithmetic mean of the pair phase images.
    #[default]
    MeanOfAngles,
    /// Phase of the summed pair products; insensitive to wrapping near +-pi.
    ArgOfMeanProduct,
}

impl std::str::FromStr for CompoundingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-of-angles" | "mean" => Ok(CompoundingMode::MeanOfAngles),
            "arg-of-mean-product" | "product" => Ok(CompoundingMode::ArgOfMeanProduct),
            _ => Err(Error::Config(format!("unknown compounding mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for CompoundingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CompoundingMode::MeanOfAngles => "mean-of-angles",
            CompoundingMode::ArgOfMeanProduct => "arg-of-mean-product",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpcParams {
    /// Pre-delays in sampling periods.
    pub t_periods: Vec<f64>,
    /// Angle-index separation of each pair.
    pub m: usize,
    pub na: f64,
    pub grid: BeamformGrid,
    /// Gaussian smoothing width (m); zero disables smoothing.
    pub gaussian_sigma: f64,
    pub mode: CompoundingMode,
}

impl DpcParams {
    /// Single pre-delay of 800 periods, adjacent pairs, NA 0.6, no smoothing.
    pub fn new(grid: BeamformGrid) -> Self {
        Self {
            t_periods: vec![800.0],
            m: 1,
            na: 0.6,
            grid,
            gaussian_sigma: 0.0,
            mode: CompoundingMode::MeanOfAngles,
        }
    }

    fn validate(&self, n_angles: usize) -> Result<()> {
        if self.t_periods.is_empty() {
            return Err(Error::param("at least one pre-delay is required"));
        }
        if let Some(t) = self.t_periods.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::param(format!("pre-delay must be positive, got {t}")));
        }
        if self.m == 0 {
            return Err(Error::param("pair separation m must be at least 1"));
        }
        if !(self.gaussian_sigma >= 0.0) {
            return Err(Error::param("smoothing width must be non-negative"));
        }
        if n_angles <= self.m {
            return Err(Error::EmptyPairSet);
        }
        Ok(())
    }
}

/// Provenance of one pair image inside a (possibly compounded) DPC image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRecord {
    /// Zero-based angle indices.
    pub first: usize,
    pub second: usize,
    pub t_periods: f64,
    /// Lateral shear (m).
    pub shear: f64,
}

/// Phase-difference map in radians, `values[[ix, iz]]` in (-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct DPCImage {
    pub values: Array2<f64>,
    /// Pixels with data in both registered images; invalid pixels hold 0.
    pub valid: Array2<bool>,
    pub grid: BeamformGrid,
    pub pairs: Vec<PairRecord>,
    pub mode: CompoundingMode,
    pub smoothing_sigma: f64,
}

impl DPCImage {
    /// Mean shear over contributing pairs (m), `None` when no pair is recorded.
    pub fn effective_shear(&self) -> Option<f64> {
        if self.pairs.is_empty() {
            return None;
        }
        Some(self.pairs.iter().map(|p| p.shear).sum::<f64>() / self.pairs.len() as f64)
    }

    pub fn t_values(&self) -> Vec<f64> {
        let mut t: Vec<f64> = Vec::new();
        for p in &self.pairs {
            if !t.contains(&p.t_periods) {
                t.push(p.t_periods);
            }
        }
        t
    }
}

/// Advance raw RF by `t_periods * cos(theta)` sampling periods.
///
/// The integer part is an exact index shift; the fractional part is a
/// band-limited (spectral phase ramp) interpolation. Samples shifted in past the
/// end of the record are zero. The time axis metadata is unchanged so that the
/// beamformer treats the advanced data as ordinary echoes; the applied advance is
/// accumulated in `predelay`.
pub fn predelay_frame(frame: &RFFrame, t_periods: f64, theta: f64) -> Result<RFFrame> {
    if !(t_periods >= 0.0 && t_periods.is_finite()) {
        return Err(Error::param(format!("pre-delay must be non-negative, got {t_periods}")));
    }
    let n = frame.n_samples();
    let shift = t_periods * theta.cos();
    if shift >= n as f64 {
        return Err(Error::ShiftExceedsRecord { shift, len: n });
    }
    let whole = shift.floor();
    let frac = shift - whole;
    let whole = whole as usize;

    let mut out = Array2::<f64>::zeros(frame.samples.raw_dim());
    if frac == 0.0 {
        for (src, mut dst) in frame.samples.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            for k in 0..n - whole {
                dst[k] = src[k + whole];
            }
        }
    } else {
        let len = (n + 64).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let ramp: Vec<Complex64> = (0..len)
            .map(|k| {
                if len % 2 == 0 && k == len / 2 {
                    // keep the Nyquist bin real so the output stays real
                    Complex64::new((PI * frac).cos(), 0.0)
                } else {
                    let f = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
                    Complex64::from_polar(1.0, 2.0 * PI * f * frac / len as f64)
                }
            })
            .collect();
        let scale = 1.0 / len as f64;
        let mut buf = vec![Complex64::default(); len];
        for (src, mut dst) in frame.samples.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            buf.iter_mut().for_each(|b| *b = Complex64::default());
            for k in 0..n - whole {
                buf[k] = Complex64::new(src[k + whole], 0.0);
            }
            fwd.process(&mut buf);
            for (b, r) in buf.iter_mut().zip(&ramp) {
                *b *= r * scale;
            }
            inv.process(&mut buf);
            for (d, b) in dst.iter_mut().zip(&buf) {
                *d = b.re;
            }
        }
    }
    Ok(RFFrame {
        samples: out,
        sampling_frequency: frame.sampling_frequency,
        time_origin: frame.time_origin,
        tilt_angle: frame.tilt_angle,
        predelay: frame.predelay + shift / frame.sampling_frequency,
    })
}

/// Lateral shear (m) between the speckle copies of a transmit pair.
pub fn shear_offset(t_periods: f64, theta_a: f64, theta_b: f64, sound_speed: f64, sampling_frequency: f64) -> f64 {
    sound_speed * t_periods / sampling_frequency / 2.0 * (theta_a.tan() - theta_b.tan())
}

/// Two images resampled onto a common lateral registration.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredPair {
    pub first: Array2<Complex64>,
    pub second: Array2<Complex64>,
    pub valid: Array2<bool>,
    pub grid: BeamformGrid,
    pub shear: f64,
}

/// `first(x) <- a(x + dx/2)`, `second(x) <- b(x - dx/2)`, linear interpolation in x.
///
/// With `dx` from [`shear_offset`], speckle seen at `x` under the first angle appears
/// at `x - dx` under the second, so the two resampled copies coincide.
pub fn register_pair(a: &ComplexImage, b: &ComplexImage, shear: f64) -> Result<RegisteredPair> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let grid = a.grid;
    if !(shear.abs() <= grid.width()) {
        return Err(Error::ShearTooLarge { shear, width: grid.width() });
    }
    let (nx, nz) = grid.shape();
    let half = shear / 2.0 / grid.pixel_pitch;
    let mut first = Array2::<Complex64>::zeros((nx, nz));
    let mut second = Array2::<Complex64>::zeros((nx, nz));
    let mut valid = Array2::from_elem((nx, nz), false);
    for ix in 0..nx {
        let sa = lateral_tap(ix as f64 + half, nx);
        let sb = lateral_tap(ix as f64 - half, nx);
        let (Some((ia, fa)), Some((ib, fb))) = (sa, sb) else { continue };
        for iz in 0..nz {
            first[[ix, iz]] = lerp(&a.values, ia, fa, iz);
            second[[ix, iz]] = lerp(&b.values, ib, fb, iz);
            valid[[ix, iz]] = true;
        }
    }
    Ok(RegisteredPair { first, second, valid, grid, shear })
}

/// Integer base and fraction for a fractional index, if it lies on the grid.
fn lateral_tap(pos: f64, n: usize) -> Option<(usize, f64)> {
    const EPS: f64 = 1e-9;
    if pos < -EPS || pos > (n - 1) as f64 + EPS {
        return None;
    }
    let pos = pos.clamp(0.0, (n - 1) as f64);
    let base = pos.floor();
    let frac = pos - base;
    if frac < EPS {
        Some((base as usize, 0.0))
    } else if frac > 1.0 - EPS {
        Some((base as usize + 1, 0.0))
    } else {
        Some((base as usize, frac))
    }
}

#[inline]
fn lerp(values: &Array2<Complex64>, i: usize, frac: f64, iz: usize) -> Complex64 {
    let v = values[[i, iz]];
    if frac == 0.0 {
        v
    } else {
        v + (values[[i + 1, iz]] - v) * frac
    }
}

/// `arg(first * conj(second))` on valid pixels, mapped into (-pi, pi].
pub fn dpc_pair(pair: &RegisteredPair) -> DPCImage {
    let mut values = Array2::<f64>::zeros(pair.first.raw_dim());
    Zip::from(&mut values).and(&pair.first).and(&pair.second).and(&pair.valid).for_each(
        |v, a, b, &ok| {
            if ok {
                *v = principal_arg(a * b.conj());
            }
        },
    );
    DPCImage {
        values,
        valid: pair.valid.clone(),
        grid: pair.grid,
        pairs: Vec::new(),
        mode: CompoundingMode::MeanOfAngles,
        smoothing_sigma: 0.0,
    }
}

#[inline]
fn principal_arg(c: Complex64) -> f64 {
    let a = c.arg();
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Pre-delay, analytic conversion and beamforming of every frame for one `T`.
pub fn beamform_predelayed(
    dataset: &RFDataSet,
    probe: &ProbeGeometry,
    sound_speed: f64,
    t_periods: f64,
    na: f64,
    grid: &BeamformGrid,
) -> Result<Vec<ComplexImage>> {
    dataset
        .frames
        .par_iter()
        .map(|f| {
            let delayed = predelay_frame(f, t_periods, f.tilt_angle)?;
            das_beamform(&analytic_signal(&delayed)?, probe, grid, sound_speed, na)
        })
        .collect()
}

/// Every pair image `(n, n + m)` for every pre-delay, before compounding or smoothing.
pub fn pair_images(
    dataset: &RFDataSet,
    probe: &ProbeGeometry,
    sound_speed: f64,
    params: &DpcParams,
) -> Result<Vec<(DPCImage, RegisteredPair)>> {
    let angles = dataset.angles();
    params.validate(angles.len())?;
    let fs = probe.sampling_frequency();
    let mut out = Vec::new();
    for &t in &params.t_periods {
        let images = beamform_predelayed(dataset, probe, sound_speed, t, params.na, &params.grid)?;
        for n in 0..angles.len() - params.m {
            let k = n + params.m;
            let shear = shear_offset(t, angles[n], angles[k], sound_speed, fs);
            let reg = register_pair(&images[n], &images[k], shear)?;
            let mut img = dpc_pair(&reg);
            img.pairs.push(PairRecord { first: n, second: k, t_periods: t, shear });
            out.push((img, reg));
        }
    }
    Ok(out)
}

/// Full pipeline: pair images compounded over angles and pre-delays, then optionally smoothed.
pub fn dpc_pipeline(
    dataset: &RFDataSet,
    probe: &ProbeGeometry,
    sound_speed: f64,
    params: &DpcParams,
) -> Result<DPCImage> {
    let pairs = pair_images(dataset, probe, sound_speed, params)?;
    let img = compound(&pairs, params.mode)?;
    if params.gaussian_sigma > 0.0 {
        Ok(gaussian_smooth(&img, params.gaussian_sigma))
    } else {
        Ok(img)
    }
}

/// Count-weighted compounding of pair images; pixels invalid in a pair are skipped.
pub fn compound(pairs: &[(DPCImage, RegisteredPair)], mode: CompoundingMode) -> Result<DPCImage> {
    let (first, _) = pairs.first().ok_or(Error::EmptyPairSet)?;
    let grid = first.grid;
    let shape = first.values.raw_dim();
    let mut counts = Array2::<u32>::zeros(shape);
    let mut values = Array2::<f64>::zeros(shape);
    match mode {
        CompoundingMode::MeanOfAngles => {
            for (img, _) in pairs {
                if img.grid != grid {
                    return Err(Error::GridMismatch);
                }
                Zip::from(&mut values).and(&mut counts).and(&img.values).and(&img.valid).for_each(
                    |acc, n, &v, &ok| {
                        if ok {
                            *acc += v;
                            *n += 1;
                        }
                    },
                );
            }
            Zip::from(&mut values).and(&counts).for_each(|v, &n| {
                if n > 0 {
                    *v /= n as f64;
                }
            });
        }
        CompoundingMode::ArgOfMeanProduct => {
            let mut sum = Array2::<Complex64>::zeros(shape);
            for (_, reg) in pairs {
                if reg.grid != grid {
                    return Err(Error::GridMismatch);
                }
                Zip::from(&mut sum)
                    .and(&mut counts)
                    .and(&reg.first)
                    .and(&reg.second)
                    .and(&reg.valid)
                    .for_each(|acc, n, a, b, &ok| {
                        if ok {
                            *acc += a * b.conj();
                            *n += 1;
                        }
                    });
            }
            Zip::from(&mut values).and(&sum).and(&counts).for_each(|v, s, &n| {
                if n > 0 {
                    *v = principal_arg(*s);
                }
            });
        }
    }
    Ok(DPCImage {
        values,
        valid: counts.mapv(|n| n > 0),
        grid,
        pairs: pairs.iter().flat_map(|(img, _)| img.pairs.iter().copied()).collect(),
        mode,
        smoothing_sigma: 0.0,
    })
}

/// Separable Gaussian smoothing with width `sigma` in metres.
///
/// The truncated kernel is renormalised over valid in-bounds pixels, so edges and
/// masked pixels do not bias the result. Invalid pixels stay invalid.
pub fn gaussian_smooth(image: &DPCImage, sigma: f64) -> DPCImage {
    let mut out = image.clone();
    if sigma > 0.0 {
        out.values = smooth_masked(&image.values, Some(&image.valid), sigma / image.grid.pixel_pitch);
        out.smoothing_sigma = sigma;
    }
    out
}

/// Normalised separable Gaussian convolution, `sigma_px` in pixels.
pub fn smooth_masked(values: &Array2<f64>, mask: Option<&Array2<bool>>, sigma_px: f64) -> Array2<f64> {
    if !(sigma_px > 0.0) {
        return values.clone();
    }
    let radius = (4.0 * sigma_px).ceil() as isize;
    let kernel: Vec<f64> =
        (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma_px * sigma_px)).exp()).collect();
    let weight = match mask {
        Some(m) => m.mapv(|b| if b { 1.0 } else { 0.0 }),
        None => Array2::from_elem(values.raw_dim(), 1.0),
    };
    let num = &weight * values;
    let (num, den) = (convolve_axis(&num, &kernel, 0), convolve_axis(&weight, &kernel, 0));
    let (num, den) = (convolve_axis(&num, &kernel, 1), convolve_axis(&den, &kernel, 1));
    let mut out = Array2::<f64>::zeros(values.raw_dim());
    Zip::from(&mut out).and(&num).and(&den).and(&weight).for_each(|o, &n, &d, &w| {
        if w > 0.0 && d > 0.0 {
            *o = n / d;
        }
    });
    out
}

fn convolve_axis(input: &Array2<f64>, kernel: &[f64], axis: usize) -> Array2<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = Array2::<f64>::zeros(input.raw_dim());
    let other = 1 - axis;
    for (src, mut dst) in input.axis_iter(Axis(other)).zip(out.axis_iter_mut(Axis(other))) {
        let n = src.len() as isize;
        for i in 0..n {
            let mut acc = 0.0;
            for (t, &w) in kernel.iter().enumerate() {
                let j = i + t as isize - radius;
                if j >= 0 && j < n {
                    acc += w * src[j as usize];
                }
            }
            dst[i as usize] = acc;
        }
    }
    out
}
