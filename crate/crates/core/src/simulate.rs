//! Single-scattering RF synthesis for tilted plane-wave transmits.
//!
//! Every scatterer is insonified by the tilted plane wave and re-radiates to every
//! element. Inclusions only perturb travel times along straight rays: the transmit
//! ray runs from the array plane to the scatterer along the transmit direction, the
//! receive ray is the scatterer-to-element segment. Speckle translation under tilt
//! is therefore a property of the data, never imposed.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::acoustics::{ProbeGeometry, RFDataSet, RFFrame, TransmitPulse};
use crate::error::{Error, Result};
use crate::phantom::{excess_delay, Phantom, Point};

/// Reference distance for the 1/sqrt(r) cylindrical spreading factor.
const SPREADING_REFERENCE: f64 = 10e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Record length (s). `None` sizes the record to the latest contribution.
    pub duration: Option<f64>,
    pub time_origin: f64,
    pub include_spreading: bool,
    pub include_directivity: bool,
    pub noise_rms: f64,
    pub seed: u64,
    /// Discard (and count) contributions falling outside the record instead of failing.
    pub allow_truncation: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            duration: None,
            time_origin: 0.0,
            include_spreading: true,
            include_directivity: true,
            noise_rms: 0.0,
            seed: 0,
            allow_truncation: false,
        }
    }
}

/// Per-frame bookkeeping from [`simulate_rf_with_stats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimulationStats {
    /// Pulse samples that fell outside `[0, duration)` and were dropped.
    pub discarded_samples: usize,
}

struct Contribution {
    tx_delay: f64,
    x: f64,
    z: f64,
    reflectivity: f64,
}

pub fn simulate_rf(
    phantom: &Phantom,
    probe: &ProbeGeometry,
    pulse: &TransmitPulse,
    theta: f64,
    config: &SimulationConfig,
) -> Result<RFFrame> {
    simulate_rf_with_stats(phantom, probe, pulse, theta, config).map(|(f, _)| f)
}

pub fn simulate_rf_with_stats(
    phantom: &Phantom,
    probe: &ProbeGeometry,
    pulse: &TransmitPulse,
    theta: f64,
    config: &SimulationConfig,
) -> Result<(RFFrame, SimulationStats)> {
    if !(theta.abs() < PI / 4.0) {
        return Err(Error::param(format!("tilt {theta} rad outside (-pi/4, pi/4)")));
    }
    if !(config.time_origin >= 0.0) {
        return Err(Error::param("time origin must be non-negative"));
    }
    if !(config.noise_rms >= 0.0) {
        return Err(Error::param("noise level must be non-negative"));
    }
    let c = phantom.sound_speed();
    let fs = probe.sampling_frequency();
    let elements = probe.element_positions();
    let half = pulse.half_duration();

    let sources = transmit_sources(phantom, theta);
    let latest = latest_arrival(&sources, &elements, phantom) + half;
    let n_samples = match config.duration {
        Some(d) => {
            if !(d > 0.0) {
                return Err(Error::param("record duration must be positive"));
            }
            if config.time_origin + d < latest && !config.allow_truncation {
                return Err(Error::RecordTooShort { needed: latest - config.time_origin, duration: d });
            }
            (d * fs).ceil() as usize
        }
        None => ((latest - config.time_origin).max(0.0) * fs).ceil() as usize + 1,
    };

    let mut samples = Array2::<f64>::zeros((elements.len(), n_samples));
    let kernel = PulseKernel::new(pulse, fs);
    let discarded: usize = samples
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(elements.par_iter())
        .map(|(mut row, &xe)| {
            let row = row.as_slice_mut().expect("standard layout");
            let mut dropped = 0;
            let element = Point::new(xe, 0.0);
            for s in &sources {
                let dx = xe - s.x;
                let dist = (dx * dx + s.z * s.z).sqrt();
                let mut delay = s.tx_delay + dist / c;
                if !phantom.inclusions.is_empty() {
                    delay += excess_delay(&phantom.inclusions, c, Point::new(s.x, s.z), element);
                }
                let mut weight = s.reflectivity;
                if config.include_spreading {
                    weight *= (SPREADING_REFERENCE / dist).sqrt();
                }
                if config.include_directivity {
                    weight *= s.z / dist;
                }
                dropped += kernel.accumulate(row, delay - config.time_origin, weight);
            }
            dropped
        })
        .sum();

    if config.noise_rms > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(config.seed, theta));
        for v in samples.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *v += config.noise_rms * n;
        }
    }
    if discarded > 0 {
        log::warn!("tilt {theta:.4} rad: {discarded} pulse samples fell outside the record");
    }
    let frame = RFFrame::new(samples, fs, config.time_origin, theta)?;
    Ok((frame, SimulationStats { discarded_samples: discarded }))
}

/// Transmit arrival time at every scatterer, including the straight-ray excess delay
/// from the array plane along the transmit direction.
fn transmit_sources(phantom: &Phantom, theta: f64) -> Vec<Contribution> {
    let c = phantom.sound_speed();
    let (sin_t, cos_t) = theta.sin_cos();
    let tan_t = theta.tan();
    phantom
        .scatterers
        .iter()
        .map(|s| {
            let mut tx_delay = (s.z * cos_t + s.x * sin_t) / c;
            if !phantom.inclusions.is_empty() {
                let entry = Point::new(s.x - s.z * tan_t, 0.0);
                tx_delay += phantom.ray_excess_delay(entry, Point::new(s.x, s.z));
            }
            Contribution { tx_delay, x: s.x, z: s.z, reflectivity: s.reflectivity }
        })
        .collect()
}

/// Upper bound on the latest echo arrival. The farthest element is always an end
/// element; slow inclusions add at most their diameter times the slowness excess.
fn latest_arrival(sources: &[Contribution], elements: &[f64], phantom: &Phantom) -> f64 {
    let c = phantom.sound_speed();
    let slow_bound: f64 = phantom
        .inclusions
        .iter()
        .map(|d| 2.0 * d.radius * (1.0 / d.sound_speed - 1.0 / c).max(0.0))
        .sum();
    let (first, last) = (elements[0], elements[elements.len() - 1]);
    sources
        .iter()
        .map(|s| {
            let far = (first - s.x).hypot(s.z).max((last - s.x).hypot(s.z));
            s.tx_delay + far / c + slow_bound
        })
        .fold(0.0, f64::max)
}

fn noise_seed(seed: u64, theta: f64) -> u64 {
    seed ^ theta.to_bits().rotate_left(29) ^ 0x9E37_79B9_7F4A_7C15
}

/// Samples the pulse at exact (unrounded) delays using stable recurrences:
/// the Gaussian ratio between neighbouring samples changes by a constant factor and
/// the carrier advances by a fixed rotation.
struct PulseKernel {
    fs: f64,
    half: f64,
    amplitude: f64,
    inv_two_sigma2: f64,
    omega: f64,
    /// exp(-2 h^2 / (2 sigma^2))
    ratio_step: f64,
    rot: (f64, f64),
}

impl PulseKernel {
    fn new(pulse: &TransmitPulse, fs: f64) -> Self {
        let s = pulse.sigma();
        let a = 1.0 / (2.0 * s * s);
        let h = 1.0 / fs;
        let omega = 2.0 * PI * pulse.center_frequency;
        Self {
            fs,
            half: pulse.half_duration(),
            amplitude: pulse.amplitude,
            inv_two_sigma2: a,
            omega,
            ratio_step: (-2.0 * a * h * h).exp(),
            rot: ((omega * h).cos(), (omega * h).sin()),
        }
    }

    /// Adds `weight * pulse(t_k - delay)` to `row`; returns the count of dropped samples.
    #[inline]
    fn accumulate(&self, row: &mut [f64], delay: f64, weight: f64) -> usize {
        let n = row.len() as i64;
        let k_lo = ((delay - self.half) * self.fs).ceil() as i64;
        let k_hi = ((delay + self.half) * self.fs).floor() as i64;
        if k_hi < k_lo {
            return 0;
        }
        let start = k_lo.max(0);
        let stop = k_hi.min(n - 1);
        let dropped = ((start - k_lo) + (k_hi - stop)).max(0) as usize;
        if stop < start {
            return (k_hi - k_lo + 1) as usize;
        }
        let h = 1.0 / self.fs;
        let a = self.inv_two_sigma2;
        let dt0 = start as f64 * h - delay;
        let mut g = self.amplitude * weight * (-a * dt0 * dt0).exp();
        let mut ratio = (-a * (2.0 * dt0 * h + h * h)).exp();
        let (mut re, mut im) = ((self.omega * dt0).cos(), (self.omega * dt0).sin());
        let (cr, ci) = self.rot;
        for v in &mut row[start as usize..=stop as usize] {
            *v += g * re;
            g *= ratio;
            ratio *= self.ratio_step;
            let nr = re * cr - im * ci;
            im = re * ci + im * cr;
            re = nr;
        }
        dropped
    }
}

/// One frame per angle from the same phantom (frozen speckle).
pub fn simulate_sequence(
    phantom: &Phantom,
    probe: &ProbeGeometry,
    pulse: &TransmitPulse,
    angles: &[f64],
    config: &SimulationConfig,
) -> Result<RFDataSet> {
    if angles.is_empty() {
        return Err(Error::param("at least one transmit angle is required"));
    }
    // A shared record length keeps every frame on one time axis.
    let mut cfg = config.clone();
    if cfg.duration.is_none() {
        let mut longest = 0.0f64;
        for &theta in angles {
            longest = longest.max(required_duration(phantom, probe, pulse, theta, config.time_origin)?);
        }
        cfg.duration = Some(longest);
    }
    let frames = angles
        .iter()
        .map(|&theta| simulate_rf(phantom, probe, pulse, theta, &cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(RFDataSet { probe: *probe, sound_speed: phantom.sound_speed(), frames })
}

/// Record length (s), a whole number of samples, that holds every contribution for the tilt.
pub fn required_duration(
    phantom: &Phantom,
    probe: &ProbeGeometry,
    pulse: &TransmitPulse,
    theta: f64,
    time_origin: f64,
) -> Result<f64> {
    if !(theta.abs() < PI / 4.0) {
        return Err(Error::param(format!("tilt {theta} rad outside (-pi/4, pi/4)")));
    }
    let fs = probe.sampling_frequency();
    let latest = latest_arrival(&transmit_sources(phantom, theta), &probe.element_positions(), phantom)
        + pulse.half_duration();
    Ok((((latest - time_origin).max(0.0) * fs).ceil() + 1.0) / fs)
}
