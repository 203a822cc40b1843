//! Shared acoustic domain types: probe, pulse, medium, RF frames.
//!
//! Sample `k` of any frame sits at time `time_origin + k / sampling_frequency`
//! relative to the transmit trigger. Frames are stored element-major,
//! `samples[[element, k]]`.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Linear array description. Lengths in metres, frequencies in hertz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeGeometry {
    n_elements: usize,
    pitch: f64,
    center_frequency: f64,
    sampling_frequency: f64,
}

impl ProbeGeometry {
    pub fn new(
        n_elements: usize,
        pitch: f64,
        center_frequency: f64,
        sampling_frequency: f64,
    ) -> Result<Self> {
        if n_elements < 2 {
            return Err(Error::param(format!("probe needs at least 2 elements, got {n_elements}")));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::param(format!("pitch must be positive, got {pitch}")));
        }
        if !(center_frequency > 0.0 && center_frequency.is_finite()) {
            return Err(Error::param("center frequency must be positive"));
        }
        if !(sampling_frequency >= 2.0 * center_frequency) || !sampling_frequency.is_finite() {
            return Err(Error::param(format!(
                "sampling frequency {sampling_frequency} Hz below twice the center frequency"
            )));
        }
        Ok(Self { n_elements, pitch, center_frequency, sampling_frequency })
    }

    /// 192 elements at 0.23 mm pitch, 5.3 MHz center, sampled at 4x the center frequency.
    pub fn linear_192() -> Self {
        Self { n_elements: 192, pitch: 0.23e-3, center_frequency: 5.3e6, sampling_frequency: 21.2e6 }
    }

    /// Same element pitch and frequencies with a different element count.
    pub fn with_elements(self, n_elements: usize) -> Result<Self> {
        Self::new(n_elements, self.pitch, self.center_frequency, self.sampling_frequency)
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn center_frequency(&self) -> f64 {
        self.center_frequency
    }

    pub fn sampling_frequency(&self) -> f64 {
        self.sampling_frequency
    }

    #[inline]
    pub fn element_position(&self, k: usize) -> f64 {
        (k as f64 - (self.n_elements as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn element_positions(&self) -> Vec<f64> {
        (0..self.n_elements).map(|k| self.element_position(k)).collect()
    }

    /// Distance between the outermost element centers.
    pub fn aperture(&self) -> f64 {
        (self.n_elements - 1) as f64 * self.pitch
    }

    pub fn wavelength(&self, sound_speed: f64) -> f64 {
        sound_speed / self.center_frequency
    }
}

/// Lateral element coordinates (m), centered on x = 0.
pub fn element_positions(probe: &ProbeGeometry) -> Vec<f64> {
    probe.element_positions()
}

/// Gaussian-modulated cosine transmit pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitPulse {
    pub center_frequency: f64,
    /// Full -6 dB spectral width divided by the center frequency.
    pub fractional_bandwidth: f64,
    pub amplitude: f64,
}

/// Envelope level below which the pulse is treated as zero.
pub const PULSE_TRUNCATION: f64 = 1e-3;

impl TransmitPulse {
    pub const DEFAULT_BANDWIDTH: f64 = 0.6;

    pub fn new(center_frequency: f64, fractional_bandwidth: f64, amplitude: f64) -> Result<Self> {
        if !(center_frequency > 0.0 && center_frequency.is_finite()) {
            return Err(Error::param("pulse center frequency must be positive"));
        }
        if !(fractional_bandwidth > 0.0 && fractional_bandwidth <= 1.0) {
            return Err(Error::param(format!(
                "fractional bandwidth must lie in (0, 1], got {fractional_bandwidth}"
            )));
        }
        if !amplitude.is_finite() {
            return Err(Error::param("pulse amplitude must be finite"));
        }
        Ok(Self { center_frequency, fractional_bandwidth, amplitude })
    }

    /// Unit-amplitude pulse at the probe center frequency with the default bandwidth.
    pub fn for_probe(probe: &ProbeGeometry) -> Self {
        Self {
            center_frequency: probe.center_frequency(),
            fractional_bandwidth: Self::DEFAULT_BANDWIDTH,
            amplitude: 1.0,
        }
    }

    /// Standard deviation of the Gaussian envelope in seconds.
    ///
    /// A Gaussian envelope `exp(-t^2 / 2 sigma^2)` has spectrum
    /// `exp(-2 pi^2 sigma^2 (f - f0)^2)`, which falls to one half at
    /// `|f - f0| = sqrt(ln 2 / 2) / (pi sigma)`.
    pub fn sigma(&self) -> f64 {
        (2.0 * std::f64::consts::LN_2).sqrt()
            / (PI * self.fractional_bandwidth * self.center_frequency)
    }

    /// Half-duration beyond which the envelope is below [`PULSE_TRUNCATION`].
    pub fn half_duration(&self) -> f64 {
        self.sigma() * (-2.0 * PULSE_TRUNCATION.ln()).sqrt()
    }

    pub fn envelope(&self, t: f64) -> f64 {
        if t.abs() > self.half_duration() {
            return 0.0;
        }
        let s = self.sigma();
        self.amplitude * (-(t * t) / (2.0 * s * s)).exp()
    }

    pub fn waveform(&self, t: f64) -> f64 {
        self.envelope(t) * (2.0 * PI * self.center_frequency * t).cos()
    }
}

pub fn pulse_waveform(pulse: &TransmitPulse, t: f64) -> f64 {
    pulse.waveform(t)
}

/// Homogeneous background medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    sound_speed: f64,
}

impl Medium {
    pub const SOFT_TISSUE: f64 = 1540.0;

    pub fn new(sound_speed: f64) -> Result<Self> {
        if !(sound_speed > 0.0 && sound_speed.is_finite()) {
            return Err(Error::param(format!("sound speed must be positive, got {sound_speed}")));
        }
        Ok(Self { sound_speed })
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }
}

impl Default for Medium {
    fn default() -> Self {
        Self { sound_speed: Self::SOFT_TISSUE }
    }
}

/// Raw channel data for one transmit.
#[derive(Debug, Clone, PartialEq)]
pub struct RFFrame {
    /// `[element, sample]`
    pub samples: Array2<f64>,
    pub sampling_frequency: f64,
    /// Time of sample 0 relative to the transmit trigger (s).
    pub time_origin: f64,
    /// Transmit tilt (rad).
    pub tilt_angle: f64,
    /// Time advance already applied to the samples (s); zero for raw data.
    pub predelay: f64,
}

impl RFFrame {
    pub fn new(
        samples: Array2<f64>,
        sampling_frequency: f64,
        time_origin: f64,
        tilt_angle: f64,
    ) -> Result<Self> {
        if !(time_origin >= 0.0) {
            return Err(Error::param("time origin must be non-negative"));
        }
        if !(sampling_frequency > 0.0) {
            return Err(Error::param("sampling frequency must be positive"));
        }
        Ok(Self { samples, sampling_frequency, time_origin, tilt_angle, predelay: 0.0 })
    }

    pub fn n_elements(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample_time(&self, k: usize) -> f64 {
        self.time_origin + k as f64 / self.sampling_frequency
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.sampling_frequency
    }
}

/// Complex (one-sided spectrum) counterpart of an [`RFFrame`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticFrame {
    pub samples: Array2<Complex64>,
    pub sampling_frequency: f64,
    pub time_origin: f64,
    pub tilt_angle: f64,
    pub predelay: f64,
}

impl AnalyticFrame {
    pub fn n_elements(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }
}

/// One acquisition: a frame per transmit angle, in acquisition order.
#[derive(Debug, Clone, PartialEq)]
pub struct RFDataSet {
    pub probe: ProbeGeometry,
    pub sound_speed: f64,
    pub frames: Vec<RFFrame>,
}

impl RFDataSet {
    pub fn angles(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.tilt_angle).collect()
    }

    pub fn n_samples(&self) -> usize {
        self.frames.first().map_or(0, RFFrame::n_samples)
    }
}

/// Analytic signal of every channel via a full-length one-sided spectral filter.
///
/// The carrier is kept (no baseband demodulation); the real part reproduces
/// the input to rounding error.
pub fn analytic_signal(frame: &RFFrame) -> Result<AnalyticFrame> {
    let n = frame.n_samples();
    if n < 2 {
        return Err(Error::DegenerateFrame(format!(
            "analytic conversion needs at least 2 time samples, got {n}"
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let gain = one_sided_gain(n);
    let scale = 1.0 / n as f64;

    let mut out = Array2::<Complex64>::zeros(frame.samples.raw_dim());
    let mut scratch = vec![Complex64::default(); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
    for (src, mut dst) in frame.samples.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let mut buf: Vec<Complex64> = src.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        forward.process_with_scratch(&mut buf, &mut scratch);
        for (b, g) in buf.iter_mut().zip(&gain) {
            *b *= g * scale;
        }
        inverse.process_with_scratch(&mut buf, &mut scratch);
        for (d, b) in dst.iter_mut().zip(buf) {
            *d = b;
        }
    }
    Ok(AnalyticFrame {
        samples: out,
        sampling_frequency: frame.sampling_frequency,
        time_origin: frame.time_origin,
        tilt_angle: frame.tilt_angle,
        predelay: frame.predelay,
    })
}

/// 1 at DC (and Nyquist for even n), 2 on positive bins, 0 on negative bins.
fn one_sided_gain(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n];
    h[0] = 1.0;
    if n % 2 == 0 {
        h[n / 2] = 1.0;
        h[1..n / 2].iter_mut().for_each(|v| *v = 2.0);
    } else {
        h[1..n.div_ceil(2)].iter_mut().for_each(|v| *v = 2.0);
    }
    h
}
