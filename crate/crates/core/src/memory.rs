//! Speckle tracking between a normal-incidence frame and a tilted frame.
//!
//! Tilting the transmit plane wave by `theta` moves a speckle grain received at
//! `(x0, t0)` to
//!
//! ```text
//! x_theta = x0 + (c t0 / 2) tan(theta)
//! t_theta = (t0 / 2)(cos(theta) + sec(theta)) + (x0 / c) sin(theta)
//! ```
//!
//! [`track_speckle`] measures the actual displacement of rectangular `(x, t)`
//! windows by normalised cross-correlation and compares it to that prediction.

use rayon::prelude::*;
use std::fmt::Write as _;

use crate::acoustics::{ProbeGeometry, RFDataSet, RFFrame};
use crate::error::{Error, Result};

/// Predicted `(x_theta, t_theta)` of a speckle grain seen at `(x0, t0)` for tilt 0.
pub fn predict_shift(x0: f64, t0: f64, theta: f64, sound_speed: f64) -> (f64, f64) {
    let (sin_t, cos_t) = theta.sin_cos();
    let x = x0 + sound_speed * t0 / 2.0 * theta.tan();
    let t = t0 / 2.0 * (cos_t + 1.0 / cos_t) + x0 / sound_speed * sin_t;
    (x, t)
}

/// Rectangle in `(x, t)` channel-data space, given by its centre and extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeckleWindow {
    /// Lateral centre on the array (m).
    pub x0: f64,
    /// Centre time after the transmit trigger (s).
    pub t0: f64,
    pub width: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSettings {
    /// Half-range of the temporal search around the prediction (samples).
    pub search_samples: usize,
    /// Half-range of the lateral search around the prediction (elements).
    pub search_elements: usize,
    pub min_correlation: f64,
    /// Lateral tolerance against the prediction (m).
    pub tolerance_x: f64,
    /// Temporal tolerance against the prediction (sampling periods).
    pub tolerance_samples: f64,
}

impl Default for TrackSettings {
    fn default() -> Self {
        Self {
            search_samples: 10,
            search_elements: 10,
            min_correlation: 0.5,
            tolerance_x: 0.15e-3,
            tolerance_samples: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tracked,
    /// The window (or its predicted position) does not fit in the frame.
    OutOfBounds,
    /// Best correlation sits on the search boundary; no sub-sample estimate.
    PeakOnSearchEdge,
}

impl TrackStatus {
    fn label(self) -> &'static str {
        match self {
            TrackStatus::Tracked => "tracked",
            TrackStatus::OutOfBounds => "out_of_bounds",
            TrackStatus::PeakOnSearchEdge => "edge_peak",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationTrack {
    pub window: SpeckleWindow,
    pub theta: f64,
    /// Measured `(dx m, dt s)`, meaningful when `status` is `Tracked`.
    pub measured: (f64, f64),
    /// Predicted `(dx m, dt s)`.
    pub predicted: (f64, f64),
    /// Peak normalised correlation.
    pub rho: f64,
    pub status: TrackStatus,
}

impl CorrelationTrack {
    /// Tracked, correlated and within tolerance of the prediction.
    pub fn passes(&self, settings: &TrackSettings, sampling_frequency: f64) -> bool {
        self.status == TrackStatus::Tracked
            && self.rho >= settings.min_correlation
            && (self.measured.0 - self.predicted.0).abs() <= settings.tolerance_x
            && ((self.measured.1 - self.predicted.1) * sampling_frequency).abs() <= settings.tolerance_samples
    }
}

pub fn track_speckle(
    reference: &RFFrame,
    tilted: &RFFrame,
    probe: &ProbeGeometry,
    sound_speed: f64,
    windows: &[SpeckleWindow],
) -> Result<Vec<CorrelationTrack>> {
    track_speckle_with(reference, tilted, probe, sound_speed, windows, &TrackSettings::default())
}

pub fn track_speckle_with(
    reference: &RFFrame,
    tilted: &RFFrame,
    probe: &ProbeGeometry,
    sound_speed: f64,
    windows: &[SpeckleWindow],
    settings: &TrackSettings,
) -> Result<Vec<CorrelationTrack>> {
    if reference.samples.dim() != tilted.samples.dim()
        || reference.sampling_frequency != tilted.sampling_frequency
        || reference.time_origin != tilted.time_origin
    {
        return Err(Error::param("frames differ in shape or time axis"));
    }
    if reference.n_elements() != probe.n_elements() {
        return Err(Error::param("frame channel count does not match the probe"));
    }
    let theta = tilted.tilt_angle;
    Ok(windows
        .par_iter()
        .map(|w| track_one(reference, tilted, probe, sound_speed, w, theta, settings))
        .collect())
}

struct Span {
    e0: usize,
    ne: usize,
    k0: usize,
    nk: usize,
}

fn window_span(frame: &RFFrame, probe: &ProbeGeometry, w: &SpeckleWindow) -> Option<Span> {
    let ne = ((w.width / probe.pitch()).round() as usize).max(2);
    let nk = ((w.duration * frame.sampling_frequency).round() as usize).max(2);
    let first_x = probe.element_position(0);
    let e0 = ((w.x0 - first_x) / probe.pitch() - (ne as f64 - 1.0) / 2.0).round();
    let k0 = ((w.t0 - frame.time_origin) * frame.sampling_frequency - (nk as f64 - 1.0) / 2.0).round();
    if e0 < 0.0 || k0 < 0.0 {
        return None;
    }
    let (e0, k0) = (e0 as usize, k0 as usize);
    if e0 + ne > frame.n_elements() || k0 + nk > frame.n_samples() {
        return None;
    }
    Some(Span { e0, ne, k0, nk })
}

fn track_one(
    reference: &RFFrame,
    tilted: &RFFrame,
    probe: &ProbeGeometry,
    c: f64,
    w: &SpeckleWindow,
    theta: f64,
    settings: &TrackSettings,
) -> CorrelationTrack {
    let fs = reference.sampling_frequency;
    let pitch = probe.pitch();
    let mut track = CorrelationTrack {
        window: *w,
        theta,
        measured: (f64::NAN, f64::NAN),
        predicted: (0.0, 0.0),
        rho: f64::NAN,
        status: TrackStatus::OutOfBounds,
    };
    let Some(span) = window_span(reference, probe, w) else { return track };
    // centre of the window actually used
    let x0 = probe.element_position(span.e0) + (span.ne as f64 - 1.0) / 2.0 * pitch;
    let t0 = reference.time_origin + (span.k0 as f64 + (span.nk as f64 - 1.0) / 2.0) / fs;
    let (xp, tp) = predict_shift(x0, t0, theta, c);
    track.predicted = (xp - x0, tp - t0);

    let le = ((xp - x0) / pitch).round() as i64;
    let lk = ((tp - t0) * fs).round() as i64;
    let fits = |de: i64, dk: i64| {
        let e = span.e0 as i64 + de;
        let k = span.k0 as i64 + dk;
        e >= 0 && k >= 0 && e as usize + span.ne <= tilted.n_elements() && k as usize + span.nk <= tilted.n_samples()
    };
    if !fits(le, lk) {
        return track;
    }

    let reference_win = extract(reference, span.e0, span.ne, span.k0, span.nk);
    let (ref_centered, ref_norm) = centered(&reference_win);
    let se = settings.search_elements as i64;
    let sk = settings.search_samples as i64;
    let (ne_lags, nk_lags) = (2 * se + 1, 2 * sk + 1);
    let mut surface = vec![f64::NAN; (ne_lags * nk_lags) as usize];
    let mut best = (f64::NEG_INFINITY, 0i64, 0i64);
    for de in -se..=se {
        for dk in -sk..=sk {
            let (ae, ak) = (le + de, lk + dk);
            if !fits(ae, ak) {
                continue;
            }
            let cand = extract(tilted, (span.e0 as i64 + ae) as usize, span.ne, (span.k0 as i64 + ak) as usize, span.nk);
            let rho = ncc(&ref_centered, ref_norm, &cand);
            surface[((de + se) * nk_lags + dk + sk) as usize] = rho;
            if rho > best.0 {
                best = (rho, de, dk);
            }
        }
    }
    let (rho, de, dk) = best;
    if !rho.is_finite() {
        return track;
    }
    track.rho = rho;
    let at = |de: i64, dk: i64| -> Option<f64> {
        if de < -se || de > se || dk < -sk || dk > sk {
            return None;
        }
        let v = surface[((de + se) * nk_lags + dk + sk) as usize];
        v.is_finite().then_some(v)
    };
    let exact = rho >= 1.0 - 1e-12;
    let refine = |l: Option<f64>, r: Option<f64>| -> Option<f64> {
        let (l, r) = (l?, r?);
        if exact {
            return Some(0.0);
        }
        let denom = l - 2.0 * rho + r;
        Some(if denom < 0.0 { (0.5 * (l - r) / denom).clamp(-0.5, 0.5) } else { 0.0 })
    };
    let fe = refine(at(de - 1, dk), at(de + 1, dk));
    let fk = refine(at(de, dk - 1), at(de, dk + 1));
    let (Some(fe), Some(fk)) = (fe, fk) else {
        track.measured = ((le + de) as f64 * pitch, (lk + dk) as f64 / fs);
        track.status = TrackStatus::PeakOnSearchEdge;
        return track;
    };
    track.measured = (((le + de) as f64 + fe) * pitch, ((lk + dk) as f64 + fk) / fs);
    track.status = TrackStatus::Tracked;
    track
}

fn extract(frame: &RFFrame, e0: usize, ne: usize, k0: usize, nk: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(ne * nk);
    for e in e0..e0 + ne {
        let row = frame.samples.row(e);
        out.extend(row.iter().skip(k0).take(nk));
    }
    out
}

fn centered(v: &[f64]) -> (Vec<f64>, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    (c, norm)
}

/// Zero-mean normalised cross-correlation, clamped to [-1, 1]; 0 for flat windows.
fn ncc(reference: &[f64], ref_norm: f64, candidate: &[f64]) -> f64 {
    let mean = candidate.iter().sum::<f64>() / candidate.len() as f64;
    let (mut cross, mut energy) = (0.0, 0.0);
    for (r, c) in reference.iter().zip(candidate) {
        let d = c - mean;
        cross += r * d;
        energy += d * d;
    }
    let denom = ref_norm * energy.sqrt();
    if denom > 0.0 {
        (cross / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Tiling of the channel data with speckle windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowGridSpec {
    pub width: f64,
    pub duration: f64,
    /// Fractional overlap between neighbouring windows.
    pub overlap: f64,
    /// Central fraction of the frame (laterally and in time) that is tiled.
    pub coverage: f64,
}

impl Default for WindowGridSpec {
    fn default() -> Self {
        Self { width: 3e-3, duration: 3e-6, overlap: 0.5, coverage: 0.8 }
    }
}

/// Windows tiling the central `coverage` of a frame.
pub fn window_grid(frame: &RFFrame, probe: &ProbeGeometry, spec: &WindowGridSpec) -> Vec<SpeckleWindow> {
    let margin = (1.0 - spec.coverage) / 2.0;
    let x_lo = probe.element_position(0) + margin * probe.aperture();
    let x_hi = probe.element_position(probe.n_elements() - 1) - margin * probe.aperture();
    let t_lo = frame.time_origin + margin * frame.duration();
    let t_hi = frame.time_origin + (1.0 - margin) * frame.duration();
    let step_x = spec.width * (1.0 - spec.overlap);
    let step_t = spec.duration * (1.0 - spec.overlap);
    let mut out = Vec::new();
    let mut x = x_lo + spec.width / 2.0;
    while x + spec.width / 2.0 <= x_hi + 1e-12 {
        let mut t = t_lo + spec.duration / 2.0;
        while t + spec.duration / 2.0 <= t_hi + 1e-15 {
            out.push(SpeckleWindow { x0: x, t0: t, width: spec.width, duration: spec.duration });
            t += step_t;
        }
        x += step_x;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleSummary {
    pub theta: f64,
    pub frame_index: usize,
    pub windows: usize,
    /// Windows with a sub-sample estimate.
    pub tracked: usize,
    /// RMS deviation from the prediction over correlated tracked windows (m, s).
    pub rms_dx: f64,
    pub rms_dt: f64,
    pub mean_rho: f64,
    /// Fraction of tracked windows with `rho >= min_correlation`.
    pub correlated_fraction: f64,
    /// Fraction of correlated tracked windows within tolerance of the prediction.
    pub pass_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryReport {
    pub reference_index: usize,
    pub settings: TrackSettings,
    pub summaries: Vec<AngleSummary>,
    pub tracks: Vec<CorrelationTrack>,
}

impl MemoryReport {
    /// One row per window.
    pub fn tracks_csv(&self) -> String {
        let mut s = String::from(
            "theta_rad,x0_mm,t0_us,pred_dx_mm,pred_dt_us,meas_dx_mm,meas_dt_us,rho,status\n",
        );
        for t in &self.tracks {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                t.theta,
                t.window.x0 * 1e3,
                t.window.t0 * 1e6,
                t.predicted.0 * 1e3,
                t.predicted.1 * 1e6,
                t.measured.0 * 1e3,
                t.measured.1 * 1e6,
                t.rho,
                t.status.label()
            );
        }
        s
    }

    /// One row per tilted frame.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "theta_rad,frame,windows,tracked,rms_dx_mm,rms_dt_us,mean_rho,correlated_fraction,pass_fraction\n",
        );
        for a in &self.summaries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                a.theta,
                a.frame_index,
                a.windows,
                a.tracked,
                a.rms_dx * 1e3,
                a.rms_dt * 1e6,
                a.mean_rho,
                a.correlated_fraction,
                a.pass_fraction
            );
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let mut s = format!(
            "memory-effect validation against frame {} (tolerance {:.3} mm, {} samples, rho >= {})\n",
            self.reference_index, self.settings.tolerance_x * 1e3, self.settings.tolerance_samples, self.settings.min_correlation
        );
        for a in &self.summaries {
            let _ = writeln!(
                s,
                "theta {:+.4} rad: {}/{} windows tracked, mean rho {:.3}, {:.1}% correlated, rms dx {:.4} mm, rms dt {:.4} us, pass {:.1}%",
                a.theta,
                a.tracked,
                a.windows,
                a.mean_rho,
                100.0 * a.correlated_fraction,
                a.rms_dx * 1e3,
                a.rms_dt * 1e6,
                100.0 * a.pass_fraction
            );
        }
        s
    }
}

/// Track every frame against the first zero-tilt frame of the dataset.
pub fn validate_memory_effect(dataset: &RFDataSet, spec: &WindowGridSpec) -> Result<MemoryReport> {
    validate_memory_effect_with(dataset, spec, &TrackSettings::default())
}

pub fn validate_memory_effect_with(
    dataset: &RFDataSet,
    spec: &WindowGridSpec,
    settings: &TrackSettings,
) -> Result<MemoryReport> {
    let reference_index =
        dataset.frames.iter().position(|f| f.tilt_angle.abs() < 1e-12).ok_or(Error::MissingReference)?;
    let reference = &dataset.frames[reference_index];
    let windows = window_grid(reference, &dataset.probe, spec);
    let fs = reference.sampling_frequency;
    let mut summaries = Vec::new();
    let mut tracks = Vec::new();
    for (i, frame) in dataset.frames.iter().enumerate() {
        if i == reference_index {
            continue;
        }
        let t = track_speckle_with(reference, frame, &dataset.probe, dataset.sound_speed, &windows, settings)?;
        let tracked: Vec<&CorrelationTrack> = t.iter().filter(|c| c.status == TrackStatus::Tracked).collect();
        let correlated: Vec<&&CorrelationTrack> = tracked.iter().filter(|c| c.rho >= settings.min_correlation).collect();
        let rms = |f: &dyn Fn(&CorrelationTrack) -> f64| {
            if correlated.is_empty() {
                f64::NAN
            } else {
                (correlated.iter().map(|c| f(c).powi(2)).sum::<f64>() / correlated.len() as f64).sqrt()
            }
        };
        let passes = tracked.iter().filter(|c| c.passes(settings, fs)).count();
        summaries.push(AngleSummary {
            theta: frame.tilt_angle,
            frame_index: i,
            windows: t.len(),
            tracked: tracked.len(),
            rms_dx: rms(&|c| c.measured.0 - c.predicted.0),
            rms_dt: rms(&|c| c.measured.1 - c.predicted.1),
            mean_rho: if tracked.is_empty() {
                f64::NAN
            } else {
                tracked.iter().map(|c| c.rho).sum::<f64>() / tracked.len() as f64
            },
            correlated_fraction: if tracked.is_empty() { 0.0 } else { correlated.len() as f64 / tracked.len() as f64 },
            pass_fraction: if correlated.is_empty() { 0.0 } else { passes as f64 / correlated.len() as f64 },
        });
        tracks.extend(t);
    }
    Ok(MemoryReport { reference_index, settings: *settings, summaries, tracks })
}
