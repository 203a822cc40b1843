//! Quantitative readout of DPC images: transverse integration into a phase
//! profile, signed excursion, and linearity against the sound-speed contrast.

use std::f64::consts::PI;

use crate::dpc::DPCImage;
use crate::error::{Error, Result};

/// Integrated phase along x over an axial band.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    /// Lateral positions (m).
    pub x: Vec<f64>,
    /// Integrated phase (rad); zero at the left edge.
    pub phase: Vec<f64>,
    pub band_center: f64,
    pub band_half_width: f64,
}

/// Band-average the phase-gradient image, then integrate along x.
///
/// Each column contributes `I * pixel_pitch / dx_eff`, where `dx_eff` is the mean
/// shear of the pairs that formed the image (trapezoidal rule). The left edge is
/// the integration constant, i.e. background. Columns with no valid pixel in the
/// band count as zero gradient.
pub fn integrate_transverse(image: &DPCImage, band_center: f64, band_half_width: f64) -> Result<PhaseProfile> {
    let shear = image.effective_shear().ok_or(Error::MissingShear)?;
    if shear == 0.0 || !shear.is_finite() {
        return Err(Error::MissingShear);
    }
    let g = &image.grid;
    if !(band_half_width >= 0.0) || band_center - band_half_width < g.z_min - 1e-12 || band_center + band_half_width > g.z(g.nz() - 1) + 1e-12 {
        return Err(Error::param(format!(
            "band {band_center} +- {band_half_width} m is not inside the image depth range"
        )));
    }
    let rows: Vec<usize> = (0..g.nz()).filter(|&j| (g.z(j) - band_center).abs() <= band_half_width + 1e-12).collect();
    if rows.is_empty() {
        return Err(Error::param("integration band contains no pixel rows"));
    }
    let gradient: Vec<f64> = (0..g.nx())
        .map(|i| {
            let (sum, n) = rows.iter().fold((0.0, 0usize), |(s, n), &j| {
                if image.valid[[i, j]] {
                    (s + image.values[[i, j]], n + 1)
                } else {
                    (s, n)
                }
            });
            if n > 0 {
                sum / n as f64
            } else {
                0.0
            }
        })
        .collect();
    let scale = g.pixel_pitch / shear;
    let mut phase = Vec::with_capacity(gradient.len());
    phase.push(0.0);
    for w in gradient.windows(2) {
        let last = *phase.last().unwrap();
        phase.push(last + 0.5 * (w[0] + w[1]) * scale);
    }
    Ok(PhaseProfile {
        x: (0..g.nx()).map(|i| g.x(i)).collect(),
        phase,
        band_center,
        band_half_width,
    })
}

impl PhaseProfile {
    /// Remove the straight line through both end points (both edges become zero).
    pub fn detrended(&self) -> PhaseProfile {
        let n = self.phase.len();
        let mut out = self.clone();
        if n < 2 {
            return out;
        }
        let (x0, x1) = (self.x[0], self.x[n - 1]);
        let (p0, p1) = (self.phase[0], self.phase[n - 1]);
        for (p, &x) in out.phase.iter_mut().zip(&self.x) {
            *p -= p0 + (p1 - p0) * (x - x0) / (x1 - x0);
        }
        out
    }
}

/// Signed value of the largest-magnitude phase in the profile.
pub fn excursion(profile: &PhaseProfile) -> f64 {
    profile.phase.iter().copied().fold(0.0, |best, v| if v.abs() > best.abs() { v } else { best })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearityFit {
    /// `(delta_sos m/s, excursion rad)`
    pub points: Vec<(f64, f64)>,
    /// rad per m/s
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line through `(delta_sos, excursion)` points.
pub fn linearity_fit(points: &[(f64, f64)]) -> Result<LinearityFit> {
    if points.len() < 3 {
        return Err(Error::param(format!("linearity fit needs at least 3 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::param("linearity fit abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Ok(LinearityFit { points: points.to_vec(), slope, intercept, r_squared })
}

/// One-way straight-ray phase of a chord through an inclusion (rad):
/// `2 pi f0 chord (1/c0 - 1/c_inc)`.
///
/// The sign follows the DPC pipeline, whose integrated profiles are positive
/// for inclusions faster than the background.
pub fn forward_phase(chord: f64, frequency: f64, background: f64, inclusion: f64) -> f64 {
    2.0 * PI * frequency * chord * (1.0 / background - 1.0 / inclusion)
}

/// Inverse of [`forward_phase`]: the sound-speed contrast `c_inc - c0` (m/s).
pub fn phase_to_delta_sos(excursion: f64, chord: f64, frequency: f64, background: f64) -> Result<f64> {
    if !(chord > 0.0) {
        return Err(Error::param("chord length must be positive"));
    }
    if !(frequency > 0.0) || !(background > 0.0) {
        return Err(Error::param("frequency and background sound speed must be positive"));
    }
    let slowness = 1.0 / background - excursion / (2.0 * PI * frequency * chord);
    if !(slowness > 0.0) {
        return Err(Error::param(format!(
            "excursion {excursion} rad implies a non-physical inclusion sound speed"
        )));
    }
    Ok(1.0 / slowness - background)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::BeamformGrid;
    use crate::dpc::{CompoundingMode, PairRecord};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn image(values: Array2<f64>, shear: Option<f64>) -> DPCImage {
        let (nx, nz) = values.dim();
        let grid = BeamformGrid::new(-5e-3, -5e-3 + (nx - 1) as f64 * 0.1e-3, 10e-3, 10e-3 + (nz - 1) as f64 * 0.1e-3, 0.1e-3).unwrap();
        DPCImage {
            valid: Array2::from_elem(values.raw_dim(), true),
            values,
            grid,
            pairs: shear.into_iter().map(|s| PairRecord { first: 0, second: 1, t_periods: 800.0, shear: s }).collect(),
            mode: CompoundingMode::MeanOfAngles,
            smoothing_sigma: 0.0,
        }
    }

    #[test]
    fn zero_and_constant_images() {
        let p = integrate_transverse(&image(Array2::zeros((30, 21)), Some(-0.7e-3)), 11e-3, 0.5e-3).unwrap();
        assert!(p.phase.iter().all(|&v| v == 0.0));
        let g = 0.2;
        let dx = 0.5e-3;
        let p = integrate_transverse(&image(Array2::from_elem((30, 21), g), Some(dx)), 11e-3, 1e-3).unwrap();
        assert_eq!(p.phase[0], 0.0);
        for (x, v) in p.x.iter().zip(&p.phase) {
            assert_abs_diff_eq!(*v, g * (x - p.x[0]) / dx, epsilon = 1e-12);
        }
    }

    #[test]
    fn integration_errors() {
        let img = image(Array2::zeros((10, 10)), None);
        assert!(matches!(integrate_transverse(&img, 10.4e-3, 0.2e-3), Err(Error::MissingShear)));
        let img = image(Array2::zeros((10, 10)), Some(1e-3));
        assert!(integrate_transverse(&img, 20e-3, 0.2e-3).is_err());
    }

    #[test]
    fn detrend_zeroes_both_edges() {
        let p = integrate_transverse(&image(Array2::from_elem((30, 5), 0.1), Some(1e-3)), 10.2e-3, 0.1e-3).unwrap();
        let d = p.detrended();
        assert_abs_diff_eq!(d.phase[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(*d.phase.last().unwrap(), 0.0, epsilon = 1e-15);
        assert!(d.phase.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn excursion_examples() {
        let mk = |phase: Vec<f64>| PhaseProfile { x: (0..phase.len()).map(|i| i as f64).collect(), phase, band_center: 0.0, band_half_width: 0.0 };
        assert_eq!(excursion(&mk(vec![0.0; 5])), 0.0);
        assert_eq!(excursion(&mk(vec![0.0, -0.1, -0.4, -0.2, 0.05])), -0.4);
        assert_eq!(excursion(&mk(vec![0.0, 0.1, 0.3, -0.2])), 0.3);
    }

    #[test]
    fn linearity_examples() {
        let f = linearity_fit(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0), (5.0, 11.0)]).unwrap();
        assert_abs_diff_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 1.0, epsilon = 1e-12);
        // closed form: slope = Sxy/Sxx = 2.1/2, r^2 = Sxy^2/(Sxx Syy)
        let f = linearity_fit(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.1)]).unwrap();
        assert_abs_diff_eq!(f.slope, 1.05, epsilon = 1e-12);
        let my = 3.1 / 3.0;
        let syy = my * my + (1.0 - my) * (1.0 - my) + (2.1 - my) * (2.1 - my);
        assert_abs_diff_eq!(f.r_squared, 2.1 * 2.1 / (2.0 * syy), epsilon = 1e-12);
        assert!(f.r_squared > 0.99);
        assert!(linearity_fit(&[(1.0, 0.0), (1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(linearity_fit(&[(0.0, 0.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn phase_model_round_trips() {
        assert_eq!(phase_to_delta_sos(0.0, 10e-3, 5.3e6, 1540.0).unwrap(), 0.0);
        let fast = forward_phase(10e-3, 5.3e6, 1540.0, 1572.0);
        assert_abs_diff_eq!(fast, 4.40, epsilon = 0.005);
        assert_abs_diff_eq!(phase_to_delta_sos(fast, 10e-3, 5.3e6, 1540.0).unwrap(), 32.0, epsilon = 1e-9);
        let slow = forward_phase(10e-3, 5.3e6, 1540.0, 1530.0);
        assert_abs_diff_eq!(slow, -1.41, epsilon = 0.005);
        assert_abs_diff_eq!(phase_to_delta_sos(slow, 10e-3, 5.3e6, 1540.0).unwrap(), -10.0, epsilon = 1e-9);
        assert!(phase_to_delta_sos(1e6, 10e-3, 5.3e6, 1540.0).is_err());
        assert!(phase_to_delta_sos(1.0, 0.0, 5.3e6, 1540.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn inversion_is_identity(c in 1300.0f64..1800.0, chord in 1e-3f64..20e-3, f in 1e6f64..10e6) {
                let phi = forward_phase(chord, f, 1540.0, c);
                let d = phase_to_delta_sos(phi, chord, f, 1540.0).unwrap();
                prop_assert!((d + 1540.0 - c).abs() <= 1e-9 * c);
            }

            #[test]
            fn integration_is_linear(a in prop::collection::vec(-1.0f64..1.0, 40), b in prop::collection::vec(-1.0f64..1.0, 40), s in -2.0f64..2.0) {
                let ia = image(Array2::from_shape_vec((20, 2), a.clone()).unwrap(), Some(0.6e-3));
                let ib = image(Array2::from_shape_vec((20, 2), b.clone()).unwrap(), Some(0.6e-3));
                let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
                let im = image(Array2::from_shape_vec((20, 2), mix).unwrap(), Some(0.6e-3));
                let (pa, pb, pm) = (
                    integrate_transverse(&ia, 10.05e-3, 0.05e-3).unwrap(),
                    integrate_transverse(&ib, 10.05e-3, 0.05e-3).unwrap(),
                    integrate_transverse(&im, 10.05e-3, 0.05e-3).unwrap(),
                );
                for i in 0..20 {
                    prop_assert!((pm.phase[i] - pa.phase[i] - s * pb.phase[i]).abs() < 1e-9);
                }
            }

            #[test]
            fn excursion_is_odd(v in prop::collection::vec(-3.0f64..3.0, 1..50)) {
                let p = PhaseProfile { x: (0..v.len()).map(|i| i as f64).collect(), phase: v.clone(), band_center: 0.0, band_half_width: 0.0 };
                let n = PhaseProfile { phase: v.iter().map(|x| -x).collect(), ..p.clone() };
                prop_assert_eq!(excursion(&n), -excursion(&p));
            }
        }
    }
}
