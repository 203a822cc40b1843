//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Runs without the libtest harness so the criteria execute sequentially and
//! their report lines are always printed. Simulated datasets are built once and
//! shared between criteria.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use usdpc::acoustics::{analytic_signal, Medium, ProbeGeometry, RFDataSet, TransmitPulse};
use usdpc::beamform::{bmode, compound_coherent, das_beamform, lateral_fwhm, BeamformGrid};
use usdpc::cli::cli_main;
use usdpc::dpc::{
    beamform_predelayed, compound, dpc_pair, dpc_pipeline, pair_images, predelay_frame, register_pair,
    shear_offset, CompoundingMode, DPCImage, DpcParams, DELAY_COMPOUND_PERIODS,
};
use usdpc::io::container::{decode_rf, encode_rf};
use usdpc::memory::{predict_shift, validate_memory_effect, WindowGridSpec};
use usdpc::phantom::{InclusionType, Phantom, Preset, Region, Scatterer, SPHERE_DIAMETER, SPHERE_TOP_DEPTH};
use usdpc::simulate::{simulate_rf, simulate_sequence, SimulationConfig};
use usdpc::sos::{excursion, integrate_transverse, linearity_fit};

const SEED: u64 = 7;
const C0: f64 = 1540.0;
const FS: f64 = 21.2e6;
/// Elements used for the DPC criteria (within the 64 to 192 element desk scale).
const DPC_ELEMENTS: usize = 128;
const SMOOTHING: f64 = 0.5e-3;
const BAND_HALF_WIDTH: f64 = 1e-3;

fn angles13() -> Vec<f64> {
    (0..13).map(|i| -0.15 + 0.025 * i as f64).collect()
}

fn dpc_probe() -> ProbeGeometry {
    ProbeGeometry::linear_192().with_elements(DPC_ELEMENTS).unwrap()
}

fn dpc_grid() -> BeamformGrid {
    BeamformGrid::quarter_wavelength(-8e-3, 8e-3, 10e-3, 30e-3, &dpc_probe(), C0).unwrap()
}

fn simulate_preset(preset: Preset, probe: &ProbeGeometry, angles: &[f64]) -> RFDataSet {
    let phantom = preset.spec(SEED).realize().unwrap();
    simulate_sequence(&phantom, probe, &TransmitPulse::for_probe(probe), angles, &SimulationConfig::default()).unwrap()
}

fn homogeneous() -> &'static RFDataSet {
    static DS: OnceLock<RFDataSet> = OnceLock::new();
    DS.get_or_init(|| simulate_preset(Preset::Homogeneous, &dpc_probe(), &angles13()))
}

fn sphere(ty: InclusionType) -> &'static RFDataSet {
    static DS: [OnceLock<RFDataSet>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let i = match ty {
        InclusionType::I => 0,
        InclusionType::II => 1,
        InclusionType::III => 2,
        InclusionType::IV => 3,
    };
    DS[i].get_or_init(|| simulate_preset(Preset::Sphere049(ty), &dpc_probe(), &angles13()))
}

/// Angular and delay compounded, smoothed DPC image of a sphere phantom.
fn sphere_dpc(ty: InclusionType) -> &'static DPCImage {
    static IMG: [OnceLock<DPCImage>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let i = match ty {
        InclusionType::I => 0,
        InclusionType::II => 1,
        InclusionType::III => 2,
        InclusionType::IV => 3,
    };
    IMG[i].get_or_init(|| {
        let mut params = DpcParams::new(dpc_grid());
        params.t_periods = DELAY_COMPOUND_PERIODS.to_vec();
        params.gaussian_sigma = SMOOTHING;
        dpc_pipeline(sphere(ty), &dpc_probe(), C0, &params).unwrap()
    })
}

fn sphere_center_depth() -> f64 {
    SPHERE_TOP_DEPTH + SPHERE_DIAMETER / 2.0
}

/// Variance and RMS over valid pixels.
fn moments(img: &DPCImage) -> (f64, f64) {
    let v: Vec<f64> = img.values.iter().zip(img.valid.iter()).filter(|(_, ok)| **ok).map(|(v, _)| *v).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    (var, rms)
}

// ---------------------------------------------------------------------------

fn c1_memory_effect() -> (bool, String) {
    let probe = ProbeGeometry::linear_192().with_elements(64).unwrap();
    let ds = simulate_preset(Preset::Homogeneous, &probe, &[-0.05, -0.025, 0.0, 0.025, 0.05]);
    let report = validate_memory_effect(&ds, &WindowGridSpec::default()).unwrap();
    assert_eq!(report.summaries.len(), 4);
    let mut ok = true;
    let mut parts = Vec::new();
    for s in &report.summaries {
        let correlated = (s.correlated_fraction * s.tracked as f64).round() as usize;
        ok &= correlated > 0 && s.pass_fraction >= 0.8;
        parts.push(format!(
            "theta {:+.3}: {:.1}% of {} correlated windows within (0.15 mm, 3 samples)",
            s.theta,
            100.0 * s.pass_fraction,
            correlated
        ));
    }
    (ok, parts.join("; "))
}

fn c2_predelay_distance() -> (bool, String) {
    let t = 800.0;
    // pre-delay path: the advance actually applied to a frame
    let probe = ProbeGeometry::linear_192().with_elements(2).unwrap();
    let frame = usdpc::acoustics::RFFrame::new(Array2::zeros((2, 1024)), FS, 0.0, 0.0).unwrap();
    let applied = predelay_frame(&frame, t, 0.0).unwrap().predelay;
    let from_predelay = C0 * applied;
    // shear path: dx = (cT/2)(tan a - tan b)
    let (a, b) = (0.1f64, -0.1f64);
    let from_shear = 2.0 * shear_offset(t, a, b, C0, probe.sampling_frequency()) / (a.tan() - b.tan());
    let err = |v: f64| (v - 58e-3).abs() / 58e-3;
    let ok = err(from_predelay) <= 0.005 && err(from_shear) <= 0.005;
    (
        ok,
        format!(
            "cT = {:.3} mm (pre-delay), {:.3} mm (shear); deviation from 58 mm {:.2}%",
            from_predelay * 1e3,
            from_shear * 1e3,
            100.0 * err(from_predelay).max(err(from_shear))
        ),
    )
}

fn c3_bmode_invisibility() -> (bool, String) {
    let ds = sphere(InclusionType::IV);
    let grid = dpc_grid();
    let img = bmode(ds, &dpc_probe(), &grid, C0, 0.6).unwrap();
    let zc = sphere_center_depth();
    let r = SPHERE_DIAMETER / 2.0;
    let (mut inside, mut ni, mut outside, mut no) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..grid.nx() {
        for j in 0..grid.nz() {
            let d = grid.x(i).hypot(grid.z(j) - zc);
            if d <= 0.8 * r {
                inside += img.values[[i, j]];
                ni += 1;
            } else if d >= 1.3 * r {
                outside += img.values[[i, j]];
                no += 1;
            }
        }
    }
    let (inside, outside) = (inside / ni as f64, outside / no as f64);
    let diff = (inside - outside).abs();
    (diff <= 3.0, format!("interior {inside:.2} dB, background {outside:.2} dB, |difference| {diff:.2} dB (limit 3 dB)"))
}

fn c4_detection_and_inversion() -> (bool, String) {
    let (a, b) = (sphere_dpc(InclusionType::IV), sphere_dpc(InclusionType::I));
    let grid = a.grid;
    let zc = sphere_center_depth();
    let reach = SPHERE_DIAMETER / 2.0 + 2.5e-3;
    let (mut va, mut vb) = (Vec::new(), Vec::new());
    for i in 0..grid.nx() {
        for j in 0..grid.nz() {
            if grid.x(i).abs() <= reach && (grid.z(j) - zc).abs() <= reach && a.valid[[i, j]] && b.valid[[i, j]] {
                va.push(a.values[[i, j]]);
                vb.push(b.values[[i, j]]);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(&va), mean(&vb));
    let cov: f64 = va.iter().zip(&vb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let sa: f64 = va.iter().map(|x| (x - ma).powi(2)).sum();
    let sb: f64 = vb.iter().map(|y| (y - mb).powi(2)).sum();
    let ncc = cov / (sa * sb).sqrt();
    (ncc <= -0.5, format!("NCC(type IV, type I) = {ncc:.3} over {} pixels (limit -0.5)", va.len()))
}

fn c5_linearity() -> (bool, String) {
    let mut points = Vec::new();
    let mut parts = Vec::new();
    for ty in [InclusionType::I, InclusionType::II, InclusionType::III, InclusionType::IV] {
        let profile = integrate_transverse(sphere_dpc(ty), sphere_center_depth(), BAND_HALF_WIDTH).unwrap().detrended();
        let e = excursion(&profile);
        let dsos = ty.sound_speed() - C0;
        points.push((dsos, e));
        parts.push(format!("{ty} ({dsos:+}): {e:+.3}"));
    }
    let fit = linearity_fit(&points).unwrap();
    (
        fit.r_squared >= 0.95,
        format!("excursions rad {}; slope {:.4} rad/(m/s), r^2 {:.4} (limit 0.95)", parts.join(", "), fit.slope, fit.r_squared),
    )
}

fn c6_compounding_snr() -> (bool, String) {
    let ds = homogeneous();
    let probe = dpc_probe();
    let mut params = DpcParams::new(dpc_grid());
    let pairs = pair_images(ds, &probe, C0, &params).unwrap();
    assert_eq!(pairs.len(), 12);
    // the pair of angles 7 and 8 (1-based), as in a single-pair image
    let (single, _) = &pairs[6];
    assert_eq!((single.pairs[0].first, single.pairs[0].second), (6, 7));
    let (v_single, _) = moments(single);
    let (v_angular, _) = moments(&compound(&pairs, CompoundingMode::MeanOfAngles).unwrap());
    params.t_periods = DELAY_COMPOUND_PERIODS.to_vec();
    let (v_delay, _) = moments(&dpc_pipeline(ds, &probe, C0, &params).unwrap());
    let ok = v_angular <= 0.5 * v_single && v_delay <= v_angular;
    (
        ok,
        format!(
            "variance single pair {v_single:.4}, 12-pair {v_angular:.4} (ratio {:.3}, limit 0.5), +4 delays {v_delay:.4}",
            v_angular / v_single
        ),
    )
}

fn c7_null_and_invariants() -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;

    // null: homogeneous phantom, angular and delay compounding, no smoothing
    let ds = homogeneous();
    let probe = dpc_probe();
    let mut params = DpcParams::new(dpc_grid());
    params.t_periods = DELAY_COMPOUND_PERIODS.to_vec();
    let (_, rms) = moments(&dpc_pipeline(ds, &probe, C0, &params).unwrap());
    ok &= rms < 0.1;
    notes.push(format!("null RMS {rms:.4} rad"));

    // pair-swap negation on simulated images
    let images = beamform_predelayed(ds, &probe, C0, 800.0, 0.6, &dpc_grid()).unwrap();
    let angles = ds.angles();
    let dx = shear_offset(800.0, angles[3], angles[4], C0, FS);
    let ab = dpc_pair(&register_pair(&images[3], &images[4], dx).unwrap());
    let ba = dpc_pair(&register_pair(&images[4], &images[3], -dx).unwrap());
    let swap_exact = ab.values.iter().zip(ba.values.iter()).all(|(x, y)| *x == -*y || (x.abs() == PI && *y == *x));
    ok &= swap_exact && ab.valid == ba.valid;
    notes.push(format!("pair swap exact: {swap_exact}"));

    // zero tilt is the identity
    let identity = (0..50).all(|i| {
        let (x0, t0) = (-20e-3 + i as f64 * 0.8e-3, 1e-6 + i as f64 * 1.3e-6);
        predict_shift(x0, t0, 0.0, C0) == (x0, t0)
    });
    ok &= identity;
    notes.push(format!("zero-tilt identity: {identity}"));

    // analytic signal: real part kept, negative frequencies removed
    let frame = &ds.frames[6];
    let an = analytic_signal(frame).unwrap();
    let peak = frame.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let re_err = an.samples.iter().zip(frame.samples.iter()).map(|(a, r)| (a.re - r).abs()).fold(0.0, f64::max) / peak;
    let row: Vec<Complex64> = an.samples.row(64).to_vec();
    let mut spec = row.clone();
    FftPlanner::new().plan_fft_forward(spec.len()).process(&mut spec);
    let n = spec.len();
    let neg: f64 = spec[n / 2 + 1..].iter().map(|c| c.norm_sqr()).sum();
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    let analytic_ok = re_err < 1e-10 && neg / total < 1e-20;
    ok &= analytic_ok;
    notes.push(format!("analytic re err {re_err:.1e}, negative-band energy {:.1e}", neg / total));

    // superposition of scatterer sets
    let small = ProbeGeometry::linear_192().with_elements(32).unwrap();
    let region = Region::new(-5e-3, 5e-3, 1e-3, 25e-3);
    let set = |k: u64| -> Vec<Scatterer> {
        (0..40)
            .map(|i| {
                let h = (i as u64 * 2654435761 + k * 97) % 1000;
                Scatterer { x: -4e-3 + 8e-3 * h as f64 / 1000.0, z: 3e-3 + 20e-3 * ((h * 7) % 1000) as f64 / 1000.0, reflectivity: 1.0 + (h % 13) as f64 / 7.0 }
            })
            .collect()
    };
    let (a, b) = (set(1), set(2));
    let union: Vec<Scatterer> = a.iter().chain(b.iter()).copied().collect();
    let ph = |s: Vec<Scatterer>| Phantom::new(Medium::default(), region, s, Vec::new(), 0).unwrap();
    let config = SimulationConfig { duration: Some(60e-6), ..SimulationConfig::default() };
    let pulse = TransmitPulse::for_probe(&small);
    let fa = simulate_rf(&ph(a), &small, &pulse, 0.05, &config).unwrap();
    let fb = simulate_rf(&ph(b), &small, &pulse, 0.05, &config).unwrap();
    let fu = simulate_rf(&ph(union), &small, &pulse, 0.05, &config).unwrap();
    let scale = fu.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sup_err = (&fa.samples + &fb.samples - &fu.samples).iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
    ok &= sup_err <= 1e-9;
    notes.push(format!("superposition rel err {sup_err:.1e}"));

    // container round trip
    let bytes = encode_rf(ds).unwrap();
    let once = decode_rf(&bytes).unwrap();
    let twice = decode_rf(&encode_rf(&once).unwrap()).unwrap();
    let f32_exact = once.frames.iter().zip(&ds.frames).all(|(r, o)| r.samples.iter().zip(o.samples.iter()).all(|(x, y)| *x == (*y as f32) as f64));
    let round_trip = twice == once && f32_exact && encode_rf(&once).unwrap() == bytes;
    ok &= round_trip;
    notes.push(format!("container round trip exact: {round_trip}"));

    (ok, notes.join("; "))
}

fn c8_na_and_shear() -> (bool, String) {
    let probe = dpc_probe();
    let phantom = Phantom::new(
        Medium::default(),
        Region::new(-10e-3, 10e-3, 1e-3, 30e-3),
        vec![Scatterer { x: 0.0, z: 20e-3, reflectivity: 1.0 }],
        Vec::new(),
        0,
    )
    .unwrap();
    let config = SimulationConfig { duration: Some(60e-6), ..SimulationConfig::default() };
    let ds = simulate_sequence(&phantom, &probe, &TransmitPulse::for_probe(&probe), &angles13(), &config).unwrap();
    let grid = BeamformGrid::quarter_wavelength(-3e-3, 3e-3, 18e-3, 22e-3, &probe, C0).unwrap();
    let analytic: Vec<_> = ds.frames.iter().map(|f| analytic_signal(f).unwrap()).collect();
    let fwhm: Vec<f64> = [0.15, 0.3, 0.6]
        .iter()
        .map(|&na| {
            let images: Vec<_> = analytic.iter().map(|a| das_beamform(a, &probe, &grid, C0, na).unwrap()).collect();
            lateral_fwhm(&compound_coherent(&images).unwrap())
        })
        .collect();
    let monotone = fwhm[1] <= fwhm[0] && fwhm[2] <= fwhm[1];

    let angles = angles13();
    let mut worst = 0.0f64;
    let mut exact = true;
    for n in 0..angles.len() - 2 {
        let s1 = shear_offset(800.0, angles[n], angles[n + 1], C0, FS);
        let s2 = shear_offset(800.0, angles[n], angles[n + 2], C0, FS);
        let tan_ratio = (angles[n].tan() - angles[n + 2].tan()) / (angles[n].tan() - angles[n + 1].tan());
        exact &= (s2 / s1 - tan_ratio).abs() <= 1e-12;
        worst = worst.max((s2 / s1 - 2.0).abs());
    }
    // tan nonlinearity over +-0.15 rad bounds the departure from 2 by ~2%
    let doubles = exact && worst <= 0.02;
    (
        monotone && doubles,
        format!(
            "FWHM at NA 0.15/0.3/0.6: {:.3}/{:.3}/{:.3} mm; m=2 to m=1 shear ratio within {:.4} of 2",
            fwhm[0] * 1e3,
            fwhm[1] * 1e3,
            fwhm[2] * 1e3,
            worst
        ),
    )
}

fn c9_determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 5,
            "phantom": {"preset": "sphere049:III", "region_mm": {"x_min": -7, "x_max": 7, "z_min": 1, "z_max": 55}},
            "probe": {"elements": 64},
            "angles_rad": {"start": -0.05, "stop": 0.05, "count": 5}}"#,
    )
    .unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let c = cfg.to_str().unwrap().to_string();
    let mut codes = Vec::new();
    for run in ["a", "b"] {
        let threads = "1";
        let rf = p(&format!("{run}.rf"));
        codes.push(cli_main(["usdpc", "--threads", threads, "simulate", "--config", &c, "--out", &rf]));
        codes.push(cli_main(["usdpc", "--threads", threads, "bmode", "--rf", &rf, "--out", &p(&format!("{run}.pgm"))]));
        codes.push(cli_main([
            "usdpc", "--threads", threads, "dpc", "--rf", &rf, "--T", "600,800", "--sigma", "0.5", "--z-max-mm", "20",
            "--out", &p(&format!("{run}.csv")),
        ]));
    }
    let same = |a: &str, b: &str| std::fs::read(p(a)).unwrap() == std::fs::read(p(b)).unwrap();
    let files = ["rf", "pgm", "pgm.scale.txt", "csv"];
    let identical: Vec<bool> = files.iter().map(|ext| same(&format!("a.{ext}"), &format!("b.{ext}"))).collect();
    let ok = codes.iter().all(|&c| c == 0) && identical.iter().all(|&v| v);
    (ok, format!("exit codes {codes:?}; identical outputs {:?} for {files:?}", identical))
}

fn main() {
    let criteria: [(&str, fn() -> (bool, String)); 9] = [
        ("C1 memory-effect trajectory law", c1_memory_effect),
        ("C2 pre-delay echo distance", c2_predelay_distance),
        ("C3 B-mode invisibility", c3_bmode_invisibility),
        ("C4 DPC detection and sign inversion", c4_detection_and_inversion),
        ("C5 excursion linearity", c5_linearity),
        ("C6 compounding SNR", c6_compounding_snr),
        ("C7 null and antisymmetry properties", c7_null_and_invariants),
        ("C8 NA and shear scaling", c8_na_and_shear),
        ("C9 determinism", c9_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match panic::catch_unwind(AssertUnwindSafe(run)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        if !ok {
            failures += 1;
        }
        println!("{} {name}: {detail} [{:.1} s]", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
