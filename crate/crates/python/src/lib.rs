//! Python bindings: `import usdpc_py`.
//!
//! Arrays cross the boundary as nested lists indexed `[x][z]` (images) or
//! `[element][sample]` (RF frames). Lengths are in metres, times in seconds.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use usdpc::acoustics::{ProbeGeometry, RFDataSet, TransmitPulse};
use usdpc::beamform::BeamformGrid;
use usdpc::dpc::{CompoundingMode, DpcParams};
use usdpc::memory::WindowGridSpec;
use usdpc::phantom::{Preset, Region};
use usdpc::simulate::SimulationConfig;
use usdpc::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Format(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows(values: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    values.outer_iter().map(|r| r.to_vec()).collect()
}

/// Linear array geometry.
#[pyclass(name = "Probe", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyProbe {
    inner: ProbeGeometry,
}

#[pymethods]
impl PyProbe {
    #[new]
    #[pyo3(signature = (elements = 192, pitch = 0.23e-3, center_frequency = 5.3e6, sampling_frequency = 21.2e6))]
    fn new(elements: usize, pitch: f64, center_frequency: f64, sampling_frequency: f64) -> PyResult<Self> {
        Ok(Self { inner: ProbeGeometry::new(elements, pitch, center_frequency, sampling_frequency).map_err(py_err)? })
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.inner.n_elements()
    }

    #[getter]
    fn pitch(&self) -> f64 {
        self.inner.pitch()
    }

    #[getter]
    fn center_frequency(&self) -> f64 {
        self.inner.center_frequency()
    }

    #[getter]
    fn sampling_frequency(&self) -> f64 {
        self.inner.sampling_frequency()
    }

    fn element_positions(&self) -> Vec<f64> {
        self.inner.element_positions()
    }

    #[pyo3(signature = (sound_speed = 1540.0))]
    fn wavelength(&self, sound_speed: f64) -> f64 {
        self.inner.wavelength(sound_speed)
    }

    fn __repr__(&self) -> String {
        format!(
            "Probe(elements={}, pitch={}, center_frequency={}, sampling_frequency={})",
            self.inner.n_elements(),
            self.inner.pitch(),
            self.inner.center_frequency(),
            self.inner.sampling_frequency()
        )
    }
}

/// Multi-angle RF dataset.
#[pyclass(name = "RFData")]
struct PyRFData {
    inner: RFDataSet,
}

#[pymethods]
impl PyRFData {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self { inner: usdpc::io::read_rf(path).map_err(py_err)? })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        usdpc::io::write_rf(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn angles(&self) -> Vec<f64> {
        self.inner.angles()
    }

    #[getter]
    fn probe(&self) -> PyProbe {
        PyProbe { inner: self.inner.probe }
    }

    #[getter]
    fn sound_speed(&self) -> f64 {
        self.inner.sound_speed
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    /// Samples of one transmit as `[element][sample]`.
    fn frame(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        let f = self.inner.frames.get(index).ok_or_else(|| PyValueError::new_err("frame index out of range"))?;
        Ok(rows(&f.samples))
    }

    fn __len__(&self) -> usize {
        self.inner.frames.len()
    }
}

fn grid_from(grid: (f64, f64, f64, f64), pitch: Option<f64>, probe: &ProbeGeometry, c: f64) -> PyResult<BeamformGrid> {
    let (x0, x1, z0, z1) = grid;
    match pitch {
        Some(p) => BeamformGrid::new(x0, x1, z0, z1, p),
        None => BeamformGrid::quarter_wavelength(x0, x1, z0, z1, probe, c),
    }
    .map_err(py_err)
}

/// Simulate a named phantom preset (`homogeneous`, `sphere049:IV`, ...).
#[pyfunction]
#[pyo3(signature = (preset, angles, probe = None, seed = 0, region = None, noise_rms = 0.0))]
fn simulate(
    py: Python<'_>,
    preset: &str,
    angles: Vec<f64>,
    probe: Option<PyProbe>,
    seed: u64,
    region: Option<(f64, f64, f64, f64)>,
    noise_rms: f64,
) -> PyResult<PyRFData> {
    let probe = probe.map(|p| p.inner).unwrap_or_else(ProbeGeometry::linear_192);
    let preset: Preset = preset.parse().map_err(py_err)?;
    let mut spec = preset.spec(seed);
    if let Some((x0, x1, z0, z1)) = region {
        spec = spec.with_region(Region::new(x0, x1, z0, z1));
    }
    let config = SimulationConfig { noise_rms, seed, ..SimulationConfig::default() };
    let ds = py
        .detach(|| {
            let phantom = spec.realize()?;
            usdpc::simulate_sequence(&phantom, &probe, &TransmitPulse::for_probe(&probe), &angles, &config)
        })
        .map_err(py_err)?;
    Ok(PyRFData { inner: ds })
}

/// Compounded B-mode image in dB, `[x][z]`.
#[pyfunction]
#[pyo3(signature = (rf, grid, na = 0.6, pitch = None))]
fn bmode(py: Python<'_>, rf: &PyRFData, grid: (f64, f64, f64, f64), na: f64, pitch: Option<f64>) -> PyResult<Vec<Vec<f64>>> {
    let ds = &rf.inner;
    let g = grid_from(grid, pitch, &ds.probe, ds.sound_speed)?;
    let img = py.detach(|| usdpc::bmode(ds, &ds.probe, &g, ds.sound_speed, na)).map_err(py_err)?;
    Ok(rows(&img.values))
}

/// Compounded DPC phase image (rad) `[x][z]` and the mean shear (m).
#[pyfunction]
#[pyo3(signature = (rf, grid, t_periods = vec![800.0], m = 1, na = 0.6, sigma = 0.0, mode = "mean-of-angles", pitch = None))]
#[allow(clippy::too_many_arguments)]
fn dpc(
    py: Python<'_>,
    rf: &PyRFData,
    grid: (f64, f64, f64, f64),
    t_periods: Vec<f64>,
    m: usize,
    na: f64,
    sigma: f64,
    mode: &str,
    pitch: Option<f64>,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let ds = &rf.inner;
    let params = DpcParams {
        t_periods,
        m,
        na,
        grid: grid_from(grid, pitch, &ds.probe, ds.sound_speed)?,
        gaussian_sigma: sigma,
        mode: mode.parse::<CompoundingMode>().map_err(py_err)?,
    };
    let img = py.detach(|| usdpc::dpc_pipeline(ds, &ds.probe, ds.sound_speed, &params)).map_err(py_err)?;
    Ok((rows(&img.values), img.effective_shear().unwrap_or(0.0)))
}

/// Per-angle `(theta, mean_rho, rms_dx, rms_dt, pass_fraction)` against the zero-tilt frame.
#[pyfunction]
fn validate_memory(py: Python<'_>, rf: &PyRFData) -> PyResult<Vec<(f64, f64, f64, f64, f64)>> {
    let report = py.detach(|| usdpc::validate_memory_effect(&rf.inner, &WindowGridSpec::default())).map_err(py_err)?;
    Ok(report.summaries.iter().map(|s| (s.theta, s.mean_rho, s.rms_dx, s.rms_dt, s.pass_fraction)).collect())
}

#[pyfunction]
fn predict_shift(x0: f64, t0: f64, theta: f64, sound_speed: f64) -> (f64, f64) {
    usdpc::predict_shift(x0, t0, theta, sound_speed)
}

#[pyfunction]
fn shear_offset(t_periods: f64, theta_a: f64, theta_b: f64, sound_speed: f64, sampling_frequency: f64) -> f64 {
    usdpc::shear_offset(t_periods, theta_a, theta_b, sound_speed, sampling_frequency)
}

#[pyfunction]
fn phase_to_delta_sos(excursion: f64, chord: f64, frequency: f64, sound_speed: f64) -> PyResult<f64> {
    usdpc::phase_to_delta_sos(excursion, chord, frequency, sound_speed).map_err(py_err)
}

#[pymodule]
fn usdpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProbe>()?;
    m.add_class::<PyRFData>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(bmode, m)?)?;
    m.add_function(wrap_pyfunction!(dpc, m)?)?;
    m.add_function(wrap_pyfunction!(validate_memory, m)?)?;
    m.add_function(wrap_pyfunction!(predict_shift, m)?)?;
    m.add_function(wrap_pyfunction!(shear_offset, m)?)?;
    m.add_function(wrap_pyfunction!(phase_to_delta_sos, m)?)?;
    Ok(())
}
