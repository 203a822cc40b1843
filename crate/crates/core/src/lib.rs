//! Ultrasound differential phase contrast (DPC) toolkit.
//!
//! The crate covers the full chain from a virtual scattering phantom to a
//! quantitative speed-of-sound readout:
//!
//! * [`acoustics`]: probe geometry, transmit pulse, RF frames and analytic-signal conversion
//! * [`phantom`]: random scatterers, disk-shaped speed-of-sound inclusions, straight-ray delays
//! * [`simulate`]: single-scattering RF synthesis for tilted plane-wave transmits
//! * [`beamform`]: delay-and-sum beamforming, coherent compounding, B-mode
//! * [`dpc`]: RF pre-delay, shear registration, pairwise phase differences, compounding
//! * [`memory`]: speckle tracking against the tilt/translation trajectory law
//! * [`sos`]: transverse integration, excursion and linearity analysis
//! * [`io`]: RF container, image export, run configuration
//! * [`cli`]: the `usdpc` command line
//!
//! All quantities are SI internally (metres, seconds, hertz, m/s). Configuration
//! documents and CLI flags use mm/MHz where noted.

pub mod acoustics;
pub mod beamform;
pub mod cli;
pub mod dpc;
pub mod error;
pub mod io;
pub mod memory;
pub mod phantom;
pub mod simulate;
pub mod sos;

pub use acoustics::{
    analytic_signal, element_positions, pulse_waveform, AnalyticFrame, Medium, ProbeGeometry,
    RFDataSet, RFFrame, TransmitPulse,
};
pub use beamform::{bmode, compound_coherent, das_beamform, BModeImage, BeamformGrid, ComplexImage};
pub use dpc::{
    dpc_pair, dpc_pipeline, gaussian_smooth, predelay_frame, register_pair, shear_offset,
    CompoundingMode, DPCImage, DpcParams,
};
pub use error::{Error, Result};
pub use memory::{predict_shift, track_speckle, validate_memory_effect, SpeckleWindow};
pub use phantom::{chord_length, generate_scatterers, DiskInclusion, Phantom, Region, Scatterer};
pub use simulate::{simulate_rf, simulate_sequence, SimulationConfig};
pub use sos::{excursion, integrate_transverse, linearity_fit, phase_to_delta_sos};
