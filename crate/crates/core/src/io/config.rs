//! JSON run configuration and run manifests.
//!
//! Field names carry their unit (`_mm`, `_mhz`, `_us`, `_rad`); everything is
//! converted to SI on the way in. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::acoustics::{Medium, ProbeGeometry, TransmitPulse};
use crate::beamform::BeamformGrid;
use crate::dpc::{CompoundingMode, DpcParams};
use crate::error::{Error, Result};
use crate::phantom::{DiskInclusion, Phantom, PhantomSpec, Point, Preset, Region};
use crate::simulate::SimulationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub phantom: PhantomConfig,
    pub probe: ProbeConfig,
    pub angles_rad: AnglesConfig,
    pub simulation: SimulationSection,
    pub dpc: DpcSection,
    pub soscal: SoscalSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            phantom: PhantomConfig::default(),
            probe: ProbeConfig::default(),
            angles_rad: AnglesConfig::default(),
            simulation: SimulationSection::default(),
            dpc: DpcSection::default(),
            soscal: SoscalSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionMm {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionConfig {
    pub x_mm: f64,
    pub z_mm: f64,
    pub diameter_mm: f64,
    pub sound_speed: f64,
}

/// A preset (`homogeneous`, `sphere049:IV`, `cylinders049A:II`, ...) with optional
/// overrides, or a fully inline phantom when `preset` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub preset: Option<String>,
    pub region_mm: Option<RegionMm>,
    pub background_sound_speed: Option<f64>,
    pub density_per_mm2: Option<f64>,
    /// Replaces the preset's inclusions.
    pub inclusions: Option<Vec<InclusionConfig>>,
    /// Depth of the sphere top for `sphere049` presets.
    pub sphere_top_mm: Option<f64>,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            preset: Some("homogeneous".into()),
            region_mm: None,
            background_sound_speed: None,
            density_per_mm2: None,
            inclusions: None,
            sphere_top_mm: None,
        }
    }
}

impl PhantomConfig {
    /// Resolve into a phantom description; speckle density defaults to the
    /// minimum for the given centre frequency.
    pub fn to_spec(&self, seed: u64, center_frequency: f64) -> Result<PhantomSpec> {
        let preset = self.preset.as_deref().map(str::parse::<Preset>).transpose()?;
        let mut spec = match preset {
            Some(p) => p.spec(seed),
            None => {
                if self.region_mm.is_none() {
                    return Err(Error::Config("phantom needs either a preset or region_mm".into()));
                }
                PhantomSpec {
                    medium: Medium::default(),
                    region: Region::new(0.0, 0.0, 0.0, 0.0),
                    inclusions: Vec::new(),
                    density: 0.0,
                    seed,
                }
            }
        };
        if let Some(r) = &self.region_mm {
            spec.region = Region::new(r.x_min * 1e-3, r.x_max * 1e-3, r.z_min * 1e-3, r.z_max * 1e-3);
        }
        if let Some(c) = self.background_sound_speed {
            spec.medium = Medium::new(c)?;
        }
        spec.density = match self.density_per_mm2 {
            Some(d) => d * 1e6,
            None => PhantomSpec::speckle_density(spec.medium.sound_speed(), center_frequency),
        };
        if let Some(top) = self.sphere_top_mm {
            if !matches!(preset, Some(Preset::Sphere049(_))) {
                return Err(Error::Config("sphere_top_mm applies to sphere049 presets only".into()));
            }
            for d in &mut spec.inclusions {
                d.center.z = top * 1e-3 + d.radius;
            }
        }
        if let Some(list) = &self.inclusions {
            spec.inclusions = list
                .iter()
                .map(|i| DiskInclusion::new(Point::new(i.x_mm * 1e-3, i.z_mm * 1e-3), i.diameter_mm * 0.5e-3, i.sound_speed))
                .collect::<Result<_>>()?;
        }
        Ok(spec)
    }

    pub fn realize(&self, seed: u64, center_frequency: f64) -> Result<Phantom> {
        self.to_spec(seed, center_frequency)?.realize()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub elements: usize,
    pub pitch_mm: f64,
    pub center_frequency_mhz: f64,
    pub sampling_frequency_mhz: f64,
    pub fractional_bandwidth: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            elements: 192,
            pitch_mm: 0.23,
            center_frequency_mhz: 5.3,
            sampling_frequency_mhz: 21.2,
            fractional_bandwidth: TransmitPulse::DEFAULT_BANDWIDTH,
        }
    }
}

impl ProbeConfig {
    pub fn probe(&self) -> Result<ProbeGeometry> {
        ProbeGeometry::new(
            self.elements,
            self.pitch_mm * 1e-3,
            self.center_frequency_mhz * 1e6,
            self.sampling_frequency_mhz * 1e6,
        )
    }

    pub fn pulse(&self) -> Result<TransmitPulse> {
        TransmitPulse::new(self.center_frequency_mhz * 1e6, self.fractional_bandwidth, 1.0)
    }
}

/// Explicit list, or `count` evenly spaced values from `start` to `stop` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnglesConfig {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Default for AnglesConfig {
    fn default() -> Self {
        AnglesConfig::Range { start: -0.15, stop: 0.15, count: 13 }
    }
}

impl AnglesConfig {
    pub fn angles(&self) -> Result<Vec<f64>> {
        let v = match self {
            AnglesConfig::List(v) => v.clone(),
            AnglesConfig::Range { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (*n - 1) as f64).collect(),
            },
        };
        if v.is_empty() {
            return Err(Error::Config("at least one transmit angle is required".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub duration_us: Option<f64>,
    pub time_origin_us: f64,
    pub spreading: bool,
    pub directivity: bool,
    pub noise_rms: f64,
    pub allow_truncation: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimulationConfig::default();
        Self {
            duration_us: None,
            time_origin_us: 0.0,
            spreading: d.include_spreading,
            directivity: d.include_directivity,
            noise_rms: d.noise_rms,
            allow_truncation: false,
        }
    }
}

impl SimulationSection {
    pub fn config(&self, seed: u64) -> SimulationConfig {
        SimulationConfig {
            duration: self.duration_us.map(|d| d * 1e-6),
            time_origin: self.time_origin_us * 1e-6,
            include_spreading: self.spreading,
            include_directivity: self.directivity,
            noise_rms: self.noise_rms,
            seed,
            allow_truncation: self.allow_truncation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub x_min_mm: f64,
    pub x_max_mm: f64,
    pub z_min_mm: f64,
    pub z_max_mm: f64,
    /// Defaults to a quarter wavelength at the probe centre frequency.
    pub pitch_mm: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { x_min_mm: -10.0, x_max_mm: 10.0, z_min_mm: 10.0, z_max_mm: 30.0, pitch_mm: None }
    }
}

impl GridConfig {
    pub fn grid(&self, probe: &ProbeGeometry, sound_speed: f64) -> Result<BeamformGrid> {
        let (x0, x1, z0, z1) = (self.x_min_mm * 1e-3, self.x_max_mm * 1e-3, self.z_min_mm * 1e-3, self.z_max_mm * 1e-3);
        match self.pitch_mm {
            Some(p) => BeamformGrid::new(x0, x1, z0, z1, p * 1e-3),
            None => BeamformGrid::quarter_wavelength(x0, x1, z0, z1, probe, sound_speed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpcSection {
    pub t_periods: Vec<f64>,
    pub m: usize,
    pub na: f64,
    pub sigma_mm: f64,
    pub mode: String,
    pub grid: GridConfig,
}

impl Default for DpcSection {
    fn default() -> Self {
        Self {
            t_periods: vec![800.0],
            m: 1,
            na: 0.6,
            sigma_mm: 0.0,
            mode: CompoundingMode::MeanOfAngles.to_string(),
            grid: GridConfig::default(),
        }
    }
}

impl DpcSection {
    pub fn params(&self, probe: &ProbeGeometry, sound_speed: f64) -> Result<DpcParams> {
        Ok(DpcParams {
            t_periods: self.t_periods.clone(),
            m: self.m,
            na: self.na,
            grid: self.grid.grid(probe, sound_speed)?,
            gaussian_sigma: self.sigma_mm * 1e-3,
            mode: self.mode.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SoscalSection {
    /// Defaults to the depth of the first inclusion centre.
    pub band_center_mm: Option<f64>,
    pub band_half_width_mm: f64,
    pub detrend: bool,
    pub types: Vec<String>,
}

impl Default for SoscalSection {
    fn default() -> Self {
        Self {
            band_center_mm: None,
            band_half_width_mm: 1.0,
            detrend: true,
            types: ["I", "II", "III", "IV"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub rf: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Path of the manifest written next to an output file.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Record tool version, command, inputs and parameters beside `output`.
pub fn write_manifest(output: &Path, command: &str, inputs: &[&Path], parameters: serde_json::Value) -> Result<()> {
    let manifest = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "output": output.display().to_string(),
        "parameters": parameters,
    });
    fs::write(manifest_path(output), serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::InclusionType;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.angles_rad.angles().unwrap().len(), 13);
        let a = c.angles_rad.angles().unwrap();
        assert!((a[1] - a[0] - 0.025).abs() < 1e-12);
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"sead": 3}"#), Err(Error::Config(_))));
        assert!(RunConfig::from_json(r#"{"probe": {"elements": 64, "pitch": 0.2}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"phantom": {"preset": "homogeneous", "colour": 1}}"#).is_err());
    }

    #[test]
    fn phantom_resolution() {
        let c = RunConfig::from_json(
            r#"{"phantom": {"preset": "sphere049:I", "region_mm": {"x_min": -5, "x_max": 5, "z_min": 1, "z_max": 30}, "sphere_top_mm": 12}}"#,
        )
        .unwrap();
        let s = c.phantom.to_spec(4, 5.3e6).unwrap();
        assert_eq!(s.inclusions[0].sound_speed, InclusionType::I.sound_speed());
        assert!((s.inclusions[0].center.z - 17e-3).abs() < 1e-15);
        assert!((s.region.x_max - 5e-3).abs() < 1e-15);
        assert_eq!(s.seed, 4);

        let inline = PhantomConfig {
            preset: None,
            region_mm: Some(RegionMm { x_min: -4.0, x_max: 4.0, z_min: 1.0, z_max: 20.0 }),
            density_per_mm2: Some(10.0),
            inclusions: Some(vec![InclusionConfig { x_mm: 0.0, z_mm: 10.0, diameter_mm: 4.0, sound_speed: 1600.0 }]),
            ..PhantomConfig::default()
        };
        let p = inline.realize(1, 5.3e6).unwrap();
        assert_eq!(p.scatterers.len(), 10 * 8 * 19);
        assert_eq!(p.inclusions.len(), 1);

        let none = PhantomConfig { preset: None, ..PhantomConfig::default() };
        assert!(matches!(none.to_spec(0, 5.3e6), Err(Error::Config(_))));
        let wrong = PhantomConfig { sphere_top_mm: Some(10.0), ..PhantomConfig::default() };
        assert!(wrong.to_spec(0, 5.3e6).is_err());
    }

    #[test]
    fn dpc_section_converts_units() {
        let c = RunConfig::from_json(r#"{"dpc": {"t_periods": [600, 800], "m": 2, "sigma_mm": 0.5, "mode": "arg-of-mean-product"}}"#).unwrap();
        let probe = c.probe.probe().unwrap();
        let p = c.dpc.params(&probe, 1540.0).unwrap();
        assert_eq!(p.m, 2);
        assert_eq!(p.gaussian_sigma, 0.5e-3);
        assert_eq!(p.mode, CompoundingMode::ArgOfMeanProduct);
        assert!((p.grid.pixel_pitch - 0.0727e-3).abs() < 1e-7);
        assert!(RunConfig::from_json(r#"{"dpc": {"mode": "median"}}"#).unwrap().dpc.params(&probe, 1540.0).is_err());
    }

    #[test]
    fn manifest_is_written_next_to_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.rf");
        write_manifest(&out, "simulate", &[Path::new("cfg.json")], serde_json::json!({"seed": 1})).unwrap();
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest_path(&out)).unwrap()).unwrap();
        assert_eq!(m["command"], "simulate");
        assert_eq!(m["parameters"]["seed"], 1);
    }
}
