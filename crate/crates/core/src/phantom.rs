//! Virtual scattering phantoms.
//!
//! A phantom is a 2D imaging plane (x lateral, z depth, z > 0 below the array)
//! filled with random point scatterers, plus disk-shaped inclusions whose only
//! property is a sound speed different from the background. Inclusions carry
//! scatterers at the background density, so they are nearly invisible in B-mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::acoustics::Medium;
use crate::error::{Error, Result};

/// Minimum scatterers per squared wavelength for fully developed speckle.
pub const MIN_SCATTERERS_PER_WAVELENGTH_SQ: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub z: f64,
}

impl Point {
    pub const fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub x: f64,
    pub z: f64,
    pub reflectivity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskInclusion {
    pub center: Point,
    pub radius: f64,
    pub sound_speed: f64,
}

impl DiskInclusion {
    pub fn new(center: Point, radius: f64, sound_speed: f64) -> Result<Self> {
        if !(radius > 0.0) || !(sound_speed > 0.0) {
            return Err(Error::param("inclusion radius and sound speed must be positive"));
        }
        Ok(Self { center, radius, sound_speed })
    }

    fn overlaps(&self, other: &DiskInclusion) -> bool {
        let d = (self.center.x - other.center.x).hypot(self.center.z - other.center.z);
        d < self.radius + other.radius
    }
}

/// Axis-aligned rectangle in the imaging plane (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Region {
    pub fn new(x_min: f64, x_max: f64, z_min: f64, z_max: f64) -> Self {
        Self { x_min, x_max, z_min, z_max }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    fn contains_disk(&self, d: &DiskInclusion) -> bool {
        d.center.x - d.radius >= self.x_min
            && d.center.x + d.radius <= self.x_max
            && d.center.z - d.radius >= self.z_min
            && d.center.z + d.radius <= self.z_max
    }
}

/// Uniformly placed scatterers with zero-mean unit-variance Gaussian reflectivity.
///
/// `density` is in scatterers per square metre; the count is `round(density * area)`.
pub fn generate_scatterers(region: &Region, density: f64, seed: u64) -> Result<Vec<Scatterer>> {
    if !(region.width() > 0.0 && region.height() > 0.0) {
        return Err(Error::param("scatterer region must have positive area"));
    }
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::param(format!("density must be positive, got {density}")));
    }
    let count = (density * region.area()).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let x = rng.random_range(region.x_min..region.x_max);
            let z = rng.random_range(region.z_min..region.z_max);
            let reflectivity: f64 = rng.sample(StandardNormal);
            Scatterer { x, z, reflectivity }
        })
        .collect())
}

/// Length of the part of segment `p0 -> p1` lying inside the disk.
pub fn chord_length(disk: &DiskInclusion, p0: Point, p1: Point) -> f64 {
    // evaluate in a fixed endpoint order so reversal is bit-exact
    let (p0, p1) = if (p0.x, p0.z) <= (p1.x, p1.z) { (p0, p1) } else { (p1, p0) };
    let dx = p1.x - p0.x;
    let dz = p1.z - p0.z;
    let len2 = dx * dx + dz * dz;
    if len2 == 0.0 {
        return 0.0;
    }
    let fx = p0.x - disk.center.x;
    let fz = p0.z - disk.center.z;
    // |f + s d|^2 = r^2, s in [0, 1]
    let b = fx * dx + fz * dz;
    let c = fx * fx + fz * fz - disk.radius * disk.radius;
    let disc = b * b - len2 * c;
    if disc <= 0.0 {
        return 0.0;
    }
    let root = disc.sqrt();
    let s0 = ((-b - root) / len2).max(0.0);
    let s1 = ((-b + root) / len2).min(1.0);
    if s1 <= s0 {
        0.0
    } else {
        (s1 - s0) * len2.sqrt()
    }
}

/// Straight-ray excess travel time through a set of inclusions relative to the background.
pub fn excess_delay(inclusions: &[DiskInclusion], background: f64, p0: Point, p1: Point) -> f64 {
    inclusions
        .iter()
        .map(|d| chord_length(d, p0, p1) * (1.0 / d.sound_speed - 1.0 / background))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub medium: Medium,
    pub region: Region,
    pub scatterers: Vec<Scatterer>,
    pub inclusions: Vec<DiskInclusion>,
    pub seed: u64,
}

impl Phantom {
    pub fn new(
        medium: Medium,
        region: Region,
        scatterers: Vec<Scatterer>,
        inclusions: Vec<DiskInclusion>,
        seed: u64,
    ) -> Result<Self> {
        if !(region.z_min > 0.0) || !(region.width() > 0.0) || !(region.height() > 0.0) {
            return Err(Error::param("phantom region must lie below the array with positive area"));
        }
        if let Some(s) = scatterers.iter().find(|s| !(s.z > 0.0)) {
            return Err(Error::param(format!("scatterer at z = {} is not below the array", s.z)));
        }
        for (i, d) in inclusions.iter().enumerate() {
            if !region.contains_disk(d) {
                return Err(Error::param(format!("inclusion {i} extends outside the phantom region")));
            }
            if inclusions[..i].iter().any(|o| o.overlaps(d)) {
                return Err(Error::param(format!("inclusion {i} overlaps another inclusion")));
            }
        }
        Ok(Self { medium, region, scatterers, inclusions, seed })
    }

    pub fn sound_speed(&self) -> f64 {
        self.medium.sound_speed()
    }

    /// Excess travel time along the straight segment `p0 -> p1`.
    pub fn ray_excess_delay(&self, p0: Point, p1: Point) -> f64 {
        excess_delay(&self.inclusions, self.sound_speed(), p0, p1)
    }

    /// Scatterers per squared wavelength at the given frequency.
    pub fn speckle_density(&self, frequency: f64) -> f64 {
        let lambda = self.sound_speed() / frequency;
        self.scatterers.len() as f64 / self.region.area() * lambda * lambda
    }

    pub fn check_speckle_density(&self, frequency: f64) -> Result<()> {
        let d = self.speckle_density(frequency);
        if d < MIN_SCATTERERS_PER_WAVELENGTH_SQ {
            return Err(Error::param(format!(
                "{d:.2} scatterers per squared wavelength is below {MIN_SCATTERERS_PER_WAVELENGTH_SQ}"
            )));
        }
        Ok(())
    }
}

/// Calibrated inclusion types of the spherical-inclusion phantom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InclusionType {
    I,
    II,
    III,
    IV,
}

impl InclusionType {
    pub const ALL: [InclusionType; 4] =
        [InclusionType::I, InclusionType::II, InclusionType::III, InclusionType::IV];

    /// Nominal sound speed (m/s); manufacturer tolerances are not modelled.
    pub fn sound_speed(self) -> f64 {
        match self {
            InclusionType::I => 1530.0,
            InclusionType::II => 1533.0,
            InclusionType::III => 1552.0,
            InclusionType::IV => 1572.0,
        }
    }
}

impl fmt::Display for InclusionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InclusionType::I => "I",
            InclusionType::II => "II",
            InclusionType::III => "III",
            InclusionType::IV => "IV",
        };
        f.write_str(s)
    }
}

impl FromStr for InclusionType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(InclusionType::I),
            "II" | "2" => Ok(InclusionType::II),
            "III" | "3" => Ok(InclusionType::III),
            "IV" | "4" => Ok(InclusionType::IV),
            _ => Err(Error::Config(format!("unknown inclusion type {s:?}"))),
        }
    }
}

/// Phantom geometry before scatterers are drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub medium: Medium,
    pub region: Region,
    pub inclusions: Vec<DiskInclusion>,
    /// Scatterers per square metre.
    pub density: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Density giving [`MIN_SCATTERERS_PER_WAVELENGTH_SQ`] scatterers per squared wavelength.
    pub fn speckle_density(sound_speed: f64, frequency: f64) -> f64 {
        let lambda = sound_speed / frequency;
        MIN_SCATTERERS_PER_WAVELENGTH_SQ / (lambda * lambda)
    }

    pub fn realize(&self) -> Result<Phantom> {
        let scatterers = generate_scatterers(&self.region, self.density, self.seed)?;
        Phantom::new(self.medium, self.region, scatterers, self.inclusions.clone(), self.seed)
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.region = region;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Depth of the top of the spherical inclusion below the surface.
pub const SPHERE_TOP_DEPTH: f64 = 15e-3;
pub const SPHERE_DIAMETER: f64 = 10e-3;
/// Stepped-cylinder diameters, shallow row left to right; the deep row is reversed.
pub const CYLINDER_DIAMETERS: [f64; 4] = [2.5e-3, 4.1e-3, 6.5e-3, 10.4e-3];
pub const CYLINDER_DEPTHS: [f64; 2] = [30e-3, 60e-3];
const CYLINDER_X: [f64; 4] = [-15e-3, -5e-3, 5e-3, 15e-3];

/// Named phantom presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Homogeneous,
    Sphere049(InclusionType),
    Cylinders049A(InclusionType),
}

impl Preset {
    /// Default geometry, sized for the 192-element probe at 5.3 MHz.
    pub fn spec(self, seed: u64) -> PhantomSpec {
        let medium = Medium::default();
        let density = PhantomSpec::speckle_density(medium.sound_speed(), 5.3e6);
        let (region, inclusions) = match self {
            Preset::Homogeneous => (Region::new(-16e-3, 16e-3, 1e-3, 76e-3), Vec::new()),
            Preset::Sphere049(t) => {
                let r = SPHERE_DIAMETER / 2.0;
                let disk = DiskInclusion {
                    center: Point::new(0.0, SPHERE_TOP_DEPTH + r),
                    radius: r,
                    sound_speed: t.sound_speed(),
                };
                (Region::new(-16e-3, 16e-3, 1e-3, 76e-3), vec![disk])
            }
            Preset::Cylinders049A(t) => {
                let mut disks = Vec::with_capacity(8);
                for (row, &depth) in CYLINDER_DEPTHS.iter().enumerate() {
                    for (i, &x) in CYLINDER_X.iter().enumerate() {
                        let d = if row == 0 { CYLINDER_DIAMETERS[i] } else { CYLINDER_DIAMETERS[3 - i] };
                        disks.push(DiskInclusion {
                            center: Point::new(x, depth),
                            radius: d / 2.0,
                            sound_speed: t.sound_speed(),
                        });
                    }
                }
                (Region::new(-22e-3, 22e-3, 1e-3, 80e-3), disks)
            }
        };
        PhantomSpec { medium, region, inclusions, density, seed }
    }

    pub fn name(self) -> String {
        match self {
            Preset::Homogeneous => "homogeneous".into(),
            Preset::Sphere049(t) => format!("sphere049:{t}"),
            Preset::Cylinders049A(t) => format!("cylinders049A:{t}"),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    /// `homogeneous`, `sphere049[:TYPE]`, `cylinders049A[:TYPE]`; the type defaults to IV.
    fn from_str(s: &str) -> Result<Self> {
        let (base, ty) = match s.split_once(':') {
            Some((b, t)) => (b, t.parse()?),
            None => (s, InclusionType::IV),
        };
        match base {
            "homogeneous" => Ok(Preset::Homogeneous),
            "sphere049" => Ok(Preset::Sphere049(ty)),
            "cylinders049A" => Ok(Preset::Cylinders049A(ty)),
            _ => Err(Error::Config(format!("unknown phantom preset {s:?}"))),
        }
    }
}

/// Every named preset with its default geometry.
pub fn build_standard_phantoms() -> BTreeMap<String, PhantomSpec> {
    let mut out = BTreeMap::new();
    out.insert(Preset::Homogeneous.name(), Preset::Homogeneous.spec(0));
    for t in InclusionType::ALL {
        for p in [Preset::Sphere049(t), Preset::Cylinders049A(t)] {
            out.insert(p.name(), p.spec(0));
        }
    }
    out
}
