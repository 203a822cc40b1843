//! The `usdpc` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical or
//! validation failure. Every command writes `<out>.manifest.json`.

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use crate::acoustics::RFDataSet;
use crate::beamform::{bmode, BeamformGrid};
use crate::dpc::{dpc_pipeline, CompoundingMode, DpcParams};
use crate::error::{Error, Result};
use crate::io::config::{GridConfig, RunConfig};
use crate::io::export::{export_image, ImageFormat};
use crate::io::{read_rf, write_manifest, write_rf};
use crate::memory::{validate_memory_effect_with, TrackSettings, WindowGridSpec};
use crate::phantom::InclusionType;
use crate::simulate::simulate_sequence;
use crate::sos::{excursion, integrate_transverse, linearity_fit, phase_to_delta_sos, LinearityFit};

#[derive(Debug, Parser)]
#[command(name = "usdpc", version, about = "Ultrasound differential phase contrast toolkit")]
struct Cli {
    /// Random seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-exact reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, default_value_t = GridConfig::default().x_min_mm, allow_hyphen_values = true)]
    x_min_mm: f64,
    #[arg(long, default_value_t = GridConfig::default().x_max_mm, allow_hyphen_values = true)]
    x_max_mm: f64,
    #[arg(long, default_value_t = GridConfig::default().z_min_mm)]
    z_min_mm: f64,
    #[arg(long, default_value_t = GridConfig::default().z_max_mm)]
    z_max_mm: f64,
    /// Pixel pitch; a quarter wavelength when omitted.
    #[arg(long)]
    pitch_mm: Option<f64>,
}

impl GridArgs {
    fn grid(&self, ds: &RFDataSet) -> Result<BeamformGrid> {
        GridConfig {
            x_min_mm: self.x_min_mm,
            x_max_mm: self.x_max_mm,
            z_min_mm: self.z_min_mm,
            z_max_mm: self.z_max_mm,
            pitch_mm: self.pitch_mm,
        }
        .grid(&ds.probe, ds.sound_speed)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an RF dataset from a configuration file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compounded B-mode image (dB).
    Bmode {
        #[arg(long)]
        rf: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        na: f64,
        #[command(flatten)]
        grid: GridArgs,
        /// pgm16 or csv; inferred from the output extension when omitted.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compounded DPC phase image (rad).
    Dpc {
        #[arg(long)]
        rf: PathBuf,
        /// Pre-delays in sampling periods, comma separated.
        #[arg(long = "T", value_delimiter = ',', default_value = "800")]
        t_periods: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 0.6)]
        na: f64,
        /// Gaussian smoothing width in mm; 0 disables.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// mean-of-angles or arg-of-mean-product.
        #[arg(long, default_value = "mean-of-angles")]
        mode: String,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Speckle-tracking validation of the tilt trajectory law.
    Memory {
        #[arg(long)]
        rf: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        window_mm: f64,
        #[arg(long, default_value_t = 3.0)]
        window_us: f64,
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
        #[arg(long, default_value_t = 0.8)]
        coverage: f64,
        /// Per-window CSV; the per-angle summary goes to `<out>.summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the inclusion types and tabulate DPC excursion against sound-speed contrast.
    Soscal {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let result = match cli.threads {
        Some(0) => Err(Error::param("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Error::param(format!("thread pool: {e}"))),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("usdpc: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Format(_) | Error::Io(_) | Error::Config(_) => 2,
        _ => 3,
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { config, out } => simulate_cmd(cli, config, out.as_deref()),
        Command::Bmode { rf, na, grid, format, out } => {
            let ds = read_rf(rf)?;
            let g = grid.grid(&ds)?;
            let img = bmode(&ds, &ds.probe, &g, ds.sound_speed, *na)?;
            let fmt = image_format(format.as_deref(), out)?;
            export_image(&img.values, &g, out, fmt)?;
            write_manifest(out, "bmode", &[rf], json!({ "na": na, "grid": grid_json(&g), "format": format!("{fmt:?}"), "seed": cli.seed }))
        }
        Command::Dpc { rf, t_periods, m, na, sigma, mode, grid, format, out } => {
            let ds = read_rf(rf)?;
            let params = DpcParams {
                t_periods: t_periods.clone(),
                m: *m,
                na: *na,
                grid: grid.grid(&ds)?,
                gaussian_sigma: sigma * 1e-3,
                mode: mode.parse::<CompoundingMode>()?,
            };
            let img = dpc_pipeline(&ds, &ds.probe, ds.sound_speed, &params)?;
            log::info!("compounded {} pair images, mean shear {:.4} mm", img.pairs.len(), img.effective_shear().unwrap_or(0.0) * 1e3);
            let fmt = image_format(format.as_deref(), out)?;
            export_image(&img.values, &params.grid, out, fmt)?;
            let pairs: Vec<_> = img.pairs.iter().map(|p| json!([p.first, p.second, p.t_periods, p.shear])).collect();
            write_manifest(
                out,
                "dpc",
                &[rf],
                json!({
                    "T": t_periods, "m": m, "na": na, "sigma_mm": sigma, "mode": params.mode.to_string(),
                    "grid": grid_json(&params.grid), "format": format!("{fmt:?}"), "seed": cli.seed,
                    "pairs": pairs,
                }),
            )
        }
        Command::Memory { rf, window_mm, window_us, overlap, coverage, out } => {
            let ds = read_rf(rf)?;
            let spec = WindowGridSpec { width: window_mm * 1e-3, duration: window_us * 1e-6, overlap: *overlap, coverage: *coverage };
            if !(spec.width > 0.0 && spec.duration > 0.0 && (0.0..1.0).contains(&spec.overlap) && spec.coverage > 0.0 && spec.coverage <= 1.0) {
                return Err(Error::param("window extents must be positive, overlap in [0, 1), coverage in (0, 1]"));
            }
            let report = validate_memory_effect_with(&ds, &spec, &TrackSettings::default())?;
            fs::write(out, report.tracks_csv())?;
            let summary = with_suffix(out, ".summary.csv");
            fs::write(&summary, report.summary_csv())?;
            print!("{}", report.summary_text());
            write_manifest(
                out,
                "memory",
                &[rf],
                json!({ "window_mm": window_mm, "window_us": window_us, "overlap": overlap, "coverage": coverage,
                        "summary": summary.display().to_string(), "seed": cli.seed }),
            )
        }
        Command::Soscal { config, out } => {
            let mut cfg = RunConfig::load(config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = out.clone().or_else(|| cfg.output.table.clone()).ok_or_else(|| {
                Error::Config("no output path: pass --out or set output.table".into())
            })?;
            let table = soscal_sweep(&cfg)?;
            fs::write(&out, table.to_csv())?;
            println!(
                "slope {:.6} rad/(m/s), intercept {:.6} rad, r^2 {:.5}",
                table.fit.slope, table.fit.intercept, table.fit.r_squared
            );
            write_manifest(
                &out,
                "soscal",
                &[config],
                json!({ "config": cfg, "fit": { "slope": table.fit.slope, "intercept": table.fit.intercept, "r_squared": table.fit.r_squared } }),
            )
        }
    }
}

fn simulate_cmd(cli: &Cli, config: &Path, out: Option<&Path>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.rf.clone())
        .ok_or_else(|| Error::Config("no output path: pass --out or set output.rf".into()))?;
    let ds = simulate_from_config(&cfg)?;
    write_rf(&ds, &out)?;
    write_manifest(&out, "simulate", &[config], json!({ "config": cfg }))
}

/// Realise the configured phantom and simulate every configured angle.
pub fn simulate_from_config(cfg: &RunConfig) -> Result<RFDataSet> {
    let probe = cfg.probe.probe()?;
    let pulse = cfg.probe.pulse()?;
    let phantom = cfg.phantom.realize(cfg.seed, probe.center_frequency())?;
    if let Err(e) = phantom.check_speckle_density(probe.center_frequency()) {
        log::warn!("{e}");
    }
    let angles = cfg.angles_rad.angles()?;
    log::info!("simulating {} scatterers, {} angles, {} elements", phantom.scatterers.len(), angles.len(), probe.n_elements());
    simulate_sequence(&phantom, &probe, &pulse, &angles, &cfg.simulation.config(cfg.seed))
}

/// One row of the sound-speed calibration table.
#[derive(Debug, Clone, PartialEq)]
pub struct SoscalRow {
    pub label: String,
    pub sound_speed: f64,
    pub delta_sos: f64,
    pub excursion: f64,
    /// Contrast recovered from the excursion with the straight-ray phase model.
    pub estimated_delta_sos: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoscalTable {
    pub rows: Vec<SoscalRow>,
    pub fit: LinearityFit,
}

impl SoscalTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("type,sound_speed,delta_sos,excursion_rad,estimated_delta_sos\n");
        for r in &self.rows {
            let est = r.estimated_delta_sos.map(|v| v.to_string()).unwrap_or_default();
            s += &format!("{},{},{},{},{}\n", r.label, r.sound_speed, r.delta_sos, r.excursion, est);
        }
        s
    }
}

/// Simulate the configured phantom once per inclusion type (same speckle), run the
/// DPC pipeline, integrate across the band and fit excursion against contrast.
pub fn soscal_sweep(cfg: &RunConfig) -> Result<SoscalTable> {
    let probe = cfg.probe.probe()?;
    let pulse = cfg.probe.pulse()?;
    let base = cfg.phantom.to_spec(cfg.seed, probe.center_frequency())?;
    let first = *base.inclusions.first().ok_or_else(|| Error::Config("soscal needs a phantom with inclusions".into()))?;
    let c0 = base.medium.sound_speed();
    let band_center = cfg.soscal.band_center_mm.map(|z| z * 1e-3).unwrap_or(first.center.z);
    let band_half = cfg.soscal.band_half_width_mm * 1e-3;
    let angles = cfg.angles_rad.angles()?;
    let params = cfg.dpc.params(&probe, c0)?;
    let mut rows = Vec::new();
    for label in &cfg.soscal.types {
        let ty: InclusionType = label.parse()?;
        let mut spec = base.clone();
        for d in &mut spec.inclusions {
            d.sound_speed = ty.sound_speed();
        }
        let phantom = spec.realize()?;
        let ds = simulate_sequence(&phantom, &probe, &pulse, &angles, &cfg.simulation.config(cfg.seed))?;
        let img = dpc_pipeline(&ds, &probe, c0, &params)?;
        let mut profile = integrate_transverse(&img, band_center, band_half)?;
        if cfg.soscal.detrend {
            profile = profile.detrended();
        }
        let e = excursion(&profile);
        let chord = 2.0 * first.radius;
        let estimated = phase_to_delta_sos(e, chord, probe.center_frequency(), c0).ok();
        log::info!("type {ty}: excursion {e:.4} rad");
        rows.push(SoscalRow { label: ty.to_string(), sound_speed: ty.sound_speed(), delta_sos: ty.sound_speed() - c0, excursion: e, estimated_delta_sos: estimated });
    }
    let fit = linearity_fit(&rows.iter().map(|r| (r.delta_sos, r.excursion)).collect::<Vec<_>>())?;
    Ok(SoscalTable { rows, fit })
}

fn image_format(explicit: Option<&str>, out: &Path) -> Result<ImageFormat> {
    match explicit {
        Some(f) => f.parse(),
        None => Ok(ImageFormat::from_path(out)),
    }
}

fn grid_json(g: &BeamformGrid) -> serde_json::Value {
    json!({ "x_min_m": g.x_min, "x_max_m": g.x_max, "z_min_m": g.z_min, "z_max_m": g.z_max, "pixel_pitch_m": g.pixel_pitch })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
