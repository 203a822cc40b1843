//! Persistence: the binary RF container, image export and run configuration.

pub mod config;
pub mod container;
pub mod export;

pub use config::{write_manifest, RunConfig};
pub use container::{read_rf, write_rf};
pub use export::{export_image, read_csv, ImageFormat};
