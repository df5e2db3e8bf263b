//! Dataset ingestion and persistence: binary PPM (P6) image files, tab-
//! separated dataset manifests, and seeded synthetic low-rank dataset
//! generation, so every experiment is reproducible from a manifest.

mod manifest;
mod ppm;
mod synthetic;

pub use manifest::{
    load_dataset, read_manifest, select_split, write_manifest, DatasetManifest, ManifestRecord,
};
pub use ppm::{load_ppm, save_ppm};
pub use synthetic::{generate_synthetic, SyntheticSpec};
