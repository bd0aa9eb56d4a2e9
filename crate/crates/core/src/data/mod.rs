//! Phantom generation, the noise model, file formats, and training-pair export.

pub mod export;
pub mod io;
pub mod noise;
pub mod phantom;

pub use export::{export_training_pairs, ExportManifest, InputSource, TargetMode, TrainingPair, TrainingSource};
pub use io::{
    load_image_folder, load_image_folder_named, read_observation, read_png, read_raw, write_observation, write_png16, write_raw,
};
pub use noise::{corrupt, relative_noise_level, NoiseModel};
pub use phantom::{generate_batch, generate_phantom, EllipsePhantomSpec};
