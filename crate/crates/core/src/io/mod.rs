//! Images, datasets and checkpoints.

pub mod checkpoint;
pub mod dataset;
pub mod image;

pub use checkpoint::{restore_params, Checkpoint, RngState};
pub use dataset::{crop_resize, synth_textures, Dataset, Split};
pub use image::{decode_pnm, encode_pnm, load_image, save_image};
