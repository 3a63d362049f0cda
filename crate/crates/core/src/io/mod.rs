//! On-disk formats: binary PPM images and the named-tensor weight file.

mod ppm;
mod weightfile;

pub use ppm::{encode_ppm, load_ppm, parse_ppm, save_ppm, ImageRgb8};
pub use weightfile::{NamedTensor, WeightFile, MAGIC, VERSION};
