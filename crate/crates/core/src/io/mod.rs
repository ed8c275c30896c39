//! Scene files, dataset directories and image helpers.

mod dataset;
mod fspl;
mod image;

pub use dataset::{decode_rle, encode_rle, load_dataset, save_dataset, FeatureDataset, FeatureMap, Mask, Vocab};
pub use fspl::{load_scene, read_scene, save_scene, write_scene, FSPL_MAGIC, FSPL_VERSION, HEADER_LEN};
pub use image::{read_png, write_png, RgbImage};
