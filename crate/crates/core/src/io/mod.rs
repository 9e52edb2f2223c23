//! Scene files and image files.

mod image;
mod scene_file;

pub use image::{read_image, read_weights, write_image, write_pfm, write_ppm, write_weights, ImageFormat};
pub use scene_file::{parse_scene, serialize_scene, Geometry, SceneFile};
