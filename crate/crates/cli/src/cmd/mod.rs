pub mod calibrate;
pub mod gradcheck;
pub mod render;
pub mod shape;
pub mod sweep;
pub mod track;
