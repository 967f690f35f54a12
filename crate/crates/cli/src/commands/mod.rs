pub mod edges;
pub mod eval;
pub mod fuse;
pub mod render;
pub mod stats;
