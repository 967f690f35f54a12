//! Oriented-box tooling for paired visible/infrared remote-sensing data.
//!
//! * [`geometry`]: rotated boxes, convex clipping and rotated IoU.
//! * [`annotations`]: DOTA-style label files.
//! * [`cmlf`]: cross-modal label fusion of visible and infrared labels.
//! * [`edgeops`]: gradient edge maps and the multi-scale edge encoder.
//! * [`smff`]: forward pass of the deformable, attention-weighted fusion of
//!   two modality feature maps.
//! * [`losses`]: the weighted multi-branch detection loss.
//! * [`eval`]: rotated AP50 / mAP50.
//! * [`render`]: SVG overlays and 16-bit edge-map export.

pub mod annotations;
pub mod cmlf;
pub mod edgeops;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod render;
pub mod smff;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
