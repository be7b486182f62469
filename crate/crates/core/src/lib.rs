//! Screen tracking and content rectification from four colour fiducials.

pub mod detect;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod rectify;
pub mod simulate;
