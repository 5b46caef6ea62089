//! Groupwise registration of time-separated aerial images to a reference
//! ortho-photo map.
//!
//! Pairwise relations are encoded as sparse Hough voting spaces over rigid
//! transforms; a groupwise likelihood over direct (image → reference) and
//! indirect (image → image) relations is maximized in stages, and the rigid
//! result is upgraded to per-image homographies by guided matching.

pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod graph;
pub mod groupwise;
pub mod guided;
pub mod harness;
pub mod hough;

pub use error::{Error, Result};
pub use geometry::{Homography, Point, RigidTransform};
