//! Local features: dense and DoG frames, SIFT-style descriptors, and
//! exhaustive descriptor matching.

pub mod cache;
mod descriptor;
mod dog;
mod image;
mod matching;

#[cfg(test)]
pub(crate) mod testing;

pub use descriptor::{
    compute_descriptor_at, dense_grid_positions, dense_sample, Descriptor, FeatureFrame,
    FeatureSet, DESCRIPTOR_LEN,
};
pub(crate) use descriptor::descriptor_with_gradients;
pub use dog::{detect_dog_keypoints, detect_dog_keypoints_with, DogConfig};
pub(crate) use image::GradientField;
pub use image::{ImageGrid, MIN_SIDE};
pub use matching::{
    distance_ratio_match, similarity_from_distance, top_k_matches, Match, MatchSet,
    SIMILARITY_EPS,
};
