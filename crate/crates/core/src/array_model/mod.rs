//! Rigid-sphere array responses, microphone layouts and steering dictionaries.

pub mod layout;
pub mod special;
pub mod steering;

pub use steering::{
    build_dictionary, nearest_grid_direction, steering_matrix, steering_vector, SteeringAt,
    SteeringDictionary, SteeringVector,
};
