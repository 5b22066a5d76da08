//! Blind localization of early room reflections from rigid spherical
//! microphone array recordings, with the image-source simulator, room
//! acoustics tools and evaluation used to exercise it.

pub mod acoustics;
pub mod array_model;
pub mod clustering;
pub mod error;
pub mod eval;
pub mod focusing;
mod par;
pub mod phalcor;
pub mod pipeline;
pub mod room_sim;
pub mod scene;
pub mod tf;

pub use error::{Error, Result};
