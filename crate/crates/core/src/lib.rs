//! Safe navigation from periodic range scans with time-varying soft-maximum
//! barrier functions and a closed-form safety filter.

pub mod barrier;
pub mod composer;
pub mod controller;
pub mod error;
pub mod sim;
pub mod smoothmath;
pub mod systems;
pub mod verify;
pub mod world;

pub use error::{Error, Result};
