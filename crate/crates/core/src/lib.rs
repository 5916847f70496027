pub mod craft;
pub mod error;
pub mod filter;
pub mod image;
pub mod manifest;
pub mod noise;
pub mod rng;
pub mod scene;
pub mod stats;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
