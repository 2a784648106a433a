pub mod error;
pub mod geometry;
pub mod ingest;
pub mod model;
pub mod appearance;
pub mod captioning;
pub mod curation;
pub mod providers;
pub mod bench;

pub use error::{Error, Result};
