//! Shared domain types and the append-only manifest every stage reads and writes.

pub mod blob;
pub mod manifest;
mod types;

pub use blob::BlobStore;
pub use manifest::{Manifest, ManifestEntry, ManifestState};
pub use types::*;
