//! Compiles and runs the Rust samples of the guide in `book/`.
#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/quickstart.md")]
pub mod quickstart {}

#[doc = include_str!("../../../book/src/configuration.md")]
pub mod configuration {}

#[doc = include_str!("../../../book/src/curation.md")]
pub mod curation {}

#[doc = include_str!("../../../book/src/captioning.md")]
pub mod captioning {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/providers.md")]
pub mod providers {}

#[doc = include_str!("../../../book/src/reports.md")]
pub mod reports {}
