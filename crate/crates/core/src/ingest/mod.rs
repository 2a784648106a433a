//! Media decoding, frame plans and the native clip container.

pub mod container;
pub mod decode;
mod frame;
mod plan;

pub use decode::{FrameDecoder, FrameSource, NativeDecoder, Probe, ProbedAsset, StreamInfo, SubprocessDecoder};
pub use frame::*;
pub use plan::*;
