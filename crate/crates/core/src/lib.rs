pub mod checkpoint;
pub mod clstm;
pub mod conv2d;
pub mod datapipe;
pub mod error;
pub mod format;
pub mod metrics;
pub mod network;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod rng;
pub mod synth;
pub mod train;
pub mod volume;

pub use error::{Error, Result};
pub use network::{Architecture, Network};
pub use volume::{Dims, LabelVolume, Volume};
