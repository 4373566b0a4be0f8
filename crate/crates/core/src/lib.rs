pub mod audio;
pub mod bitstream;
pub mod config;
pub mod corpus;
pub mod error;
pub mod frontend;

pub use error::{Error, Result};
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod prosody;
pub mod segcodec;
pub mod snn;
pub mod synthesis;
