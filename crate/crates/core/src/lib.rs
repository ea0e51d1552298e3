pub mod block;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod shrink;
pub mod spectral;
pub mod stats;
pub mod synth;
pub mod turboquant;

pub use block::DataBlock;
pub use error::{Error, Result};
