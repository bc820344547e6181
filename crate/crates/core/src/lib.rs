pub mod circular;
pub mod data;
pub mod error;
pub mod neural;
pub mod nhits;
pub mod pipeline;
pub mod wavelet;

pub use error::{Error, Result};
