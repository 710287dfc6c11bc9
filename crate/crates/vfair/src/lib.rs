//! File formats, audio decoding, reports and the staged pipeline around
//! [`vfair_core`].

pub mod artifact;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;
pub mod wav;

pub use error::{Error, Result};
pub use vfair_core as core;
