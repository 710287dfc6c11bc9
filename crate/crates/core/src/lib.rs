//! Allocation-only core of the vfair toolkit.
//!
//! Everything here is a pure function of its inputs: demographic grouping,
//! seeded split and trial construction, acoustic front-ends, cosine scoring,
//! and the error/disparity metrics. File formats, audio decoding and the
//! command line live in the `vfair` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod acoustic;
pub mod error;
pub mod group;
pub mod manifest;
pub mod metrics;
pub mod rng;
pub mod scoring;
pub mod splits;
pub mod synth;
pub mod trials;

pub use error::Error;
pub use group::{AgeBucket, Gender, GroupKey, Language};
