//! File formats for pipeline artifacts.

pub mod checkpoint;
pub mod container;
pub mod mapset;
pub mod pgm;
