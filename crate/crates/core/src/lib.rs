//! Fused micro-XRF / micro-CT mineral phase mapping.
//!
//! The crate covers the full workflow: synthetic phantom generation and
//! instrument simulation, map preprocessing, K-means phase labelling with
//! rule-based mineral assignment, mutual-information slice registration,
//! training of a convolutional encoder-decoder on the registered labels, 3D
//! inference, and evaluation of the resulting phase volume.

pub mod catalog;
pub mod cluster;
pub mod elements;
pub mod error;
pub mod grid;
pub mod image;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod preprocess;
pub mod provenance;
pub mod register;
pub mod segnet;
pub mod smoothing;
pub mod transform;
pub mod volume;

pub use catalog::{PhaseCatalog, PointAnalysis};
pub use error::{Error, Result};
pub use grid::{Grid2, Grid3};
pub use image::{ElementMapSet, LabelImage, ScalarImage};
pub use provenance::Provenance;
pub use segnet::{UNet, UNetConfig};
pub use transform::RigidTransform;
pub use volume::{Dtype, LabelVolume, ScalarVolume, VoxelData};
