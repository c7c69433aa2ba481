//! Weak-supervision labelling toolkit for zero-shot defect detection.
//!
//! Raw detector/segmenter outputs arrive as interchange documents
//! ([`interchange`]), pass a heuristic filter chain ([`filters`]), and become
//! YOLO label sets ([`labelgen`]). [`splitter`] partitions datasets without group
//! leakage, [`metrics`] evaluates predictions, and [`simulate`] produces seeded
//! synthetic data plus reference oracles for testing all of the above.

pub mod cli;
pub mod detection;
pub mod error;
pub mod filters;
pub mod geometry;
pub mod interchange;
pub mod labelgen;
pub mod metrics;
pub mod rle;
pub mod simulate;
pub mod splitter;

pub use detection::{Detection, DetectionSet, Provenance, Source};
pub use error::{Error, Result};
pub use geometry::{BBox, BitMask};
pub use rle::{rle_decode, rle_encode, RleMask};
