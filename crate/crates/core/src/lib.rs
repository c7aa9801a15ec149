//! Segmentation-based semantic features: per-category pixel share, mean
//! position and positional spread computed from segmentation masks, small
//! classifier heads over them, and a fusion model that combines them with a
//! global image feature vector.
//!
//! ```
//! use ssf::{extract_ssf, SegmentationMask};
//!
//! let mask = SegmentationMask::from_rows(&[&[1, 1], &[1, 2]], 2, Some(0)).unwrap();
//! let m = extract_ssf(&mask);
//! assert_eq!(m.category(1).pc, 0.75);
//! assert_eq!(m.category(2).mu_y, 1.0);
//! ```

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod mask;
pub mod models;
pub mod nn;
pub mod par;
pub mod ssf;

pub use error::{Error, Result};
pub use mask::SegmentationMask;
pub use ssf::{extract_batch, extract_batch_sequential, extract_ssf, FeatureSubset, SsfMatrix, SsfRow};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
