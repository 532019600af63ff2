//! Visual-word match-kernel retrieval.
//!
//! The pipeline: dense activation maps are reduced to attention-weighted,
//! whitened local descriptors ([`features`]); descriptors are quantized
//! against a k-means codebook ([`codebook`]); per-word residual signs are
//! packed into binary signatures and aggregated per image ([`kernel`]);
//! images are scored through a delta-coded inverted file ([`index`]); and
//! retrieval/classification quality is measured in [`eval`]. All artifacts
//! serialize bit-exactly through [`store`], which also provides a synthetic
//! corpus generator.
//!
//! The `mk` binary exposes the pipeline as subcommands; see the README.

pub mod codebook;
pub mod error;
pub mod eval;
pub mod features;
pub mod index;
pub mod kernel;
pub mod store;

pub use error::{Error, Result};
