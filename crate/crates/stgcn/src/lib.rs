//! Skeleton graph partition strategies and a small spatial-temporal graph
//! convolution network for skeleton-based action recognition.
//!
//! The crate is organized around a pipeline:
//!
//! 1. [`skeleton`] — joint/edge layouts and coordinate sequences.
//! 2. [`partition`] — label maps that split each joint's neighbor set into
//!    ordered partitions (spatial configuration, full distance, connection
//!    degree, or keypoint index).
//! 3. [`adjacency`] — per-partition adjacency stacks and their normalization.
//! 4. [`gcn`] — a from-scratch spatial-temporal graph convolution network
//!    with analytic gradients, SGD training, and checkpointing.
//! 5. [`data`] — pose-JSON ingestion, the internal sequence format, and a
//!    synthetic dataset generator.
//! 6. [`compare`] — a harness that trains one model per partition strategy
//!    and tabulates validation accuracy.

pub mod adjacency;
pub mod compare;
pub mod data;
pub mod error;
pub mod gcn;
pub mod partition;
pub mod skeleton;

pub use error::{Error, Result};
