//! Temporally coherent point-cloud super-resolution.
//!
//! The crate covers the full pipeline: padded/masked point clouds
//! ([`cloud`]), Earth Mover's Distance assignments ([`transport`]),
//! permutation-invariant spatial and temporal losses ([`losses`]), a masked
//! hierarchical point-convolution generator with hand-written gradients
//! ([`network`]), Siamese three-frame training ([`trainer`]), synthetic data
//! ([`datagen`]), patch decomposition ([`patchpipe`]) and the evaluation
//! instruments ([`evaluation`]). File formats live in [`io`], run
//! configuration in [`config`] and the command-line entry points in [`cli`].

pub mod cli;
pub mod cloud;
pub mod config;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod io;
pub mod losses;
pub mod network;
pub mod patchpipe;
pub mod rng;
pub mod trainer;
pub mod transport;

pub use cloud::{infer_mask, pad, truncate_output, Mask, PaddedCloud, PatchTriplet, PointCloud, PAD_VALUE};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use transport::AssignmentPlan;
