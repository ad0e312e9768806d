//! Skeleton-space motion retargeting.
//!
//! 2D joint sequences are disentangled into a motion code, a body-structure
//! code and a view-angle code by a temporal convolutional autoencoder trained
//! purely on invariances (limb-scaling and rotate-and-project perturbations,
//! no paired supervision). Codes from different performers can then be
//! recombined to transfer motion across body proportions and re-rendered at
//! novel view angles.
//!
//! Modules:
//! - [`skeleton`]: topology, perturbation geometry and preprocessing
//! - [`synth`]: procedural generator with ground-truth retargeting pairs
//! - [`net`]: encoders / decoder / discriminator and code recombination
//! - [`loss`]: the invariance-driven training objectives
//! - [`train`]: the unsupervised training loop, checkpoints, logging
//! - [`eval`]: hip-aligned MSE/MAE, rule-based baselines, retrieval probes
//! - [`gradcheck`]: finite-difference verification of the whole loss stack

pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod net;
pub mod skeleton;
pub mod synth;
pub mod train;
pub mod viz;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
