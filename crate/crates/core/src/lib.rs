//! Dense-field copy-move forgery detection and localization for video.
//!
//! The pipeline has three stages:
//!
//! 1. dense per-pixel features built from Zernike moment magnitudes
//!    ([`zernike`]), either per frame (2D) or as a temporally flip-invariant
//!    combination over a short frame window (3D);
//! 2. a randomized nearest-neighbor-field search over the whole video volume
//!    ([`patchmatch`]) with zero- and first-order offset predictors along rows,
//!    columns, diagonals and frames;
//! 3. offset-field post-processing ([`postproc`]): dense local affine fitting,
//!    small-region removal and a map-membership consistency check.
//!
//! [`multires`] wraps these stages into a coarse-to-fine detector that does
//! most of the matching on subsampled source grids, and [`forgegen`] builds
//! synthetic forgeries with exact ground truth for evaluation with
//! [`metrics`].

pub mod cli;
pub mod error;
pub mod forgegen;
pub mod io;
pub mod metrics;
pub mod multires;
pub mod patchmatch;
pub mod postproc;
mod rng;
pub mod video;
pub mod zernike;

pub use error::{Error, Result};
pub use video::{Dims, MaskVolume, Video};
