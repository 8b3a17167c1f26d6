//! Motion blur synthesis and recurrent deblurring for 4D light fields.
//!
//! The crate is organised bottom-up:
//!
//! - [`lightfield`]: the 4D container, on-disk format, quadrilinear
//!   sampling, spiral view ordering and EPI slices.
//! - [`motion`]: 6-DOF camera poses and shutter-time trajectories.
//! - [`blur`]: the warp-and-average blur model and dataset generation.
//! - [`net`]: the recurrent deblurring network, its trainer and inference.
//! - [`metrics`]: PSNR / SSIM / RMSE evaluation.
//! - [`cli`]: the `lfdeblur` command-line tool.

pub mod blur;
pub mod cli;
pub mod error;
pub mod json;
pub mod lightfield;
pub mod metrics;
pub mod motion;
pub mod net;

pub use error::{Error, Result};
pub use lightfield::{Intrinsics, LightField};
