//! Physical-layer simulator and analytics for two-view (distributed) joint
//! source-channel transmission over OFDM multipath fading with imperfect CSI.
//!
//! Module map:
//!
//! * [`signal`]: complex signal container, seeded RNG, DFT pair.
//! * [`channel`]: exponential power-delay-profile fading, AWGN, LS/MMSE CSI.
//! * [`ofdm`]: block-pilot OFDM modulation, clipping, PAPR, power scaling.
//! * [`fusion`]: closed-form Gaussian posterior fusion under CSI error.
//! * [`info`]: discrete entropy/MI, data-processing checks, SCS, CCA.
//! * [`kernels`]: convolution, cross-attention reference, CVIE, CCF, DWA.
//! * [`metrics`]: MSE, PSNR, SSIM, MS-SSIM and the LPIPS formula.
//! * [`harness`]: toy end-to-end pipeline, sweeps, config and CSV I/O.
//!
//! DFT convention used throughout: the forward transform is unnormalized,
//! the inverse carries the `1/N` factor.

pub mod channel;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod info;
pub mod kernels;
pub mod metrics;
pub mod ofdm;
pub mod signal;

pub use error::{Error, Result};
pub use num_complex::Complex64;
