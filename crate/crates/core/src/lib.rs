//! Blind estimation of sampling-rate offsets (SROs) between unsynchronized
//! audio recordings.
//!
//! All channels are modelled jointly: the compensated STFT vector of every
//! time-frequency bin is a zero-mean complex Gaussian with a per-frequency
//! spatial covariance matrix, and the offsets are found by alternating the
//! closed-form covariance update with a majorization-minimization step whose
//! surrogate is a sum of concave quadratics in the pairwise offset
//! differences. The pairwise maximum-likelihood baselines (grid search plus
//! golden-section refinement, or the same MM step restricted to one pair)
//! live in [`pairwise`].
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. File formats, the scenario simulator and the CLI are in the
//! `srosync-tools` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
pub mod fft;
pub mod likelihood;
pub mod linalg;
pub mod optimizer;
pub mod pairwise;
pub mod pipeline;
pub mod signal;

pub use error::{Error, Result};
pub use likelihood::{ScmSet, SroVector, UpsilonSet};
pub use optimizer::{estimate_joint, JointConfig, JointEstimate};
pub use pipeline::{estimate, EstimatorConfig, Method, SroEstimate};
pub use signal::{Spectrogram, SpectrogramSet, StftConfig, TimeSignal};

/// Complex sample type used throughout the crate.
pub type Complex = num_complex::Complex64;

/// Parts per million.
pub const PPM: f64 = 1e-6;

mod prelude {
    pub(crate) use alloc::{format, vec, vec::Vec};
    #[cfg(not(feature = "std"))]
    pub(crate) use num_traits::Float;
}
