//! Axial localization of Gaussian beams and point sources from intensity
//! images.
//!
//! The crate computes how much a camera image tells about an axial shift
//! ([`fisher`]), where to put the camera behind a relay lens to reach the
//! quantum limit, and how close simple estimators come to those bounds on
//! simulated photon data ([`photon_sim`], [`estimators`]).
//!
//! ```
//! use axial_core::beam_optics::{BeamParams, RelaySystem};
//! use axial_core::fisher::{image_fi, optimal_detection_planes, qfi_gaussian};
//!
//! let beam = BeamParams::from_rayleigh_range(1.0, 1.0)?;
//! let relay = RelaySystem::new(1.0, 5.0)?;
//! let planes = optimal_detection_planes(&beam, &relay)?;
//! let at_best = image_fi(&beam, &relay, planes.plane_plus);
//! assert!((at_best - qfi_gaussian(&beam)).abs() < 1e-12);
//! # Ok::<(), axial_core::Error>(())
//! ```
//!
//! All lengths are in metres.

pub mod beam_optics;
pub mod error;
pub mod estimators;
pub mod fisher;
pub mod photon_sim;
pub mod quadrature;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/beam-optics.md")]
    mod beam_optics {}
    #[doc = include_str!("../../../book/src/fisher-information.md")]
    mod fisher_information {}
    #[doc = include_str!("../../../book/src/optimal-planes.md")]
    mod optimal_planes {}
    #[doc = include_str!("../../../book/src/information-density.md")]
    mod information_density {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/point-sources.md")]
    mod point_sources {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
