//! Parametric reduced-order models for laser powder-bed fusion distortion.
//!
//! Two surrogates map a dwell time to the final-layer nodal distortion field:
//!
//! - [`rom`]: proper orthogonal decomposition of the snapshot set combined
//!   with one Gaussian process per retained mode (POD-GPR);
//! - [`gca`]: a graph convolutional autoencoder with a dwell-time branch
//!   trained into the same latent space.
//!
//! [`data`] provides the snapshot containers, their on-disk format and a
//! closed-form synthetic generator on a cylinder mesh. [`metrics`] compares
//! predictions against ground truth and writes CSV/SVG plot data.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod data;
pub mod error;
pub mod gca;
pub mod gpr;
pub mod metrics;
pub mod pod;
pub mod rom;

pub use error::{Error, Result};
