//! Incomplete-data CT laboratory.
//!
//! Simulate sinograms of analytic ellipse phantoms, reconstruct with
//! filtered backprojection under arbitrary cutoff regions, predict — from
//! the cutoff geometry and the phantom's singularities alone — exactly
//! which artifacts the reconstruction will contain, and measure the
//! predictions on the reconstructed images.
//!
//! The main pieces:
//!
//! - [`phantom`]: ellipse-sum phantoms with closed-form line integrals,
//!   explicit wavefront geometry, and tangent-line curves;
//! - [`mask`]: cutoff regions with exact boundary decompositions, sharp
//!   and apodized sinogram multipliers;
//! - [`fbp`]: ramp filtering, backprojection, and the composed
//!   reconstruction pipeline;
//! - [`microlocal`]: the artifact predictor (visible/invisible
//!   singularities, streak lines, artifact curves), spectral decay
//!   estimation, and artifact-energy measurement;
//! - [`io`] and [`config`]: file formats and batch experiment
//!   configuration used by the `tomolab` binary.

pub mod config;
pub mod error;
pub mod fbp;
pub mod geom;
pub mod io;
pub mod mask;
pub mod microlocal;
pub mod phantom;

pub use error::{Error, Result};
