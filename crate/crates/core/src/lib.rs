//! Multitaper estimation of evolutionary spectral density matrices from
//! multivariate binary spiking observations.
//!
//! The latent process driving an ensemble of Bernoulli observations is
//! represented window by window as a harmonic regression whose coefficients
//! follow a first-order state-space model. Each dpss taper yields one
//! tapered set of ensemble means; an EM smoother recovers the coefficient
//! second moments and the per-taper spectra are averaged.
//!
//! The crate also carries the baselines (random-walk state-space smoother,
//! PSTH, direct multitaper on the latent path), the simulation scenarios
//! used to compare them, and the binary/text formats used by the `ppmt`
//! command-line tool.

pub mod analysis;
pub mod em;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod harmonic;
pub mod io;
pub mod linalg;
pub mod obs;
pub mod series;
pub mod simgen;
pub mod taper;

pub use error::{Error, Result};
pub use exec::Exec;
pub use harmonic::HarmonicLayout;
pub use obs::{EnsembleMean, SpikeRaster};
pub use series::TimeSeries;
pub use taper::{EsdSeries, FreqGrid, TaperSet};
