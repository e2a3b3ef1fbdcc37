//! Slepian tapers and the direct multitaper estimator.

mod direct;
mod dpss;
mod esd;

pub use direct::{direct_multitaper_esd, eigen_coefficients};
pub use dpss::{band_concentration, compute_dpss, TaperSet};
pub use esd::{EsdSeries, FreqGrid};
