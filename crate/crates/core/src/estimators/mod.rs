//! End-to-end ESD estimators and the relative MSE metric.

mod mse;
mod ppmt;
mod ss;

pub use mse::{db_magnitudes, relative_mse};
pub use ppmt::{ppmt_esd, PpmtConfig, TaperDiagnostics, TaperGain};
pub use ss::{random_walk_smoother, ss_esd, RandomWalkFit, SsConfig};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::obs::{ensemble_mean, SpikeRaster};
use crate::series::TimeSeries;
use crate::taper::{direct_multitaper_esd, EsdSeries, FreqGrid, TaperSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Oracle,
    Ppmt,
    Ss,
    Psth,
    True,
}

impl Method {
    pub const ESTIMATORS: [Method; 4] = [Method::Oracle, Method::Ppmt, Method::Ss, Method::Psth];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Ppmt => "ppmt",
            Method::Ss => "ss",
            Method::Psth => "psth",
            Method::True => "true",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Oracle => "Oracle ESD",
            Method::Ppmt => "PPMT-ESD",
            Method::Ss => "SS-ESD",
            Method::Psth => "PSTH-ESD",
            Method::True => "True ESD",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(Method::Oracle),
            "ppmt" => Ok(Method::Ppmt),
            "ss" => Ok(Method::Ss),
            "psth" => Ok(Method::Psth),
            "true" | "truth" => Ok(Method::True),
            other => Err(Error::validation(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub esd: EsdSeries,
    pub method: Method,
    pub runtime_s: f64,
    /// One entry per taper for the PPMT estimator.
    pub diagnostics: Vec<TaperDiagnostics>,
}

/// Spiking and directly observed channels in ESD channel order.
///
/// Continuous channels take the listed positions; the raster's channels fill
/// the remaining positions in order.
#[derive(Debug, Clone, Copy)]
pub struct Observations<'a> {
    pub raster: &'a SpikeRaster,
    pub continuous: Option<&'a TimeSeries>,
    pub continuous_channels: &'a [usize],
}

impl<'a> Observations<'a> {
    pub fn spiking(raster: &'a SpikeRaster) -> Self {
        Observations { raster, continuous: None, continuous_channels: &[] }
    }

    pub fn channels(&self) -> usize {
        self.raster.channels() + self.continuous.map(|c| c.channels()).unwrap_or(0)
    }

    pub fn samples(&self) -> usize {
        self.raster.bins()
    }

    pub fn validate(&self) -> Result<()> {
        let n_cont = self.continuous.map(|c| c.channels()).unwrap_or(0);
        if n_cont != self.continuous_channels.len() {
            return Err(Error::validation("continuous channel positions do not match the continuous data"));
        }
        if let Some(c) = self.continuous {
            if c.samples() != self.raster.bins() {
                return Err(Error::validation("continuous data and raster differ in length"));
            }
            if !c.is_finite() {
                return Err(Error::validation("continuous data contains non-finite values"));
            }
        }
        let total = self.channels();
        let mut seen = vec![false; total];
        for &j in self.continuous_channels {
            if j >= total || std::mem::replace(&mut seen[j], true) {
                return Err(Error::validation("invalid continuous channel positions"));
            }
        }
        Ok(())
    }

    /// For each ESD channel: `Ok(i)` for raster channel `i`, `Err(i)` for
    /// continuous channel `i`.
    pub fn sources(&self) -> Vec<std::result::Result<usize, usize>> {
        let mut next_spiking = 0;
        (0..self.channels())
            .map(|j| match self.continuous_channels.iter().position(|&c| c == j) {
                Some(i) => Err(i),
                None => {
                    next_spiking += 1;
                    Ok(next_spiking - 1)
                }
            })
            .collect()
    }

    /// `K x J` series in ESD channel order, taking ensemble means for
    /// spiking channels and the samples for continuous ones.
    pub fn mean_series(&self) -> Result<TimeSeries> {
        let mean = ensemble_mean(self.raster);
        let cols: Vec<Vec<f64>> = self
            .sources()
            .into_iter()
            .map(|s| match s {
                Ok(i) => mean.values.column(i),
                Err(i) => self.continuous.expect("validated").column(i),
            })
            .collect();
        TimeSeries::from_columns(&cols)
    }
}

fn timed(method: Method, f: impl FnOnce() -> Result<EsdSeries>) -> Result<EstimatorReport> {
    let start = Instant::now();
    let esd = f()?;
    Ok(EstimatorReport { esd, method, runtime_s: start.elapsed().as_secs_f64(), diagnostics: Vec::new() })
}

/// Direct multitaper estimate of the (normally unobservable) latent process.
pub fn oracle_esd(latent: &TimeSeries, grid: FreqGrid, tapers: &TaperSet, exec: Exec) -> Result<EstimatorReport> {
    timed(Method::Oracle, || direct_multitaper_esd(latent, grid, tapers, exec))
}

/// Direct multitaper estimate applied to the ensemble means as if they were
/// the latent signals.
pub fn psth_esd(obs: &Observations, grid: FreqGrid, tapers: &TaperSet, exec: Exec) -> Result<EstimatorReport> {
    obs.validate()?;
    timed(Method::Psth, || direct_multitaper_esd(&obs.mean_series()?, grid, tapers, exec))
}
