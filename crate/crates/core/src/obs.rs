//! Bernoulli-logistic spiking observations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Binary spike indicators over `bins x channels x trials`, with bin width
/// in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRaster {
    bins: usize,
    channels: usize,
    trials: usize,
    bin_width: f64,
    data: Vec<u8>,
}

impl SpikeRaster {
    /// `data` is indexed as `(k * J + j) * L + l`.
    pub fn new(bins: usize, channels: usize, trials: usize, bin_width: f64, data: Vec<u8>) -> Result<Self> {
        if bins == 0 || channels == 0 || trials == 0 {
            return Err(Error::validation("raster dimensions must be at least 1"));
        }
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::validation("bin width must be positive"));
        }
        if data.len() != bins * channels * trials {
            return Err(Error::validation("raster data length does not match its dimensions"));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::validation("raster entries must be 0 or 1"));
        }
        Ok(SpikeRaster { bins, channels, trials, bin_width, data })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize, l: usize) -> u8 {
        self.data[(k * self.channels + j) * self.trials + l]
    }

    /// Average spikes per second per trial in each channel.
    pub fn rate_hz(&self, j: usize) -> f64 {
        let total: usize = (0..self.bins)
            .map(|k| (0..self.trials).map(|l| self.get(k, j, l) as usize).sum::<usize>())
            .sum();
        total as f64 / (self.trials as f64 * self.bins as f64 * self.bin_width)
    }

    /// Keep the listed channels.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        if channels.iter().any(|&j| j >= self.channels) {
            return Err(Error::validation("channel index out of range"));
        }
        let mut data = Vec::with_capacity(self.bins * channels.len() * self.trials);
        for k in 0..self.bins {
            for &j in channels {
                for l in 0..self.trials {
                    data.push(self.get(k, j, l));
                }
            }
        }
        SpikeRaster::new(self.bins, channels.len(), self.trials, self.bin_width, data)
    }
}

/// Trial-averaged spike indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMean {
    pub values: TimeSeries,
    pub trials: usize,
}

impl EnsembleMean {
    #[inline]
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values.get(k, j)
    }
}

pub fn ensemble_mean(raster: &SpikeRaster) -> EnsembleMean {
    let (k, j, l) = (raster.bins, raster.channels, raster.trials);
    let data = raster
        .data
        .chunks_exact(l)
        .map(|c| c.iter().map(|&v| v as u32).sum::<u32>() as f64 / l as f64)
        .collect();
    EnsembleMean { values: TimeSeries::new(k, j, data).expect("dimensions checked by raster"), trials: l }
}

/// Maximum-likelihood estimate of the latent value from an ensemble mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Logit {
    Finite(f64),
    /// The mean was exactly 0 (`high == false`) or exactly 1.
    Saturated { high: bool },
}

impl Logit {
    /// Clip to `[-bound, bound]`, mapping saturation to the nearer bound.
    pub fn clipped(self, bound: f64) -> f64 {
        match self {
            Logit::Finite(v) => v.clamp(-bound, bound),
            Logit::Saturated { high: true } => bound,
            Logit::Saturated { high: false } => -bound,
        }
    }

    pub fn is_saturated(self) -> bool {
        matches!(self, Logit::Saturated { .. })
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logit_estimate(nbar: f64) -> Logit {
    if nbar <= 0.0 {
        Logit::Saturated { high: false }
    } else if nbar >= 1.0 {
        Logit::Saturated { high: true }
    } else {
        Logit::Finite((nbar / (1.0 - nbar)).ln())
    }
}

/// Treatment of ensemble means at exactly 0 or 1 when tapering.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Saturation {
    /// Leave saturated means unchanged.
    #[default]
    PassThrough,
    /// Replace the logit of a saturated mean by `-bound` or `bound` and taper
    /// it like any other bin.
    Clip { bound: f64 },
}

/// Tapered ensemble means for window `m` (0-based): `logistic(nu_w *
/// logit(nbar))`, with saturated means passed through unchanged. Returns a
/// `W x J` series.
pub fn taper_ensemble_mean(mean: &EnsembleMean, taper: &[f64], m: usize) -> Result<TimeSeries> {
    taper_ensemble_mean_with(mean, taper, m, Saturation::PassThrough)
}

/// [`taper_ensemble_mean`] with an explicit saturation policy.
pub fn taper_ensemble_mean_with(
    mean: &EnsembleMean,
    taper: &[f64],
    m: usize,
    saturation: Saturation,
) -> Result<TimeSeries> {
    let w = taper.len();
    let j = mean.values.channels();
    if w == 0 || (m + 1) * w > mean.values.samples() {
        return Err(Error::validation(format!("window {m} out of range")));
    }
    if let Saturation::Clip { bound } = saturation {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::validation("logit clip bound must be positive"));
        }
    }
    let mut out = TimeSeries::zeros(w, j);
    for (i, nu) in taper.iter().enumerate() {
        for c in 0..j {
            let nbar = mean.get(m * w + i, c);
            let v = match (logit_estimate(nbar), saturation) {
                (Logit::Finite(x), _) => logistic(nu * x),
                (Logit::Saturated { .. }, Saturation::PassThrough) => nbar,
                (l, Saturation::Clip { bound }) => logistic(nu * l.clipped(bound)),
            };
            out.set(i, c, v);
        }
    }
    Ok(out)
}

/// Independent Bernoulli(logistic(x)) draws for each bin, channel and trial.
/// Trial `l` uses stream `l` of a ChaCha8 generator seeded with `seed`, so the
/// raster is reproducible and trials can be generated independently.
pub fn simulate_spikes(latent: &TimeSeries, trials: usize, bin_width: f64, seed: u64) -> Result<SpikeRaster> {
    if !latent.is_finite() {
        return Err(Error::validation("latent process contains non-finite values"));
    }
    if trials == 0 {
        return Err(Error::validation("need at least one trial"));
    }
    let (k, j) = (latent.samples(), latent.channels());
    let probs: Vec<f64> = latent.data().iter().map(|&x| logistic(x)).collect();
    let mut data = vec![0u8; k * j * trials];
    for l in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(l as u64);
        for (idx, p) in probs.iter().enumerate() {
            let u: f64 = rng.random();
            data[idx * trials + l] = (u < *p) as u8;
        }
    }
    SpikeRaster::new(k, j, trials, bin_width, data)
}
