//! Monte Carlo checks of the estimator's statistical behaviour: how the
//! logit-domain multitaper estimate approaches the direct estimate as the
//! number of trials grows, and the variance of the direct estimate on white
//! noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::obs::{ensemble_mean, logit_estimate, simulate_spikes};
use crate::series::TimeSeries;
use crate::simgen::gen_ar_component;
use crate::taper::{compute_dpss, direct_multitaper_esd, FreqGrid, TaperSet};

/// Stationary single-channel latent used by [`scaling_experiment`]:
/// `offset + scale * y` with `y` a unit-variance AR(2) peaked at
/// `frequency_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub samples: usize,
    pub sample_rate: f64,
    pub frequency_hz: f64,
    pub pole_radius: f64,
    pub offset: f64,
    pub scale: f64,
    pub trials: Vec<usize>,
    pub replicates: usize,
    pub clip: f64,
    pub time_bandwidth: f64,
    pub tapers: usize,
    /// 0-based grid bins to report; empty means every bin.
    pub bins: Vec<usize>,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            samples: 256,
            sample_rate: 32.0,
            frequency_hz: 1.15,
            pole_radius: 0.9,
            offset: 0.0,
            scale: 0.5,
            trials: vec![20, 80, 320],
            replicates: 100,
            clip: 10.0,
            time_bandwidth: 2.0,
            tapers: 3,
            bins: Vec::new(),
            seed: 0,
            exec: Exec::default(),
        }
    }
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 30 {
            return Err(Error::validation("need at least 30 replicates"));
        }
        if self.trials.is_empty() || self.trials.windows(2).any(|w| w[0] >= w[1]) || self.trials[0] == 0 {
            return Err(Error::validation("trial grid must be positive and strictly increasing"));
        }
        if self.samples < 4 || self.samples % 2 != 0 {
            return Err(Error::validation("samples must be even and at least 4"));
        }
        if !(self.clip > 0.0) || !(self.scale >= 0.0) || !self.offset.is_finite() {
            return Err(Error::validation("clip must be positive, scale non-negative, offset finite"));
        }
        Ok(())
    }

    /// Single-window grid with bins at the natural DFT frequencies.
    pub fn grid(&self) -> Result<FreqGrid> {
        FreqGrid::new(self.samples / 2, self.samples / 2, self.sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub trials: usize,
    pub accepted: usize,
    pub discard_rate: f64,
    /// `|mean(S_hat - S)|` per reported bin.
    pub bias: Vec<f64>,
    /// Standard deviation of `S_hat - S` per reported bin.
    pub excess_std: Vec<f64>,
    pub mean_bias: f64,
    pub mean_excess_std: f64,
    /// Monte Carlo standard errors of the two means.
    pub bias_se: f64,
    pub excess_std_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config: ScalingConfig,
    pub bins: Vec<usize>,
    pub frequencies_hz: Vec<f64>,
    /// Mean and variance of the direct multitaper estimate of the latent,
    /// per reported bin.
    pub reference_mean: Vec<f64>,
    pub reference_var: Vec<f64>,
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    /// Number of adjacent pairs where `metric` increases by more than
    /// `slack` standard errors.
    pub fn inversions(&self, metric: impl Fn(&ScalingRow) -> (f64, f64), slack: f64) -> usize {
        self.rows
            .windows(2)
            .filter(|w| {
                let (a, _) = metric(&w[0]);
                let (b, se) = metric(&w[1]);
                b > a + slack * se
            })
            .count()
    }
}

fn auto(series: &TimeSeries, grid: FreqGrid, tapers: &TaperSet) -> Result<Vec<f64>> {
    Ok(direct_multitaper_esd(series, grid, tapers, Exec::Sequential)?.auto_spectrum(0, 0))
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// For each trial count, simulate `replicates` rasters from independent
/// latent draws and compare the clipped-logit multitaper estimate with the
/// direct estimate of the same draw. Replicates with any saturated ensemble
/// mean are discarded and counted.
pub fn scaling_experiment(config: &ScalingConfig) -> Result<ScalingReport> {
    config.validate()?;
    let grid = config.grid()?;
    let tapers = compute_dpss(config.samples, config.time_bandwidth, config.tapers)?;
    let bins: Vec<usize> = if config.bins.is_empty() { (0..grid.bins()).collect() } else { config.bins.clone() };
    if bins.iter().any(|&b| b >= grid.bins()) {
        return Err(Error::validation("reported bin outside the grid"));
    }

    let latents = config.exec.try_map(config.replicates, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(r as u64);
        let y = gen_ar_component(config.frequency_hz, config.sample_rate, config.samples, &[config.pole_radius], 1000, &mut rng)?;
        let x = TimeSeries::from_columns(&[y.iter().map(|v| config.offset + config.scale * v).collect()])?;
        let s = auto(&x, grid, &tapers)?;
        Ok::<_, Error>((x, s))
    })?;

    let per_bin = |values: &[Vec<f64>], b: usize| values.iter().map(|v| v[b]).collect::<Vec<_>>();
    let refs: Vec<Vec<f64>> = latents.iter().map(|(_, s)| s.clone()).collect();
    let (reference_mean, reference_var) = bins
        .iter()
        .map(|&b| {
            let (m, sd) = mean_sd(&per_bin(&refs, b));
            (m, sd * sd)
        })
        .unzip();

    let mut rows = Vec::new();
    for (li, &l) in config.trials.iter().enumerate() {
        let diffs = config.exec.try_map(config.replicates, |r| {
            let (x, s) = &latents[r];
            let spike_seed = config.seed ^ ((li as u64 + 1) << 32) ^ (r as u64).wrapping_mul(0x9e37_79b9);
            let mean = ensemble_mean(&simulate_spikes(x, l, 1.0 / config.sample_rate, spike_seed)?);
            let logits: Vec<_> = mean.values.column(0).into_iter().map(logit_estimate).collect();
            if logits.iter().any(|v| v.is_saturated()) {
                return Ok::<_, Error>(None);
            }
            let clipped = TimeSeries::from_columns(&[logits.iter().map(|v| v.clipped(config.clip)).collect()])?;
            let s_hat = auto(&clipped, grid, &tapers)?;
            Ok(Some(s_hat.iter().zip(s).map(|(a, b)| a - b).collect::<Vec<f64>>()))
        })?;
        let kept: Vec<Vec<f64>> = diffs.into_iter().flatten().collect();
        if kept.len() < 2 {
            return Err(Error::numerical(format!(
                "{} of {} replicates saturated at L = {l}; use more trials or a less extreme latent",
                config.replicates - kept.len(),
                config.replicates
            )));
        }
        let n = kept.len() as f64;
        let stats: Vec<(f64, f64)> = bins.iter().map(|&b| mean_sd(&per_bin(&kept, b))).collect();
        let bias: Vec<f64> = stats.iter().map(|s| s.0.abs()).collect();
        let excess_std: Vec<f64> = stats.iter().map(|s| s.1).collect();
        let nb = bins.len() as f64;
        let mean_bias = bias.iter().sum::<f64>() / nb;
        let mean_excess_std = excess_std.iter().sum::<f64>() / nb;
        // Averages over bins of per-bin standard errors; bins are treated as
        // fully correlated, which overstates the error of the mean.
        let bias_se = excess_std.iter().map(|sd| sd / n.sqrt()).sum::<f64>() / nb;
        let excess_std_se = excess_std.iter().map(|sd| sd / (2.0 * (n - 1.0)).sqrt()).sum::<f64>() / nb;
        rows.push(ScalingRow {
            trials: l,
            accepted: kept.len(),
            discard_rate: 1.0 - n / config.replicates as f64,
            bias,
            excess_std,
            mean_bias,
            mean_excess_std,
            bias_se,
            excess_std_se,
        });
    }
    Ok(ScalingReport {
        config: config.clone(),
        frequencies_hz: bins.iter().map(|&b| grid.frequency_hz(b)).collect(),
        bins,
        reference_mean,
        reference_var,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub samples: usize,
    pub window_length: usize,
    pub time_bandwidth: f64,
    pub tapers: usize,
    pub replicates: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            samples: 64000,
            window_length: 3200,
            time_bandwidth: 2.0,
            tapers: 3,
            replicates: 200,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub config: CalibrationConfig,
    /// Eigenvalues of the tapers used.
    pub concentrations: Vec<f64>,
    /// True spectrum of unit white noise, `1 / (2 pi)`.
    pub true_level: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// `(1/P^2) sum_p c_p^2 S^2`.
    pub predicted_variance: f64,
    /// `2 (pi / N) sum_n mean_n`: the two-sided integral of the mean estimate.
    pub integrated_power: f64,
    /// First and last bins (0-based, inclusive) counted as interior.
    pub interior: (usize, usize),
}

impl CalibrationReport {
    pub fn mean_db_range(&self) -> (f64, f64) {
        let db: Vec<f64> = self.mean[self.interior.0..=self.interior.1]
            .iter()
            .map(|m| 10.0 * (m / self.true_level).log10())
            .collect();
        (db.iter().copied().fold(f64::INFINITY, f64::min), db.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Mean over interior bins of the empirical to predicted variance ratio.
    pub fn variance_ratio(&self) -> f64 {
        let v = &self.variance[self.interior.0..=self.interior.1];
        v.iter().sum::<f64>() / v.len() as f64 / self.predicted_variance
    }
}

/// Direct multitaper estimates of unit-variance Gaussian white noise on the
/// natural DFT grid of the window, pooled over windows and replicates.
pub fn white_noise_calibration(config: &CalibrationConfig) -> Result<CalibrationReport> {
    let w = config.window_length;
    if w < 8 || w % 2 != 0 || config.samples % w != 0 || config.replicates < 2 {
        return Err(Error::validation("need an even window of at least 8 samples dividing K, and two replicates"));
    }
    let tapers = compute_dpss(w, config.time_bandwidth, config.tapers)?;
    let grid = FreqGrid::new(w / 2, w / 2, 1.0)?;
    let estimates = config.exec.try_map(config.replicates, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(r as u64);
        let data: Vec<f64> = (0..config.samples).map(|_| StandardNormal.sample(&mut rng)).collect();
        let esd = direct_multitaper_esd(&TimeSeries::new(config.samples, 1, data)?, grid, &tapers, Exec::Sequential)?;
        Ok::<_, Error>((0..esd.windows()).map(|m| esd.auto_spectrum(m, 0)).collect::<Vec<_>>())
    })?;
    let pooled: Vec<&Vec<f64>> = estimates.iter().flatten().collect();
    let (mean, variance): (Vec<f64>, Vec<f64>) = (0..grid.bins())
        .map(|b| {
            let (m, sd) = mean_sd(&pooled.iter().map(|v| v[b]).collect::<Vec<_>>());
            (m, sd * sd)
        })
        .unzip();
    let true_level = 1.0 / (2.0 * std::f64::consts::PI);
    let c = tapers.eigenvalues();
    let p = c.len() as f64;
    let predicted_variance = c.iter().map(|v| v * v).sum::<f64>() / (p * p) * true_level * true_level;
    let integrated_power = 2.0 * std::f64::consts::PI / grid.n as f64 * mean.iter().sum::<f64>();
    // Bins within the taper bandwidth of DC or Nyquist are excluded.
    let edge = (2.0 * config.time_bandwidth).ceil() as usize;
    let interior = (edge, grid.bins() - 1 - edge);
    Ok(CalibrationReport {
        config: config.clone(),
        concentrations: c.to_vec(),
        true_level,
        mean,
        variance,
        predicted_variance,
        integrated_power,
        interior,
    })
}
