//! EM estimation of the harmonic state-space model.
//!
//! With `Phi = alpha I` and diagonal `Q_m`, neither the likelihood nor the
//! prior couples channels, so the E-step and M-step factor exactly over
//! channels. Each channel is therefore fitted with its own `2 N_max - 1`
//! dimensional state and its own stopping rule, and the stacked moments
//! are assembled afterwards.

mod filter;
mod mstep;
mod smoother;

pub use filter::{forward_filter_step, loglik_gradient_hessian, FilterStep, NewtonSettings, WindowLikelihood};
pub use mstep::mstep_update_q;
pub use smoother::{innovation_second_moments, smooth, Filtered, Smoothed};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::harmonic::{assemble_esd, BasisCache, HarmonicLayout};
use crate::linalg::Mat;
use crate::series::TimeSeries;
use crate::taper::EsdSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObsMode {
    Spiking,
    /// Channels in `continuous_channels` are observed directly in Gaussian
    /// noise of variance `noise_variance`; the rest are spiking.
    Mixed { noise_variance: f64, continuous_channels: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub alpha: f64,
    pub rho: f64,
    pub max_em_iters: usize,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub q_init: f64,
    pub q_floor: f64,
    pub objective_tol: f64,
    pub obs_mode: ObsMode,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            alpha: 0.4,
            rho: 0.2,
            max_em_iters: 50,
            newton_tol: 1e-8,
            newton_max_iters: 100,
            q_init: 0.1,
            q_floor: 1e-8,
            objective_tol: 1e-6,
            obs_mode: ObsMode::Spiking,
            exec: Exec::default(),
        }
    }
}

impl EmConfig {
    pub fn validate(&self, channels: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::validation("alpha must lie in [0, 1)"));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::validation("rho must be non-negative"));
        }
        for (name, v) in [
            ("newton_tol", self.newton_tol),
            ("q_init", self.q_init),
            ("q_floor", self.q_floor),
            ("objective_tol", self.objective_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if self.max_em_iters == 0 || self.newton_max_iters == 0 {
            return Err(Error::validation("iteration limits must be positive"));
        }
        if let ObsMode::Mixed { noise_variance, continuous_channels } = &self.obs_mode {
            if !(*noise_variance > 0.0) || !noise_variance.is_finite() {
                return Err(Error::validation("observation noise variance must be positive"));
            }
            if continuous_channels.iter().any(|&j| j >= channels) {
                return Err(Error::validation("continuous channel index out of range"));
            }
        }
        Ok(())
    }

    pub fn is_continuous(&self, channel: usize) -> bool {
        match &self.obs_mode {
            ObsMode::Spiking => false,
            ObsMode::Mixed { continuous_channels, .. } => continuous_channels.contains(&channel),
        }
    }

    fn newton(&self) -> NewtonSettings {
        NewtonSettings { tol: self.newton_tol, max_iters: self.newton_max_iters }
    }
}

/// Input to [`run_em`]: tapered ensemble means for spiking channels and
/// tapered samples for directly observed channels.
#[derive(Debug, Clone)]
pub struct EmData {
    pub values: TimeSeries,
    pub trials: usize,
    /// Squared taper gain at each within-window position; scales the noise
    /// variance of directly observed channels. Empty means untapered.
    pub taper_power: Vec<f64>,
}

/// Relative floor on the taper power used for Gaussian noise variances, so
/// that the taper's near-zero edges do not become infinitely precise.
const TAPER_POWER_FLOOR: f64 = 1e-4;

enum ChannelObs {
    Bernoulli { means: Vec<f64>, trials: f64 },
    Gaussian { values: Vec<f64>, variances: Vec<f64> },
}

impl ChannelObs {
    fn window(&self, m: usize, w: usize) -> WindowLikelihood<'_> {
        let r = m * w..(m + 1) * w;
        match self {
            ChannelObs::Bernoulli { means, trials } => WindowLikelihood::Bernoulli { means: &means[r], trials: *trials },
            ChannelObs::Gaussian { values, variances } => {
                WindowLikelihood::Gaussian { values: &values[r.clone()], variances: &variances[r] }
            }
        }
    }
}

/// Smoothed moments and fitted covariances of one channel.
#[derive(Debug, Clone)]
pub struct ChannelFit {
    pub smoothed: Smoothed,
    /// Diagonal of `Q_m` per window, in local order.
    pub q: Vec<Vec<f64>>,
    /// Surrogate objective after each E-step.
    pub objective: Vec<f64>,
    /// Newton iterations summed over windows, per E-step.
    pub newton_iterations: Vec<usize>,
    pub converged: bool,
}

/// Smoothed state moments for all channels.
#[derive(Debug, Clone)]
pub struct StateEstimate {
    pub layout: HarmonicLayout,
    pub channels: Vec<ChannelFit>,
}

impl StateEstimate {
    /// Stacked `w_{m|M}`.
    pub fn mean(&self, m: usize) -> DVector<f64> {
        let l = &self.layout;
        let mut out = DVector::zeros(l.state_dim());
        for (j, fit) in self.channels.iter().enumerate() {
            for (i, v) in fit.smoothed.means[m].iter().enumerate() {
                out[l.global_index(i, j)] = *v;
            }
        }
        out
    }

    /// Stacked `Sigma_{m|M}`; cross-channel blocks are zero.
    pub fn cov(&self, m: usize) -> Mat {
        let l = &self.layout;
        let mut out = Mat::zeros(l.state_dim(), l.state_dim());
        for (j, fit) in self.channels.iter().enumerate() {
            let c = &fit.smoothed.covs[m];
            for a in 0..c.nrows() {
                for b in 0..c.ncols() {
                    out[(l.global_index(a, j), l.global_index(b, j))] = c[(a, b)];
                }
            }
        }
        out
    }

    /// `R_m = Sigma_{m|M} + w_{m|M} w_{m|M}^T`.
    pub fn second_moment(&self, m: usize) -> Mat {
        let w = self.mean(m);
        self.cov(m) + &w * w.transpose()
    }

    /// Stacked diagonal of `Q_m`.
    pub fn q(&self, m: usize) -> Vec<f64> {
        let l = &self.layout;
        let mut out = vec![0.0; l.state_dim()];
        for (j, fit) in self.channels.iter().enumerate() {
            for (i, v) in fit.q[m].iter().enumerate() {
                out[l.global_index(i, j)] = *v;
            }
        }
        out
    }

    /// Surrogate objective summed over channels, one value per EM iteration.
    /// Channels that stopped early contribute their final value.
    pub fn objective_trace(&self) -> Vec<f64> {
        let len = self.channels.iter().map(|c| c.objective.len()).max().unwrap_or(0);
        (0..len)
            .map(|i| self.channels.iter().map(|c| c.objective[i.min(c.objective.len() - 1)]).sum())
            .collect()
    }

    pub fn iterations(&self) -> usize {
        self.channels.iter().map(|c| c.objective.len()).max().unwrap_or(0)
    }
}

/// Output of [`run_em`].
#[derive(Debug, Clone)]
pub struct EmResult {
    pub state: StateEstimate,
    /// `R_m` for each window.
    pub second_moments: Vec<Mat>,
}

impl EmResult {
    /// ESD assembled from the second moments (before any taper-gain
    /// calibration).
    pub fn esd(&self) -> Result<EsdSeries> {
        esd_from_moments(&self.second_moments, &self.state.layout)
    }
}

pub fn esd_from_moments(moments: &[Mat], layout: &HarmonicLayout) -> Result<EsdSeries> {
    let grid = layout.grid();
    let mut esd = EsdSeries::zeros(moments.len(), layout.channels, layout.window_length, grid);
    for (m, r) in moments.iter().enumerate() {
        for b in 0..grid.bins() {
            let block = assemble_esd(r, b + 1, layout)?;
            esd.matrix_mut(m, b).copy_from_slice(&block);
        }
    }
    Ok(esd)
}

/// Alternate E-steps (filter and smoother) and M-steps until the surrogate
/// objective settles or `max_em_iters` E-steps have run.
///
/// The surrogate objective is the Laplace approximation of the marginal
/// log-likelihood accumulated by the filter, plus the log-smoothness prior
/// on `Q`. The returned moments are those of the last E-step.
pub fn run_em(data: &EmData, layout: &HarmonicLayout, config: &EmConfig) -> Result<EmResult> {
    layout.validate()?;
    config.validate(layout.channels)?;
    let v = &data.values;
    if v.samples() != layout.samples() || v.channels() != layout.channels {
        return Err(Error::validation(format!(
            "data is {} x {}, layout expects {} x {}",
            v.samples(),
            v.channels(),
            layout.samples(),
            layout.channels
        )));
    }
    if !v.is_finite() {
        return Err(Error::validation("EM input contains non-finite values"));
    }
    if data.trials == 0 {
        return Err(Error::validation("need at least one trial"));
    }
    if !data.taper_power.is_empty() && data.taper_power.len() != layout.window_length {
        return Err(Error::validation("taper power must have one entry per window sample"));
    }

    let cache = BasisCache::new(layout);
    let fits = config.exec.try_map(layout.channels, |j| {
        let obs = channel_obs(data, layout, config, j)?;
        fit_channel(&obs, &cache, layout, config)
            .map_err(|(iteration, e)| Error::Em { iteration, channel: j, source: Box::new(e) })
    })?;
    let state = StateEstimate { layout: *layout, channels: fits };
    let second_moments = (0..layout.windows).map(|m| state.second_moment(m)).collect();
    Ok(EmResult { state, second_moments })
}

fn channel_obs(data: &EmData, layout: &HarmonicLayout, config: &EmConfig, j: usize) -> Result<ChannelObs> {
    let values = data.values.column(j);
    if let (true, ObsMode::Mixed { noise_variance, .. }) = (config.is_continuous(j), &config.obs_mode) {
        let w = layout.window_length;
        let power: Vec<f64> = if data.taper_power.is_empty() { vec![1.0; w] } else { data.taper_power.clone() };
        let floor = TAPER_POWER_FLOOR * power.iter().copied().fold(0.0, f64::max);
        let variances = (0..values.len()).map(|k| noise_variance * power[k % w].max(floor)).collect();
        Ok(ChannelObs::Gaussian { values, variances })
    } else {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::validation(format!("spiking channel {j} has means outside [0, 1]")));
        }
        Ok(ChannelObs::Bernoulli { means: values, trials: data.trials as f64 })
    }
}

type Tagged<T> = std::result::Result<T, (usize, Error)>;

fn fit_channel(obs: &ChannelObs, cache: &BasisCache, layout: &HarmonicLayout, config: &EmConfig) -> Tagged<ChannelFit> {
    let dim = layout.local_dim();
    let mut q = vec![vec![config.q_init; dim]; layout.windows];
    let mut objective = Vec::new();
    let mut newton_iterations = Vec::new();
    let mut converged = false;
    let mut iteration = 0;
    let smoothed = loop {
        let (filtered, log_evidence, newton) = filter_channel(obs, cache, layout, &q, config).map_err(|e| (iteration, e))?;
        let smoothed = smooth(&filtered, config.alpha).map_err(|e| (iteration, e))?;
        let value = log_evidence + log_prior(&q, config.rho);
        newton_iterations.push(newton);
        if let Some(prev) = objective.last().copied() {
            let prev: f64 = prev;
            if (value - prev).abs() <= config.objective_tol * prev.abs().max(1e-300) {
                converged = true;
            }
        }
        objective.push(value);
        iteration += 1;
        if converged || iteration >= config.max_em_iters {
            break smoothed;
        }
        let moments = innovation_second_moments(&smoothed, config.alpha);
        for (m, p) in moments.iter().enumerate() {
            let p: Vec<f64> = p.iter().map(|v| v.max(f64::MIN_POSITIVE)).collect();
            q[m] = mstep_update_q(&p, config.rho, config.q_floor, config.newton_tol, config.newton_max_iters)
                .map_err(|e| (iteration, e))?;
        }
    };
    Ok(ChannelFit { smoothed, q, objective, newton_iterations, converged })
}

/// Forward pass of one channel. Returns the filtered moments, the summed
/// Laplace log-evidence and the total number of Newton iterations.
pub fn filter_channel_windows(
    windows: &[WindowLikelihood],
    cache: &BasisCache,
    q: &[Vec<f64>],
    alpha: f64,
    settings: NewtonSettings,
) -> Result<(Filtered, f64, usize)> {
    let dim = cache.window(0).dim();
    let mut means = Vec::with_capacity(windows.len());
    let mut covs: Vec<Mat> = Vec::with_capacity(windows.len());
    let mut pred_covs = Vec::with_capacity(windows.len());
    let mut evidence = 0.0;
    let mut newton = 0;
    let mut prev_mean = DVector::zeros(dim);
    let mut prev_cov = Mat::zeros(dim, dim);
    for (m, lik) in windows.iter().enumerate() {
        let prior_mean = &prev_mean * alpha;
        let mut prior_cov = &prev_cov * (alpha * alpha);
        for i in 0..dim {
            prior_cov[(i, i)] += q[m][i];
        }
        let step = forward_filter_step(lik, cache.window(m), &prior_mean, &prior_cov, settings).map_err(|e| match e {
            Error::SingularCovariance { .. } => Error::SingularCovariance { window: m },
            other => other,
        })?;
        evidence += step.log_evidence;
        newton += step.iterations;
        prev_mean = step.mean.clone();
        prev_cov = step.cov.clone();
        means.push(step.mean);
        covs.push(step.cov);
        pred_covs.push(prior_cov);
    }
    Ok((Filtered { means, covs, pred_covs }, evidence, newton))
}

fn filter_channel(
    obs: &ChannelObs,
    cache: &BasisCache,
    layout: &HarmonicLayout,
    q: &[Vec<f64>],
    config: &EmConfig,
) -> Result<(Filtered, f64, usize)> {
    let windows: Vec<WindowLikelihood> = (0..layout.windows).map(|m| obs.window(m, layout.window_length)).collect();
    filter_channel_windows(&windows, cache, q, config.alpha, config.newton())
}

/// Log-smoothness prior on `log Q` across adjacent frequency blocks.
pub fn log_prior(q: &[Vec<f64>], rho: f64) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    q.iter()
        .map(|qm| {
            let bins = (qm.len() - 1) / 2;
            let mut s = 0.0;
            for n in 1..bins {
                for off in 0..2 {
                    let a = qm[2 * n - 1 + off].ln();
                    let b = qm[2 * n + 1 + off].ln();
                    s += (a - b) * (a - b);
                }
            }
            -rho * s
        })
        .sum()
}
