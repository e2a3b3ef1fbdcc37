use serde::{Deserialize, Serialize};

use super::{EstimatorReport, Method, Observations};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::obs::{ensemble_mean, logistic};
use crate::series::TimeSeries;
use crate::taper::{direct_multitaper_esd, FreqGrid, TaperSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsConfig {
    pub variance_init: f64,
    pub max_em_iters: usize,
    pub tol: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SsConfig {
    fn default() -> Self {
        SsConfig { variance_init: 0.1, max_em_iters: 50, tol: 1e-6, newton_tol: 1e-8, newton_max_iters: 100, exec: Exec::default() }
    }
}

#[derive(Debug, Clone)]
pub struct RandomWalkFit {
    pub path: Vec<f64>,
    pub variances: Vec<f64>,
    pub rw_variance: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Logit clamp for the starting state when the first bins are saturated.
const INIT_CLIP: f64 = 1e-3;

/// Random-walk state-space smoother for one channel of ensemble means:
/// `x_k = x_{k-1} + eps_k`, `L nbar_k ~ Binomial(L, logistic(x_k))`, with
/// the random-walk variance and the starting state fitted by EM.
pub fn random_walk_smoother(means: &[f64], trials: usize, config: &SsConfig) -> Result<RandomWalkFit> {
    let k = means.len();
    if k < 2 || trials == 0 {
        return Err(Error::validation("need at least two bins and one trial"));
    }
    if means.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::validation("ensemble means must lie in [0, 1]"));
    }
    if !(config.variance_init > 0.0) {
        return Err(Error::validation("initial random-walk variance must be positive"));
    }
    let l = trials as f64;
    let head = means.iter().take(k.min(100)).sum::<f64>() / k.min(100) as f64;
    let head = head.clamp(INIT_CLIP, 1.0 - INIT_CLIP);
    let mut x0 = (head / (1.0 - head)).ln();
    let mut s2 = config.variance_init;

    let mut xf = vec![0.0; k];
    let mut vf = vec![0.0; k];
    let mut vp = vec![0.0; k];
    let mut xs = vec![0.0; k];
    let mut vs = vec![0.0; k];
    let mut gain = vec![0.0; k];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_em_iters {
        iterations += 1;
        let (mut x, mut v) = (x0, 0.0);
        for i in 0..k {
            let pv = v + s2;
            let px = x;
            x = posterior_mode(px, pv, means[i], l, config)?;
            let p = logistic(x);
            v = 1.0 / (1.0 / pv + l * p * (1.0 - p));
            xf[i] = x;
            vf[i] = v;
            vp[i] = pv;
        }
        xs[k - 1] = xf[k - 1];
        vs[k - 1] = vf[k - 1];
        for i in (0..k - 1).rev() {
            gain[i] = vf[i] / vp[i + 1];
            xs[i] = xf[i] + gain[i] * (xs[i + 1] - xf[i]);
            vs[i] = vf[i] + gain[i] * gain[i] * (vs[i + 1] - vp[i + 1]);
        }
        // E[(x_k - x_{k-1})^2] with cov(x_k, x_{k-1}) = A_{k-1} V_{k|K}.
        let mut acc = vs[0] + (xs[0] - x0).powi(2);
        for i in 1..k {
            let cov = gain[i - 1] * vs[i];
            acc += vs[i] + vs[i - 1] - 2.0 * cov + (xs[i] - xs[i - 1]).powi(2);
        }
        let next = (acc / k as f64).max(1e-12);
        let change = (next - s2).abs() / s2;
        s2 = next;
        x0 = xs[0];
        if change <= config.tol {
            converged = true;
            break;
        }
    }
    Ok(RandomWalkFit { path: xs, variances: vs, rw_variance: s2, iterations, converged })
}

/// Solves `x = px + pv L (nbar - logistic(x))` by safeguarded Newton. The
/// left side minus the right is increasing in `x`, and the root lies
/// between `px` and the first explicit step.
fn posterior_mode(px: f64, pv: f64, nbar: f64, l: f64, config: &SsConfig) -> Result<f64> {
    let f = |x: f64| x - px - pv * l * (nbar - logistic(x));
    let step = px + pv * l * (nbar - logistic(px));
    let (mut lo, mut hi) = if step >= px { (px, step) } else { (step, px) };
    let mut x = px;
    for _ in 0..config.newton_max_iters {
        let fx = f(x);
        if fx.abs() <= config.newton_tol {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let p = logistic(x);
        let mut next = x - fx / (1.0 + pv * l * p * (1.0 - p));
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= config.newton_tol * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NewtonDiverged { iterations: config.newton_max_iters, grad_norm: f(x).abs() })
}

/// Smooths each spiking channel with [`random_walk_smoother`] and applies
/// the direct multitaper estimator to the smoothed logit paths. Directly
/// observed channels are passed through unsmoothed.
pub fn ss_esd(obs: &Observations, grid: FreqGrid, tapers: &TaperSet, config: &SsConfig) -> Result<EstimatorReport> {
    let start = std::time::Instant::now();
    obs.validate()?;
    let mean = ensemble_mean(obs.raster);
    let sources = obs.sources();
    let cols = config.exec.try_map(sources.len(), |j| match sources[j] {
        Ok(c) => random_walk_smoother(&mean.values.column(c), obs.raster.trials(), config).map(|f| f.path),
        Err(c) => Ok(obs.continuous.expect("validated").column(c)),
    })?;
    let series = TimeSeries::from_columns(&cols)?;
    let esd = direct_multitaper_esd(&series, grid, tapers, config.exec)?;
    Ok(EstimatorReport { esd, method: Method::Ss, runtime_s: start.elapsed().as_secs_f64(), diagnostics: Vec::new() })
}
