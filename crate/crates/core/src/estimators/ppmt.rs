use serde::{Deserialize, Serialize};

use super::{EstimatorReport, Method, Observations};
use crate::em::{run_em, EmConfig, EmData, ObsMode};
use crate::error::{Error, Result};
use crate::harmonic::HarmonicLayout;
use crate::obs::{ensemble_mean, taper_ensemble_mean_with, Saturation};
use crate::series::TimeSeries;
use crate::taper::{EsdSeries, TaperSet};

/// Gain applied to the logit-domain signal inside each window.
///
/// dpss tapers have unit energy, so their entries are of order `1/sqrt(W)`.
/// Multiplying a logit of order one by such small values drives every
/// tapered mean to 1/2 and the Bernoulli likelihood carries almost no
/// information. `UnitPower` rescales the taper by `sqrt(W)` so that the
/// tapered signal keeps the power of the original.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaperGain {
    #[default]
    UnitPower,
    UnitEnergy,
}

impl TaperGain {
    pub fn gains(self, taper: &[f64]) -> Vec<f64> {
        let s = match self {
            TaperGain::UnitPower => (taper.len() as f64).sqrt(),
            TaperGain::UnitEnergy => 1.0,
        };
        taper.iter().map(|v| v * s).collect()
    }

    /// Factor that brings the assembled harmonic-state ESD onto the scale of
    /// the direct multitaper estimate.
    pub fn calibration(self, layout: &HarmonicLayout) -> f64 {
        let w = layout.window_length as f64;
        let two_n = 2.0 * layout.n as f64;
        match self {
            TaperGain::UnitPower => w / two_n,
            TaperGain::UnitEnergy => w * w / two_n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpmtConfig {
    pub em: EmConfig,
    pub taper_gain: TaperGain,
    pub saturation: Saturation,
}

impl Default for PpmtConfig {
    fn default() -> Self {
        PpmtConfig { em: EmConfig::default(), taper_gain: TaperGain::default(), saturation: Saturation::default() }
    }
}

#[derive(Debug, Clone)]
pub struct TaperDiagnostics {
    pub taper: usize,
    pub em_iterations: usize,
    pub objective: Vec<f64>,
    pub converged_channels: usize,
    pub newton_iterations: usize,
}

/// Multitaper ESD from spiking (and optionally directly observed) channels:
/// one EM fit per taper on tapered ensemble means, averaged over tapers.
///
/// `config.em.obs_mode` is overwritten from `obs` when continuous channels
/// are present; the noise variance must be supplied in `noise_variance`.
pub fn ppmt_esd(
    obs: &Observations,
    layout: &HarmonicLayout,
    tapers: &TaperSet,
    config: &PpmtConfig,
    noise_variance: Option<f64>,
) -> Result<EstimatorReport> {
    let start = std::time::Instant::now();
    obs.validate()?;
    layout.validate()?;
    if tapers.len() != layout.window_length {
        return Err(Error::validation(format!(
            "tapers have length {}, windows have {} samples",
            tapers.len(),
            layout.window_length
        )));
    }
    if obs.samples() != layout.samples() || obs.channels() != layout.channels {
        return Err(Error::validation("observations do not match the layout"));
    }
    let mut em = config.em.clone();
    if obs.continuous.is_some() {
        let nv = noise_variance.ok_or_else(|| Error::validation("continuous channels need a noise variance"))?;
        em.obs_mode = ObsMode::Mixed { noise_variance: nv, continuous_channels: obs.continuous_channels.to_vec() };
    }
    em.validate(layout.channels)?;

    let mean = ensemble_mean(obs.raster);
    let sources = obs.sources();
    let calibration = config.taper_gain.calibration(layout);
    let w = layout.window_length;

    let per_taper = em.exec.try_map(tapers.count(), |p| {
        let gains = config.taper_gain.gains(tapers.taper(p));
        let mut values = TimeSeries::zeros(layout.samples(), layout.channels);
        for m in 0..layout.windows {
            let tapered = taper_ensemble_mean_with(&mean, &gains, m, config.saturation)?;
            for (j, src) in sources.iter().enumerate() {
                for i in 0..w {
                    let v = match *src {
                        Ok(c) => tapered.get(i, c),
                        Err(c) => gains[i] * obs.continuous.expect("validated").get(m * w + i, c),
                    };
                    values.set(m * w + i, j, v);
                }
            }
        }
        let data = EmData { values, trials: obs.raster.trials(), taper_power: gains.iter().map(|g| g * g).collect() };
        let tag = |e: Error| Error::Taper { taper: p, source: Box::new(e) };
        let fit = run_em(&data, layout, &em).map_err(tag)?;
        let mut esd = fit.esd().map_err(tag)?;
        esd.scale(calibration);
        let diag = TaperDiagnostics {
            taper: p,
            em_iterations: fit.state.iterations(),
            objective: fit.state.objective_trace(),
            converged_channels: fit.state.channels.iter().filter(|c| c.converged).count(),
            newton_iterations: fit.state.channels.iter().flat_map(|c| &c.newton_iterations).sum(),
        };
        Ok::<_, Error>((esd, diag))
    })?;

    let (esds, diagnostics): (Vec<EsdSeries>, Vec<TaperDiagnostics>) = per_taper.into_iter().unzip();
    let esd = EsdSeries::mean_of(&esds)?;
    Ok(EstimatorReport { esd, method: Method::Ppmt, runtime_s: start.elapsed().as_secs_f64(), diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs::SpikeRaster;
    use crate::taper::compute_dpss;

    fn layout() -> HarmonicLayout {
        HarmonicLayout::new(1, 8, 4, 16, 3, 32.0).unwrap()
    }

    fn raster(seed: u64) -> SpikeRaster {
        let lay = layout();
        let latent = TimeSeries::from_columns(&[(0..lay.samples())
            .map(|k| -0.5 + (2.0 * std::f64::consts::PI * k as f64 / 8.0).cos())
            .collect()])
        .unwrap();
        crate::obs::simulate_spikes(&latent, 30, 1.0 / 32.0, seed).unwrap()
    }

    #[test]
    fn single_taper_average_is_identity() {
        let lay = layout();
        let r = raster(1);
        let tapers = compute_dpss(16, 2.0, 2).unwrap();
        let cfg = PpmtConfig { em: EmConfig { max_em_iters: 3, ..Default::default() }, ..Default::default() };
        let two = ppmt_esd(&Observations::spiking(&r), &lay, &tapers, &cfg, None).unwrap();
        let one = ppmt_esd(&Observations::spiking(&r), &lay, &tapers.truncated(1), &cfg, None).unwrap();
        assert_eq!(two.diagnostics.len(), 2);
        assert_eq!(one.diagnostics.len(), 1);
        one.esd.check_invariants().unwrap();
        two.esd.check_invariants().unwrap();
    }

    #[test]
    fn rejects_wrong_taper_length() {
        let r = raster(2);
        let tapers = compute_dpss(12, 2.0, 2).unwrap();
        let err = ppmt_esd(&Observations::spiking(&r), &layout(), &tapers, &PpmtConfig::default(), None).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn calibration_factors() {
        let lay = layout();
        assert!((TaperGain::UnitPower.calibration(&lay) - 1.0).abs() < 1e-15);
        assert!((TaperGain::UnitEnergy.calibration(&lay) - 16.0).abs() < 1e-15);
        let g = TaperGain::UnitPower.gains(&[0.25; 16]);
        assert!((g.iter().map(|v| v * v).sum::<f64>() - 16.0).abs() < 1e-12);
    }
}
