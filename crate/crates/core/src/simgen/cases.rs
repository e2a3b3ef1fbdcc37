use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ArModel, Case, SimScenario, LAG_SHARED, LAG_THIRD};
use crate::error::{Error, Result};
use crate::obs::{simulate_spikes, SpikeRaster};
use crate::series::TimeSeries;

/// Output of a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Latent processes, `K x J` (including DC offsets).
    pub latent: TimeSeries,
    /// Spikes for the spiking channels.
    pub raster: SpikeRaster,
    /// Indices (into `latent`) of the spiking channels.
    pub spiking_channels: Vec<usize>,
    /// Noisy direct observations of the remaining channels.
    pub continuous: Option<TimeSeries>,
    /// Noise variance of the direct observations.
    pub noise_variance: Option<f64>,
}

const NOISE_STREAM: u64 = 1000;
const OBSERVATION_STREAM: u64 = 2000;
const F7_STREAM: u64 = 3000;
const SPIKE_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Component `i` (1-based) with `LAG_THIRD` extra leading samples, so
/// `y[k + LAG_THIRD]` is the value at time `k`.
fn component(s: &SimScenario, i: usize) -> Result<Vec<f64>> {
    let model = ArModel::tuned(s.frequencies[i - 1], s.sample_rate, &s.pole_radii)?;
    let mut rng = rng_for(s.seed, i as u64);
    let mut y = model.simulate(s.samples + LAG_THIRD, s.burn_in, &mut rng);
    y.iter_mut().for_each(|v| *v *= s.component_std);
    Ok(y)
}

fn white(s: &SimScenario, stream: u64) -> Vec<f64> {
    let mut rng = rng_for(s.seed, stream);
    (0..s.samples).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn modulation(s: &SimScenario, k: usize) -> f64 {
    (2.0 * PI * s.modulation_hz / s.sample_rate * k as f64).cos()
}

/// Time average of the squared modulation over the record.
pub(super) fn mean_modulation_power(s: &SimScenario) -> f64 {
    (0..s.samples).map(|k| modulation(s, k).powi(2)).sum::<f64>() / s.samples as f64
}

/// Noise standard deviation for a channel with the given time-averaged signal
/// variance.
pub(super) fn noise_std(signal_var: f64, snr_db: f64) -> f64 {
    (signal_var / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// Time-averaged signal variance of each latent channel, excluding noise.
pub(super) fn signal_variances(s: &SimScenario) -> Vec<f64> {
    let c2 = s.component_std * s.component_std;
    let active = (s.samples - s.onset()) as f64 / s.samples as f64;
    let mod_power = mean_modulation_power(s);
    let x2 = 4.0 * 0.83 * 0.83 * c2;
    match s.case {
        Case::Case1 => vec![c2 * (mod_power + 1.44 + 1.44 * active), x2, 3.0 * c2],
        Case::Case2 => vec![c2 * (mod_power + 2.0), x2],
    }
}

fn channel2(s: &SimScenario, y: &[Vec<f64>], sigma: f64, noise: &[f64]) -> Vec<f64> {
    (0..s.samples)
        .map(|k| {
            let at = |i: usize, lag: usize| y[i - 1][k + LAG_THIRD - lag];
            0.83 * (at(2, 0) + at(4, LAG_SHARED) + at(5, 0) + at(6, 0)) + sigma * noise[k] + s.dc_offset
        })
        .collect()
}

fn spikes(s: &SimScenario, latent: &TimeSeries) -> Result<SpikeRaster> {
    simulate_spikes(latent, s.trials, 1.0 / s.sample_rate, s.seed ^ SPIKE_SEED_MIX)
}

/// Trivariate latent process observed entirely through spiking.
pub fn gen_case1(s: &SimScenario) -> Result<Simulation> {
    if s.case != Case::Case1 {
        return Err(Error::validation("scenario is not the first case"));
    }
    s.validate()?;
    let y: Vec<Vec<f64>> = (1..=6).map(|i| component(s, i)).collect::<Result<_>>()?;
    let var = signal_variances(s);
    let sig: Vec<f64> = var.iter().map(|v| noise_std(*v, s.snr_db)).collect();
    let noise: Vec<Vec<f64>> = (0..3).map(|j| white(s, NOISE_STREAM + j as u64)).collect();
    let (onset, mid) = (s.onset(), s.midpoint());

    let x1: Vec<f64> = (0..s.samples)
        .map(|k| {
            let at = |i: usize| y[i - 1][k + LAG_THIRD];
            let step = if k >= onset { 1.0 } else { 0.0 };
            at(1) * modulation(s, k) + 1.2 * at(4) + 1.2 * at(5) * step + sig[0] * noise[0][k] + s.dc_offset
        })
        .collect();
    let x2 = channel2(s, &y, sig[1], &noise[1]);
    let x3: Vec<f64> = (0..s.samples)
        .map(|k| {
            let at = |i: usize, lag: usize| y[i - 1][k + LAG_THIRD - lag];
            let y6 = if k < mid { at(6, LAG_THIRD) } else { at(6, 0) };
            at(3, 0) + at(5, 0) + y6 + sig[2] * noise[2][k] + s.dc_offset
        })
        .collect();

    let latent = TimeSeries::from_columns(&[x1, x2, x3])?;
    let raster = spikes(s, &latent)?;
    Ok(Simulation { latent, raster, spiking_channels: vec![0, 1, 2], continuous: None, noise_variance: None })
}

/// Stepped-frequency component: independent unit-variance AR segments whose
/// tuning frequency follows the schedule.
fn stepped_component(s: &SimScenario) -> Result<Vec<f64>> {
    let seg = s.f7_segment_len();
    let mut out = Vec::with_capacity(s.samples);
    for (i, f) in s.f7_schedule().into_iter().enumerate() {
        let len = seg.min(s.samples - i * seg);
        let model = ArModel::tuned(f, s.sample_rate, &s.pole_radii)?;
        let mut rng = rng_for(s.seed, F7_STREAM + i as u64);
        out.extend(model.simulate(len, s.burn_in, &mut rng).into_iter().map(|v| v * s.component_std));
    }
    Ok(out)
}

/// Bivariate process: channel 1 spiking, channel 2 observed in noise.
pub fn gen_case2(s: &SimScenario) -> Result<Simulation> {
    if s.case != Case::Case2 {
        return Err(Error::validation("scenario is not the second case"));
    }
    s.validate()?;
    let y: Vec<Vec<f64>> = (1..=6).map(|i| component(s, i)).collect::<Result<_>>()?;
    let y7 = stepped_component(s)?;
    let var = signal_variances(s);
    let sig: Vec<f64> = var.iter().map(|v| noise_std(*v, s.snr_db)).collect();
    let noise: Vec<Vec<f64>> = (0..2).map(|j| white(s, NOISE_STREAM + j as u64)).collect();

    let x1: Vec<f64> = (0..s.samples)
        .map(|k| {
            let at = |i: usize| y[i - 1][k + LAG_THIRD];
            at(1) * modulation(s, k) + at(4) + y7[k] + sig[0] * noise[0][k] + s.dc_offset
        })
        .collect();
    let x2 = channel2(s, &y, sig[1], &noise[1]);

    // Observation noise relative to the channel's full fluctuation.
    let obs_var = (var[1] + sig[1] * sig[1]) / 10f64.powf(s.observation_snr_db / 10.0);
    let obs = white(s, OBSERVATION_STREAM);
    let observed: Vec<f64> = x2.iter().zip(&obs).map(|(x, e)| x + obs_var.sqrt() * e).collect();

    let latent = TimeSeries::from_columns(&[x1, x2])?;
    let raster = spikes(s, &latent.select_channels(&[0])?)?;
    Ok(Simulation {
        latent,
        raster,
        spiking_channels: vec![0],
        continuous: Some(TimeSeries::from_columns(&[observed])?),
        noise_variance: Some(obs_var),
    })
}

pub fn generate(s: &SimScenario) -> Result<Simulation> {
    match s.case {
        Case::Case1 => gen_case1(s),
        Case::Case2 => gen_case2(s),
    }
}
