//! Simulated latent processes with known evolutionary spectra.
//!
//! Both scenarios mix AR(6) components tuned to fixed frequencies, with
//! amplitude modulation, step activations and lagged copies that produce
//! time-varying auto- and cross-spectra. The closed-form reference spectra
//! are built from the same component models.

mod ar;
mod cases;
mod truth;

pub use ar::{gen_ar_component, ArModel};
pub use cases::{gen_case1, gen_case2, generate, Simulation};
pub use truth::true_esd_reference;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// Three latent channels, all observed through spiking.
    Case1,
    /// Two latent channels: the first spiking, the second observed directly
    /// in Gaussian noise.
    Case2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimScenario {
    pub case: Case,
    pub sample_rate: f64,
    pub samples: usize,
    pub window_length: usize,
    pub trials: usize,
    pub seed: u64,
    /// Component frequencies f_1 .. f_6 in Hz.
    pub frequencies: [f64; 6],
    /// Frequency of the stepped component at t = 0 (second scenario).
    pub f7_start: f64,
    pub f7_step: f64,
    pub f7_interval_s: f64,
    pub modulation_hz: f64,
    pub pole_radii: [f64; 3],
    pub dc_offset: f64,
    /// Signal-to-noise ratio of each latent channel, in dB.
    pub snr_db: f64,
    /// Signal-to-noise ratio of the directly observed channel, in dB.
    pub observation_snr_db: f64,
    /// Standard deviation of every AR component before mixing.
    pub component_std: f64,
    pub burn_in: usize,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            case: Case::Case1,
            sample_rate: 32.0,
            samples: 16_000,
            window_length: 3200,
            trials: 20,
            seed: 0,
            frequencies: [1.15, 0.95, 1.3, 1.5, 0.65, 1.85],
            f7_start: 0.9,
            f7_step: 0.06,
            f7_interval_s: 200.0,
            modulation_hz: 0.0008,
            pole_radii: [0.94, 0.96, 0.98],
            dc_offset: -5.5,
            snr_db: 20.0,
            observation_snr_db: 20.0,
            component_std: 0.7,
            burn_in: 5000,
        }
    }
}

/// Lag (samples) of the shared component in the second channel.
pub const LAG_SHARED: usize = 6;
/// Lag (samples) of the sixth component in the third channel before the
/// midpoint.
pub const LAG_THIRD: usize = 10;

impl SimScenario {
    /// Full-scale first scenario: 2000 s at 32 Hz.
    pub fn full(case: Case, seed: u64) -> Self {
        SimScenario { case, samples: 64_000, seed, ..SimScenario::default() }
    }

    /// Desk-scale scenario: 500 s at 32 Hz, five windows of 100 s.
    pub fn desk(case: Case, seed: u64) -> Self {
        SimScenario { case, seed, ..SimScenario::default() }
    }

    pub fn channels(&self) -> usize {
        match self.case {
            Case::Case1 => 3,
            Case::Case2 => 2,
        }
    }

    pub fn windows(&self) -> usize {
        self.samples / self.window_length
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate / 2.0;
        if !(self.sample_rate > 0.0) {
            return Err(Error::validation("sample rate must be positive"));
        }
        if self.window_length == 0 || self.samples == 0 || self.samples % self.window_length != 0 {
            return Err(Error::validation(format!(
                "K = {} is not a positive multiple of W = {}",
                self.samples, self.window_length
            )));
        }
        if self.trials == 0 {
            return Err(Error::validation("need at least one trial"));
        }
        let mut freqs = self.frequencies.to_vec();
        if self.case == Case::Case2 {
            freqs.extend(self.f7_schedule().iter().copied());
        }
        if freqs.iter().any(|f| !(*f > 0.0 && *f < nyquist)) {
            return Err(Error::validation(format!("component frequencies must lie in (0, {nyquist}) Hz")));
        }
        if self.pole_radii.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::validation("pole radii must lie in [0, 1)"));
        }
        if !(self.component_std > 0.0) || !self.snr_db.is_finite() || !self.observation_snr_db.is_finite() {
            return Err(Error::validation("component scale and SNRs must be finite and positive"));
        }
        if self.case == Case::Case2 && !(self.f7_interval_s > 0.0) {
            return Err(Error::validation("f7 interval must be positive"));
        }
        Ok(())
    }

    /// Samples per segment of the stepped component.
    pub fn f7_segment_len(&self) -> usize {
        ((self.f7_interval_s * self.sample_rate).round() as usize).max(1)
    }

    /// Frequency of the stepped component in each segment.
    pub fn f7_schedule(&self) -> Vec<f64> {
        let seg = self.f7_segment_len();
        let count = self.samples.div_ceil(seg);
        (0..count).map(|i| self.f7_start - self.f7_step * i as f64).collect()
    }

    /// Frequency of the stepped component at time `t_sec`.
    pub fn f7_at(&self, t_sec: f64) -> f64 {
        self.f7_start - self.f7_step * (t_sec / self.f7_interval_s).floor()
    }

    /// First sample of the activation of the fifth component in channel 1.
    pub fn onset(&self) -> usize {
        (2 * self.samples) / 5
    }

    /// First sample at which the sixth component in channel 3 is in phase.
    pub fn midpoint(&self) -> usize {
        self.samples / 2
    }
}
