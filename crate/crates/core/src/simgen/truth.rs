use std::f64::consts::PI;

use num_complex::Complex64;

use super::cases::{noise_std, signal_variances};
use super::{ArModel, Case, SimScenario, LAG_SHARED, LAG_THIRD};
use crate::error::Result;
use crate::taper::{EsdSeries, FreqGrid};

/// One AR component entering several channels with given coefficients and
/// lags, active for a fraction `weight` of the window.
pub(crate) struct Contribution {
    pub model: ArModel,
    pub coeffs: Vec<f64>,
    pub lags: Vec<usize>,
    pub weight: f64,
}

impl Contribution {
    fn add_to(&self, omega: f64, scale: f64, out: &mut [Complex64]) {
        let j = self.coeffs.len();
        let s = self.weight * scale * self.model.spectrum(omega);
        for r in 0..j {
            for t in 0..j {
                let phase = -omega * (self.lags[r] as f64 - self.lags[t] as f64);
                out[r * j + t] += Complex64::from_polar(s * self.coeffs[r] * self.coeffs[t], phase);
            }
        }
    }
}

fn overlap(lo: usize, hi: usize, a: usize, b: usize) -> f64 {
    let s = lo.max(a);
    let e = hi.min(b);
    if e > s {
        (e - s) as f64
    } else {
        0.0
    }
}

fn contributions(s: &SimScenario, m: usize) -> Result<Vec<Contribution>> {
    let w = s.window_length;
    let (lo, hi) = (m * w, (m + 1) * w);
    let model = |i: usize| ArModel::tuned(s.frequencies[i - 1], s.sample_rate, &s.pole_radii);
    let half = 0.5f64.sqrt();
    let mut out = Vec::new();
    let mut add = |model: ArModel, coeffs: Vec<f64>, lags: Vec<usize>, weight: f64| {
        if weight > 0.0 {
            out.push(Contribution { model, coeffs, lags, weight });
        }
    };
    match s.case {
        Case::Case1 => {
            let on = overlap(lo, hi, s.onset(), s.samples) / w as f64;
            let before = overlap(lo, hi, 0, s.midpoint()) / w as f64;
            add(model(1)?, vec![half, 0.0, 0.0], vec![0, 0, 0], 1.0);
            add(model(2)?, vec![0.0, 0.83, 0.0], vec![0, 0, 0], 1.0);
            add(model(3)?, vec![0.0, 0.0, 1.0], vec![0, 0, 0], 1.0);
            add(model(4)?, vec![1.2, 0.83, 0.0], vec![0, LAG_SHARED, 0], 1.0);
            add(model(5)?, vec![1.2, 0.83, 1.0], vec![0, 0, 0], on);
            add(model(5)?, vec![0.0, 0.83, 1.0], vec![0, 0, 0], 1.0 - on);
            add(model(6)?, vec![0.0, 0.83, 1.0], vec![0, 0, LAG_THIRD], before);
            add(model(6)?, vec![0.0, 0.83, 1.0], vec![0, 0, 0], 1.0 - before);
        }
        Case::Case2 => {
            add(model(1)?, vec![half, 0.0], vec![0, 0], 1.0);
            add(model(4)?, vec![1.0, 0.83], vec![0, LAG_SHARED], 1.0);
            for i in [2, 5, 6] {
                add(model(i)?, vec![0.0, 0.83], vec![0, 0], 1.0);
            }
            let seg = s.f7_segment_len();
            for (i, f) in s.f7_schedule().into_iter().enumerate() {
                let frac = overlap(lo, hi, i * seg, ((i + 1) * seg).min(s.samples)) / w as f64;
                add(ArModel::tuned(f, s.sample_rate, &s.pole_radii)?, vec![1.0, 0.0], vec![0, 0], frac);
            }
        }
    }
    Ok(out)
}

/// Closed-form evolutionary spectral density of the scenario's latent
/// channels on the grid.
///
/// Each window combines the component spectra with their mixing
/// coefficients and lag phases; step activations contribute in proportion to
/// the fraction of the window they cover. The slow amplitude modulation of
/// the first component is folded into its own bin as half its power, and
/// the additive white noise adds a flat `sigma^2 / (2 pi)` to each diagonal.
pub fn true_esd_reference(s: &SimScenario, grid: FreqGrid) -> Result<EsdSeries> {
    s.validate()?;
    let j = s.channels();
    let c2 = s.component_std * s.component_std;
    let noise: Vec<f64> = signal_variances(s).iter().map(|v| noise_std(*v, s.snr_db).powi(2)).collect();
    let mut esd = EsdSeries::zeros(s.windows(), j, s.window_length, grid);
    for m in 0..s.windows() {
        let parts = contributions(s, m)?;
        for b in 0..grid.bins() {
            let omega = grid.omega(b);
            let out = esd.matrix_mut(m, b);
            for part in &parts {
                part.add_to(omega, c2, out);
            }
            for (r, var) in noise.iter().enumerate() {
                out[r * j + r] += var / (2.0 * PI);
            }
        }
    }
    Ok(esd)
}
