use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Autoregressive model `y_k = sum_j a_j y_{k-j} + e_k` with innovation
/// variance chosen so the stationary variance is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub coeffs: Vec<f64>,
    pub noise_var: f64,
}

impl ArModel {
    /// Model with a conjugate pole pair at angle `2 pi f / f_s` for each
    /// radius in `radii`, giving a spectral peak at `f`.
    pub fn tuned(f: f64, fs: f64, radii: &[f64]) -> Result<Self> {
        if !(f > 0.0 && f < fs / 2.0) {
            return Err(Error::validation(format!("component frequency {f} Hz outside (0, {})", fs / 2.0)));
        }
        if radii.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::validation("AR pole radii must lie in [0, 1) for stability"));
        }
        let theta = 2.0 * PI * f / fs;
        // Expand prod_i (1 - 2 r_i cos(theta) z^-1 + r_i^2 z^-2).
        let mut poly = vec![1.0];
        for &r in radii {
            let factor = [1.0, -2.0 * r * theta.cos(), r * r];
            let mut next = vec![0.0; poly.len() + 2];
            for (i, p) in poly.iter().enumerate() {
                for (j, q) in factor.iter().enumerate() {
                    next[i + j] += p * q;
                }
            }
            poly = next;
        }
        let coeffs: Vec<f64> = poly[1..].iter().map(|c| -c).collect();
        ArModel::with_unit_variance(coeffs)
    }

    /// Scale the innovations so the stationary variance is one.
    pub fn with_unit_variance(coeffs: Vec<f64>) -> Result<Self> {
        let gain = impulse_energy(&coeffs);
        if !gain.is_finite() {
            return Err(Error::validation("AR model is not stable"));
        }
        Ok(ArModel { coeffs, noise_var: 1.0 / gain })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Spectral density at angular frequency `omega` (radians/sample),
    /// normalized so it integrates to the variance over `(-pi, pi]`.
    pub fn spectrum(&self, omega: f64) -> f64 {
        let a: Complex64 = Complex64::new(1.0, 0.0)
            - self
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| Complex64::from_polar(*c, -omega * (j + 1) as f64))
                .sum::<Complex64>();
        self.noise_var / (2.0 * PI * a.norm_sqr())
    }

    /// Realization of length `len` after discarding `burn_in` samples,
    /// rescaled to unit sample variance about its sample mean.
    pub fn simulate<R: Rng>(&self, len: usize, burn_in: usize, rng: &mut R) -> Vec<f64> {
        let p = self.order();
        let sd = self.noise_var.sqrt();
        let mut buf = vec![0.0; len + burn_in];
        for k in 0..buf.len() {
            let e: f64 = StandardNormal.sample(rng);
            let mut v = sd * e;
            for j in 0..p.min(k) {
                v += self.coeffs[j] * buf[k - 1 - j];
            }
            buf[k] = v;
        }
        let mut y = buf.split_off(burn_in);
        normalize(&mut y);
        y
    }
}

fn normalize(y: &mut [f64]) {
    let n = y.len() as f64;
    if n < 2.0 {
        return;
    }
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        let s = var.sqrt();
        y.iter_mut().for_each(|v| *v /= s);
    }
}

/// `sum_k psi_k^2` for the impulse response of `1 / (1 - sum a_j z^-j)`.
fn impulse_energy(coeffs: &[f64]) -> f64 {
    let p = coeffs.len();
    let mut psi = vec![0.0; 200_000];
    psi[0] = 1.0;
    let mut energy = 1.0;
    for k in 1..psi.len() {
        let mut v = 0.0;
        for j in 0..p.min(k) {
            v += coeffs[j] * psi[k - 1 - j];
        }
        psi[k] = v;
        energy += v * v;
        if !energy.is_finite() || energy > 1e300 {
            return f64::INFINITY;
        }
        if k > 64 * (p + 1) && v.abs() < 1e-18 && psi[k - 1].abs() < 1e-18 {
            break;
        }
    }
    if psi.last().map(|v| v.abs() > 1e-9).unwrap_or(false) {
        return f64::INFINITY;
    }
    energy
}

/// One component: AR(6) realization tuned to `f` with unit variance.
pub fn gen_ar_component<R: Rng>(f: f64, fs: f64, len: usize, radii: &[f64], burn_in: usize, rng: &mut R) -> Result<Vec<f64>> {
    Ok(ArModel::tuned(f, fs, radii)?.simulate(len, burn_in, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const RADII: [f64; 3] = [0.94, 0.96, 0.98];

    #[test]
    fn spectrum_integrates_to_one() {
        let model = ArModel::tuned(1.15, 32.0, &RADII).unwrap();
        let n = 200_000;
        let dw = 2.0 * PI / n as f64;
        let total: f64 = (0..n).map(|i| model.spectrum(-PI + (i as f64 + 0.5) * dw) * dw).sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn spectral_peak_at_tuned_frequency() {
        let model = ArModel::tuned(1.15, 32.0, &RADII).unwrap();
        let best = (1..1000)
            .map(|i| i as f64 * 0.01)
            .max_by(|a, b| model.spectrum(2.0 * PI * a / 32.0).partial_cmp(&model.spectrum(2.0 * PI * b / 32.0)).unwrap())
            .unwrap();
        assert!((best - 1.15).abs() < 0.011);
    }

    #[test]
    fn zero_radius_is_white() {
        let model = ArModel::tuned(1.0, 32.0, &[0.0, 0.0, 0.0]).unwrap();
        assert!(model.coeffs.iter().all(|c| *c == 0.0));
        assert!((model.noise_var - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ArModel::tuned(1.0, 32.0, &[1.0, 0.5, 0.5]).is_err());
        assert!(ArModel::tuned(16.0, 32.0, &RADII).is_err());
        assert!(ArModel::with_unit_variance(vec![1.5]).is_err());
    }

    #[test]
    fn seeded_realization_is_reproducible() {
        let a = gen_ar_component(1.15, 32.0, 500, &RADII, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = gen_ar_component(1.15, 32.0, 500, &RADII, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let var = a.iter().map(|v| v * v).sum::<f64>() / 500.0 - (a.iter().sum::<f64>() / 500.0).powi(2);
        assert!((var - 1.0).abs() < 1e-12);
    }
}
