//! Independent reference implementations shared by the EM oracle tests and
//! the acceptance suite.

#![allow(dead_code)]

pub mod dpss_oracle;

use nalgebra::{DMatrix, DVector};
use ppmt_core::em::{
    filter_channel_windows, forward_filter_step, mstep_update_q, run_em, smooth, EmConfig, EmData, NewtonSettings,
    WindowLikelihood,
};
use ppmt_core::harmonic::{build_basis, BasisCache, HarmonicLayout, TrigTable};
use ppmt_core::obs::{ensemble_mean, logistic, simulate_spikes, softplus};
use ppmt_core::{Exec, TimeSeries};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

pub const SETTINGS: NewtonSettings = NewtonSettings { tol: 1e-10, max_iters: 100 };

pub struct KalmanRef {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub lag: Vec<DMatrix<f64>>,
}

/// Textbook covariance-form Kalman filter, RTS smoother and the
/// Shumway-Stoffer lag-one covariance recursion.
pub fn kalman_rts(ys: &[DVector<f64>], a: &[DMatrix<f64>], r: &DMatrix<f64>, q: &[DMatrix<f64>], alpha: f64) -> KalmanRef {
    let m_count = ys.len();
    let d = a[0].ncols();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut xf = Vec::new();
    let mut pf: Vec<DMatrix<f64>> = Vec::new();
    let mut pp = Vec::new();
    let mut gains = Vec::new();
    let mut x = DVector::zeros(d);
    let mut p = DMatrix::zeros(d, d);
    for m in 0..m_count {
        let xp = &x * alpha;
        let ppred = &p * (alpha * alpha) + &q[m];
        let s = &a[m] * &ppred * a[m].transpose() + r;
        let k = &ppred * a[m].transpose() * s.try_inverse().unwrap();
        x = &xp + &k * (&ys[m] - &a[m] * &xp);
        p = (&eye - &k * &a[m]) * &ppred;
        p = (&p + p.transpose()) * 0.5;
        xf.push(x.clone());
        pf.push(p.clone());
        pp.push(ppred);
        gains.push(k);
    }
    let mut xs = xf.clone();
    let mut ps = pf.clone();
    let mut js = vec![DMatrix::zeros(d, d); m_count];
    for m in (0..m_count - 1).rev() {
        let j = &pf[m] * alpha * pp[m + 1].clone().try_inverse().unwrap();
        xs[m] = &xf[m] + &j * (&xs[m + 1] - &xf[m] * alpha);
        ps[m] = &pf[m] + &j * (&ps[m + 1] - &pp[m + 1]) * j.transpose();
        js[m] = j;
    }
    let mut lag = vec![DMatrix::zeros(d, d); m_count];
    let last = m_count - 1;
    if last > 0 {
        lag[last] = (&eye - &gains[last] * &a[last]) * alpha * &pf[last - 1];
        for m in (1..last).rev() {
            lag[m] = &pf[m] * js[m - 1].transpose() + &js[m] * (&lag[m + 1] - &pf[m] * alpha) * js[m - 1].transpose();
        }
    }
    KalmanRef { means: xs, covs: ps, lag }
}

pub fn one_step_objective(lik_means: &[f64], trials: f64, a: &DMatrix<f64>, mu: &DVector<f64>, prec: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let eta = a * v;
    let ll: f64 = eta.iter().zip(lik_means).map(|(e, y)| trials * (y * e - softplus(*e))).sum();
    let dv = v - mu;
    ll - 0.5 * dv.dot(&(prec * &dv))
}

/// Exhaustive search on a 21^3 grid, zooming around the best point.
pub fn grid_search(f: impl Fn(&DVector<f64>) -> f64, centre: DVector<f64>, mut half_width: f64) -> DVector<f64> {
    let mut best = centre;
    for _ in 0..14 {
        let base = best.clone();
        let mut best_val = f(&best);
        for i in 0..21 {
            for j in 0..21 {
                for k in 0..21 {
                    let off = |t: usize| (t as f64 - 10.0) / 10.0 * half_width;
                    let v = &base + DVector::from_vec(vec![off(i), off(j), off(k)]);
                    let val = f(&v);
                    if val > best_val {
                        best_val = val;
                        best = v;
                    }
                }
            }
        }
        half_width *= 0.3;
    }
    best
}

pub fn q_function(q: &[f64], p: &[f64], rho: f64) -> f64 {
    let lik: f64 = q.iter().zip(p).map(|(q, p)| -0.5 * (q.ln() + p / q)).sum();
    let mut prior = 0.0;
    for i in 1..q.len() {
        if i + 2 < q.len() {
            prior += (q[i].ln() - q[i + 2].ln()).powi(2);
        }
    }
    lik - rho * prior
}

/// Cyclic coordinate ascent where each coordinate is maximized by a
/// zooming 1-D grid over log Q.
pub fn mstep_grid(p: &[f64], rho: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    for _ in 0..200 {
        for i in 0..q.len() {
            let mut centre = q[i].ln();
            let mut half = 3.0;
            for _ in 0..12 {
                let mut best = (f64::NEG_INFINITY, centre);
                for t in 0..=40 {
                    let u = centre + (t as f64 - 20.0) / 20.0 * half;
                    let mut trial = q.clone();
                    trial[i] = u.exp();
                    let v = q_function(&trial, p, rho);
                    if v > best.0 {
                        best = (v, u);
                    }
                }
                centre = best.1;
                half *= 0.2;
            }
            q[i] = centre.exp();
        }
    }
    q
}

/// Largest discrepancy between the Gaussian-likelihood smoother and the
/// classical Kalman/RTS recursion on a J = 1, M = 4 instance, each entry
/// scaled by the magnitude of the reference quantity.
pub fn rts_discrepancy(seed: u64) -> f64 {
    let layout = HarmonicLayout::new(1, 8, 4, 12, 4, 32.0).unwrap();
    let d = layout.local_dim();
    let w = layout.window_length;
    let alpha = 0.6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new(0.05, 0.6).unwrap();
    let q: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| u.sample(&mut rng)).collect()).collect();
    let values: Vec<f64> = (0..4 * w).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise = 0.3;
    let variances = vec![noise; 4 * w];
    let windows: Vec<WindowLikelihood> = (0..4)
        .map(|m| WindowLikelihood::Gaussian { values: &values[m * w..(m + 1) * w], variances: &variances[m * w..(m + 1) * w] })
        .collect();
    let cache = BasisCache::new(&layout);
    let (filtered, _, _) = filter_channel_windows(&windows, &cache, &q, alpha, SETTINGS).unwrap();
    let smoothed = smooth(&filtered, alpha).unwrap();

    let a: Vec<DMatrix<f64>> = (0..4).map(|m| build_basis(m, &layout).unwrap().matrix).collect();
    let ys: Vec<DVector<f64>> = (0..4).map(|m| DVector::from_column_slice(&values[m * w..(m + 1) * w])).collect();
    let qm: Vec<DMatrix<f64>> = q.iter().map(|v| DMatrix::from_diagonal(&DVector::from_vec(v.clone()))).collect();
    let reference = kalman_rts(&ys, &a, &(DMatrix::identity(w, w) * noise), &qm, alpha);

    let mut worst: f64 = 0.0;
    for m in 0..4 {
        let scale = 1.0 + reference.covs[m].amax();
        worst = worst.max((&smoothed.means[m] - &reference.means[m]).amax() / (1.0 + reference.means[m].amax()));
        worst = worst.max((&smoothed.covs[m] - &reference.covs[m]).amax() / scale);
        if m > 0 {
            worst = worst.max((&smoothed.lag_covs[m] - &reference.lag[m]).amax() / scale);
        }
    }
    worst
}

/// Largest coordinate difference between the forward Newton mode and a
/// zooming grid search on W = 8, N_max = 2 instances.
pub fn newton_grid_discrepancy(seed: u64) -> f64 {
    let layout = HarmonicLayout::new(1, 4, 2, 8, 1, 32.0).unwrap();
    let table = TrigTable::new(&layout, 0);
    let a = build_basis(0, &layout).unwrap().matrix;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..3 {
        let truth = DVector::<f64>::from_fn(3, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.3 * z
        });
        let eta = &a * &truth;
        let means: Vec<f64> =
            eta.iter().map(|e| logistic(*e) + 0.05 * (case as f64 - 1.0)).map(|p| p.clamp(0.01, 0.99)).collect();
        let trials = 30.0;
        let mu = DVector::from_vec(vec![0.1, -0.2, 0.05]);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 2.0]));
        let prec = cov.clone().try_inverse().unwrap();
        let lik = WindowLikelihood::Bernoulli { means: &means, trials };
        let step = forward_filter_step(&lik, &table, &mu, &cov, SETTINGS).unwrap();
        let best = grid_search(|v| one_step_objective(&means, trials, &a, &mu, &prec, v), mu.clone(), 4.0);
        worst = worst.max((&step.mean - &best).amax());
    }
    worst
}

/// Largest relative difference between the M-step and coordinate grid
/// search, over random moments and both prior weights.
pub fn mstep_grid_discrepancy(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new(0.05, 20.0).unwrap();
    let mut worst: f64 = 0.0;
    for rho in [0.0, 0.2] {
        for _ in 0..3 {
            let p: Vec<f64> = (0..5).map(|_| u.sample(&mut rng)).collect();
            let q = mstep_update_q(&p, rho, 1e-12, 1e-12, 100).unwrap();
            let oracle = mstep_grid(&p, rho);
            for i in 0..5 {
                worst = worst.max((q[i] - oracle[i]).abs() / oracle[i]);
            }
        }
    }
    worst
}

/// Largest relative decrease between consecutive objective values.
pub fn max_objective_drop(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| (w[0] - w[1]) / w[0].abs().max(1e-300)).fold(f64::NEG_INFINITY, f64::max)
}

/// Per-channel objective traces of a J = 2 spiking EM run.
pub fn spiking_em_run(seed: u64) -> (EmConfig, ppmt_core::em::EmResult) {
    let layout = HarmonicLayout::new(2, 32, 12, 64, 4, 32.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = layout.samples();
    let mut latent = TimeSeries::zeros(k, 2);
    for t in 0..k {
        let e: f64 = StandardNormal.sample(&mut rng);
        latent.set(t, 0, -2.0 + (t as f64 * 0.35).sin() + 0.3 * e);
        latent.set(t, 1, -1.0 + 0.8 * (t as f64 * 0.9).cos());
    }
    let raster = simulate_spikes(&latent, 20, 1.0 / 32.0, 3).unwrap();
    let mean = ensemble_mean(&raster);
    let data = EmData { values: mean.values, trials: 20, taper_power: vec![] };
    let config = EmConfig { exec: Exec::Sequential, max_em_iters: 30, ..EmConfig::default() };
    let fit = run_em(&data, &layout, &config).unwrap();
    (config, fit)
}
