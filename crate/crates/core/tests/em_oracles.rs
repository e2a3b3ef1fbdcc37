mod support;

use nalgebra::{DMatrix, DVector};
use ppmt_core::em::{filter_channel_windows, forward_filter_step, run_em, smooth, EmConfig, EmData, WindowLikelihood};
use ppmt_core::harmonic::{BasisCache, HarmonicLayout, TrigTable};
use ppmt_core::obs::logistic;
use ppmt_core::{Exec, TimeSeries};
use support::*;

#[test]
fn gaussian_surrogate_matches_classical_rts() {
    let d = rts_discrepancy(42);
    assert!(d < 1e-8, "{d}");
}

#[test]
fn single_window_smoother_is_filter() {
    let layout = HarmonicLayout::new(1, 8, 3, 16, 1, 32.0).unwrap();
    let cache = BasisCache::new(&layout);
    let means = vec![0.3; 16];
    let lik = [WindowLikelihood::Bernoulli { means: &means, trials: 10.0 }];
    let (f, _, _) = filter_channel_windows(&lik, &cache, &[vec![1.0; 5]], 0.5, SETTINGS).unwrap();
    let s = smooth(&f, 0.5).unwrap();
    assert_eq!(s.means[0], f.means[0]);
    assert_eq!(s.covs[0], f.covs[0]);
}

#[test]
fn zero_alpha_decouples_windows() {
    let layout = HarmonicLayout::new(1, 8, 3, 16, 3, 32.0).unwrap();
    let cache = BasisCache::new(&layout);
    let means: Vec<f64> = (0..48).map(|k| 0.2 + 0.1 * (k as f64 * 0.4).sin()).collect();
    let lik: Vec<WindowLikelihood> =
        (0..3).map(|m| WindowLikelihood::Bernoulli { means: &means[m * 16..(m + 1) * 16], trials: 10.0 }).collect();
    let (f, _, _) = filter_channel_windows(&lik, &cache, &vec![vec![1.0; 5]; 3], 0.0, SETTINGS).unwrap();
    let s = smooth(&f, 0.0).unwrap();
    for m in 0..3 {
        assert_eq!(s.means[m], f.means[m]);
        assert_eq!(s.lag_covs[m].amax(), 0.0);
    }
}

#[test]
fn newton_mode_matches_grid_search() {
    let d = newton_grid_discrepancy(7);
    assert!(d < 1e-3, "{d}");
}

#[test]
fn flat_prior_recovers_generating_coefficients() {
    let layout = HarmonicLayout::new(1, 4, 2, 8, 1, 32.0).unwrap();
    let table = TrigTable::new(&layout, 0);
    let truth = [0.4, -0.7, 0.25];
    let mut eta = vec![0.0; 8];
    table.apply(&truth, &mut eta);
    let means: Vec<f64> = eta.iter().map(|e| logistic(*e)).collect();
    let lik = WindowLikelihood::Bernoulli { means: &means, trials: 1e6 };
    let cov = DMatrix::identity(3, 3) * 1e6;
    let step = forward_filter_step(&lik, &table, &DVector::zeros(3), &cov, SETTINGS).unwrap();
    for i in 0..3 {
        assert!((step.mean[i] - truth[i]).abs() < 1e-3);
    }
}

#[test]
fn mstep_matches_grid_search() {
    let d = mstep_grid_discrepancy(99);
    assert!(d <= 1e-4, "{d}");
}

#[test]
fn em_objective_is_monotone_on_spiking_data() {
    let (config, fit) = spiking_em_run(5);
    for ch in &fit.state.channels {
        assert!(max_objective_drop(&ch.objective) <= 1e-6, "{:?}", ch.objective);
    }
    assert!(max_objective_drop(&fit.state.objective_trace()) <= 1e-6);
    for m in 0..fit.state.layout.windows {
        for (i, q) in fit.state.q(m).iter().enumerate() {
            assert!(*q >= config.q_floor, "Q[{m}][{i}] = {q}");
        }
    }
}

#[test]
fn constant_half_means_give_no_harmonics() {
    let layout = HarmonicLayout::new(1, 100, 20, 200, 2, 32.0).unwrap();
    let data = EmData { values: TimeSeries::new(400, 1, vec![0.5; 400]).unwrap(), trials: 100, taper_power: vec![] };
    let config = EmConfig { alpha: 0.0, rho: 0.0, exec: Exec::Sequential, ..EmConfig::default() };
    let fit = run_em(&data, &layout, &config).unwrap();
    for m in 0..2 {
        let w = fit.state.mean(m);
        assert!(w.iter().skip(1).all(|v| v.abs() < 1e-2));
    }
}

#[test]
fn rejects_bad_config() {
    let layout = HarmonicLayout::new(1, 8, 3, 16, 1, 32.0).unwrap();
    let data = EmData { values: TimeSeries::zeros(16, 1), trials: 1, taper_power: vec![] };
    let config = EmConfig { alpha: 1.0, ..EmConfig::default() };
    assert!(run_em(&data, &layout, &config).unwrap_err().is_validation());
    let mixed = EmConfig {
        obs_mode: ppmt_core::em::ObsMode::Mixed { noise_variance: 0.0, continuous_channels: vec![0] },
        ..EmConfig::default()
    };
    assert!(run_em(&data, &layout, &mixed).unwrap_err().is_validation());
}
