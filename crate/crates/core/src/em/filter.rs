use nalgebra::{Cholesky, DVector};

use crate::error::{Error, Result};
use crate::harmonic::TrigTable;
use crate::linalg::{log_det, robust_cholesky, symmetrize, Mat};
use crate::obs::{logistic, softplus};

/// Observation model of one channel over one window, in terms of the linear
/// predictor `eta = A v`.
#[derive(Debug, Clone, Copy)]
pub enum WindowLikelihood<'a> {
    /// Tapered ensemble means of `trials` Bernoulli trials.
    Bernoulli { means: &'a [f64], trials: f64 },
    /// Directly observed samples with per-sample noise variance.
    Gaussian { values: &'a [f64], variances: &'a [f64] },
}

impl WindowLikelihood<'_> {
    /// Log-likelihood at `eta`, filling `residual` with its derivative in
    /// `eta` and `curvature` with the negated second derivative.
    pub fn evaluate(&self, eta: &[f64], residual: &mut [f64], curvature: &mut [f64]) -> f64 {
        match *self {
            WindowLikelihood::Bernoulli { means, trials } => {
                let mut ll = 0.0;
                for i in 0..eta.len() {
                    let s = logistic(eta[i]);
                    ll += means[i] * eta[i] - softplus(eta[i]);
                    residual[i] = trials * (means[i] - s);
                    curvature[i] = trials * s * (1.0 - s);
                }
                trials * ll
            }
            WindowLikelihood::Gaussian { values, variances } => {
                let mut ll = 0.0;
                for i in 0..eta.len() {
                    let prec = 1.0 / variances[i];
                    let e = values[i] - eta[i];
                    ll -= 0.5 * prec * e * e;
                    residual[i] = prec * e;
                    curvature[i] = prec;
                }
                ll
            }
        }
    }

    fn value(&self, eta: &[f64]) -> f64 {
        match *self {
            WindowLikelihood::Bernoulli { means, trials } => {
                trials * eta.iter().zip(means).map(|(e, y)| y * e - softplus(*e)).sum::<f64>()
            }
            WindowLikelihood::Gaussian { values, variances } => {
                -0.5 * eta
                    .iter()
                    .zip(values)
                    .zip(variances)
                    .map(|((e, y), s)| (y - e) * (y - e) / s)
                    .sum::<f64>()
            }
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            WindowLikelihood::Bernoulli { means, .. } => means.len(),
            WindowLikelihood::Gaussian { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Log-likelihood, gradient `A^T r` and Hessian `-A^T D A` at coefficient
/// vector `v`.
pub fn loglik_gradient_hessian(lik: &WindowLikelihood, table: &TrigTable, v: &[f64]) -> (f64, DVector<f64>, Mat) {
    let w = lik.len();
    let mut eta = vec![0.0; w];
    let mut r = vec![0.0; w];
    let mut d = vec![0.0; w];
    table.apply(v, &mut eta);
    let ll = lik.evaluate(&eta, &mut r, &mut d);
    let mut g = DVector::zeros(table.dim());
    table.apply_transpose(&r, g.as_mut_slice());
    (ll, g, -table.weighted_gram(&d))
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iters: usize,
}

/// Posterior mode and Laplace covariance of one window.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub mean: DVector<f64>,
    pub cov: Mat,
    pub iterations: usize,
    /// Laplace approximation of `log p(y_m | y_1..y_{m-1})`.
    pub log_evidence: f64,
}

/// One step of the recursive Gaussian-approximation filter.
///
/// Maximizes `l(A v) - (v - mu)^T Sigma^{-1} (v - mu) / 2` by damped Newton
/// iterations from `v = mu`, and returns the mode with the inverse negative
/// Hessian as its covariance.
pub fn forward_filter_step(
    lik: &WindowLikelihood,
    table: &TrigTable,
    prior_mean: &DVector<f64>,
    prior_cov: &Mat,
    settings: NewtonSettings,
) -> Result<FilterStep> {
    let dim = table.dim();
    // The window index is not known here; callers substitute it.
    let prior_chol = Cholesky::new(prior_cov.clone()).ok_or(Error::SingularCovariance { window: 0 })?;
    let mut precision = prior_chol.inverse();
    symmetrize(&mut precision);
    let prior_log_det = log_det(&prior_chol);

    let w = lik.len();
    let mut eta = vec![0.0; w];
    let mut r = vec![0.0; w];
    let mut d = vec![0.0; w];
    let objective = |v: &DVector<f64>, eta: &mut [f64]| {
        table.apply(v.as_slice(), eta);
        let dv = v - prior_mean;
        lik.value(eta) - 0.5 * dv.dot(&(&precision * &dv))
    };

    let mut v = prior_mean.clone();
    let mut iterations = 0;
    loop {
        table.apply(v.as_slice(), &mut eta);
        let ll = lik.evaluate(&eta, &mut r, &mut d);
        let dv = &v - prior_mean;
        let pdv = &precision * &dv;
        let f = ll - 0.5 * dv.dot(&pdv);
        let mut g = DVector::zeros(dim);
        table.apply_transpose(&r, g.as_mut_slice());
        g -= &pdv;
        let grad_norm = g.amax();
        if grad_norm <= settings.tol {
            break;
        }
        if iterations >= settings.max_iters {
            return Err(Error::NewtonDiverged { iterations, grad_norm });
        }
        let neg_hess = table.weighted_gram(&d) + &precision;
        let chol = robust_cholesky(&neg_hess)?;
        let step = chol.solve(&g);
        let decrement = g.dot(&step);
        // Once the predicted gain is at round-off level the gradient cannot
        // shrink further.
        if decrement <= 1e-14 * (1.0 + f.abs()) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = &v + &step * t;
            let fc = objective(&cand, &mut eta);
            if fc.is_finite() && fc >= f + 1e-4 * t * decrement {
                v = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            if decrement <= 1e-8 * (1.0 + f.abs()) {
                break;
            }
            return Err(Error::NewtonDiverged { iterations, grad_norm });
        }
    }

    table.apply(v.as_slice(), &mut eta);
    let ll = lik.evaluate(&eta, &mut r, &mut d);
    let dv = &v - prior_mean;
    let f = ll - 0.5 * dv.dot(&(&precision * &dv));
    let neg_hess = table.weighted_gram(&d) + &precision;
    let chol = robust_cholesky(&neg_hess)?;
    let mut cov = chol.inverse();
    symmetrize(&mut cov);
    let log_evidence = f - 0.5 * prior_log_det - 0.5 * log_det(&chol);
    Ok(FilterStep { mean: v, cov, iterations, log_evidence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::HarmonicLayout;
    use crate::obs::logistic;

    fn setup() -> (HarmonicLayout, TrigTable) {
        let layout = HarmonicLayout::new(1, 4, 3, 16, 1, 32.0).unwrap();
        let table = TrigTable::new(&layout, 0);
        (layout, table)
    }

    fn means_for(table: &TrigTable, v: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; table.len()];
        table.apply(v, &mut eta);
        eta.iter().map(|e| logistic(*e)).collect()
    }

    const SETTINGS: NewtonSettings = NewtonSettings { tol: 1e-8, max_iters: 100 };

    #[test]
    fn dominant_prior_keeps_prior_mean() {
        let (_, table) = setup();
        let truth = [0.5, -1.0, 0.3, 0.8, -0.2];
        let means = means_for(&table, &truth);
        let lik = WindowLikelihood::Bernoulli { means: &means, trials: 20.0 };
        let mu = DVector::from_vec(vec![0.1, 0.2, -0.3, 0.0, 0.4]);
        let cov = Mat::identity(5, 5) * 1e-8;
        let step = forward_filter_step(&lik, &table, &mu, &cov, SETTINGS).unwrap();
        assert!((&step.mean - &mu).amax() < 1e-6);
    }

    #[test]
    fn negative_hessian_is_positive_definite_along_path() {
        let (_, table) = setup();
        let means = means_for(&table, &[2.0, 1.0, -1.0, 0.5, 0.5]);
        let lik = WindowLikelihood::Bernoulli { means: &means, trials: 50.0 };
        for scale in [0.0, 0.5, 1.0, 3.0] {
            let v = vec![scale; 5];
            let (_, _, h) = loglik_gradient_hessian(&lik, &table, &v);
            let eig = nalgebra::SymmetricEigen::new(h);
            assert!(eig.eigenvalues.iter().all(|e| *e <= 1e-12));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (_, table) = setup();
        let means = means_for(&table, &[1.0, 0.3, -0.4, 0.2, 0.1]);
        let lik = WindowLikelihood::Bernoulli { means: &means, trials: 7.0 };
        let v = [0.2, -0.1, 0.5, 0.3, -0.6];
        let (f0, g, _) = loglik_gradient_hessian(&lik, &table, &v);
        for i in 0..5 {
            let mut vp = v;
            vp[i] += 1e-6;
            let (f1, _, _) = loglik_gradient_hessian(&lik, &table, &vp);
            assert!(((f1 - f0) / 1e-6 - g[i]).abs() < 1e-4 * (1.0 + g[i].abs()));
        }
    }

    #[test]
    fn singular_prior_is_rejected() {
        let (_, table) = setup();
        let means = vec![0.5; 16];
        let lik = WindowLikelihood::Bernoulli { means: &means, trials: 1.0 };
        let err = forward_filter_step(&lik, &table, &DVector::zeros(5), &Mat::zeros(5, 5), SETTINGS).unwrap_err();
        assert!(matches!(err, Error::SingularCovariance { .. }));
    }

    #[test]
    fn iteration_limit_reports_divergence() {
        let (_, table) = setup();
        let means = means_for(&table, &[3.0, 2.0, -1.0, 0.5, 0.5]);
        let lik = WindowLikelihood::Bernoulli { means: &means, trials: 50.0 };
        let settings = NewtonSettings { tol: 1e-12, max_iters: 1 };
        let err = forward_filter_step(&lik, &table, &DVector::zeros(5), &(Mat::identity(5, 5) * 1e3), settings)
            .unwrap_err();
        assert!(matches!(err, Error::NewtonDiverged { iterations: 1, .. }));
    }
}
