use nalgebra::{Cholesky, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Mat};

/// Forward-pass output for one channel.
#[derive(Debug, Clone)]
pub struct Filtered {
    /// `w_{m|m}`.
    pub means: Vec<DVector<f64>>,
    /// `Sigma_{m|m}`.
    pub covs: Vec<Mat>,
    /// `Sigma_{m|m-1}`.
    pub pred_covs: Vec<Mat>,
}

/// Fixed-interval smoothed moments for one channel.
#[derive(Debug, Clone)]
pub struct Smoothed {
    /// `w_{m|M}`.
    pub means: Vec<DVector<f64>>,
    /// `Sigma_{m|M}`.
    pub covs: Vec<Mat>,
    /// `Sigma_{m,m-1|M}`; the first entry is zero since the initial state is
    /// fixed.
    pub lag_covs: Vec<Mat>,
}

/// Rauch-Tung-Striebel backward pass for the transition `w_m = alpha w_{m-1}
/// + e_m`.
pub fn smooth(filtered: &Filtered, alpha: f64) -> Result<Smoothed> {
    let windows = filtered.means.len();
    if windows == 0 {
        return Err(Error::validation("nothing to smooth"));
    }
    let dim = filtered.means[0].len();
    let mut means = filtered.means.clone();
    let mut covs = filtered.covs.clone();
    let mut lag_covs = vec![Mat::zeros(dim, dim); windows];

    for m in (0..windows.saturating_sub(1)).rev() {
        let pred = &filtered.pred_covs[m + 1];
        let chol = Cholesky::new(pred.clone()).ok_or(Error::SingularCovariance { window: m + 1 })?;
        // B = alpha Sigma_{m|m} Sigma_{m+1|m}^{-1}; both factors are symmetric.
        let gain = chol.solve(&filtered.covs[m]).transpose() * alpha;
        let innovation = &means[m + 1] - &filtered.means[m] * alpha;
        means[m] = &filtered.means[m] + &gain * innovation;
        let mut cov = &filtered.covs[m] + &gain * (&covs[m + 1] - pred) * gain.transpose();
        symmetrize(&mut cov);
        lag_covs[m + 1] = &covs[m + 1] * gain.transpose();
        covs[m] = cov;
    }
    Ok(Smoothed { means, covs, lag_covs })
}

/// Diagonal of `E[(w_m - alpha w_{m-1})(w_m - alpha w_{m-1})^T]` under the
/// smoothed posterior, with `w_0 = 0`.
pub fn innovation_second_moments(s: &Smoothed, alpha: f64) -> Vec<Vec<f64>> {
    (0..s.means.len())
        .map(|m| {
            let w = &s.means[m];
            (0..w.len())
                .map(|i| {
                    let mut p = s.covs[m][(i, i)] + w[i] * w[i];
                    if m > 0 {
                        let prev = &s.means[m - 1];
                        p -= 2.0 * alpha * (s.lag_covs[m][(i, i)] + w[i] * prev[i]);
                        p += alpha * alpha * (s.covs[m - 1][(i, i)] + prev[i] * prev[i]);
                    }
                    p
                })
                .collect()
        })
        .collect()
}
