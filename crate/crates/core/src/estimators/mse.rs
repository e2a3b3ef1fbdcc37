use crate::error::{Error, Result};
use crate::taper::EsdSeries;

/// Floor applied below each series' own peak before converting to dB.
const DB_FLOOR: f64 = 80.0;

/// `10 log10 |Psi|` for every (m, n, r, t), floored 80 dB below the peak.
pub fn db_magnitudes(esd: &EsdSeries) -> Vec<f64> {
    let peak = esd.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = if peak > 0.0 { peak * 10f64.powf(-DB_FLOOR / 10.0) } else { f64::MIN_POSITIVE };
    esd.values().iter().map(|v| 10.0 * v.norm().max(floor).log10()).collect()
}

/// Squared dB-scale error summed over all windows, frequencies and channel
/// pairs, divided by the summed squared dB magnitudes of the truth.
pub fn relative_mse(estimate: &EsdSeries, truth: &EsdSeries) -> Result<f64> {
    if !estimate.same_shape(truth) {
        return Err(Error::validation("estimate and truth differ in shape"));
    }
    let e = db_magnitudes(estimate);
    let t = db_magnitudes(truth);
    let num: f64 = e.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = t.iter().map(|b| b * b).sum();
    if den == 0.0 {
        return Err(Error::numerical("truth has zero dB-scale power"));
    }
    Ok(num / den)
}
