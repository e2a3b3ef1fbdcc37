use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{EsdSeries, FreqGrid, TaperSet};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::series::TimeSeries;

/// Evaluates `sum_w nu_w x_w exp(-i omega_n k_w)` on the grid by folding the
/// tapered window onto a length-2N buffer (index `k mod 2N`) and taking one
/// FFT. Folding is exact because every grid frequency is a multiple of
/// `2 pi / 2N`.
pub(crate) struct GridDft {
    grid: FreqGrid,
    fft: Arc<dyn Fft<f64>>,
}

impl GridDft {
    pub(crate) fn new(grid: FreqGrid) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * grid.n);
        GridDft { grid, fft }
    }

    /// `first_index` is the global (1-based) time index of `values[0]`.
    pub(crate) fn coefficients(&self, values: &[f64], taper: &[f64], first_index: usize) -> Vec<Complex64> {
        let len = 2 * self.grid.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        let mut idx = first_index % len;
        for (x, nu) in values.iter().zip(taper) {
            buf[idx].re += x * nu;
            idx += 1;
            if idx == len {
                idx = 0;
            }
        }
        self.fft.process(&mut buf);
        buf[1..self.grid.n_max].to_vec()
    }
}

/// Eigen-coefficients of one tapered window on the grid.
pub fn eigen_coefficients(values: &[f64], taper: &[f64], first_index: usize, grid: FreqGrid) -> Vec<Complex64> {
    GridDft::new(grid).coefficients(values, taper, first_index)
}

/// Non-overlapping sliding-window multitaper estimate of a fully observed
/// multichannel series.
///
/// Each window is demeaned per channel, tapered, and the eigen-coefficient
/// cross products are averaged over tapers with weight `1 / (2 pi P)`, so a
/// unit-variance white series has flat density `1 / (2 pi)` and the density
/// integrates to the variance over `(-pi, pi]`.
pub fn direct_multitaper_esd(series: &TimeSeries, grid: FreqGrid, tapers: &TaperSet, exec: Exec) -> Result<EsdSeries> {
    let w = tapers.len();
    let k = series.samples();
    if w == 0 || k % w != 0 {
        return Err(Error::validation(format!("series length {k} is not a multiple of window length {w}")));
    }
    if !series.is_finite() {
        return Err(Error::validation("series contains non-finite values"));
    }
    let windows = k / w;
    let j = series.channels();
    let p = tapers.count();
    let dft = GridDft::new(grid);
    let norm = 1.0 / (2.0 * PI * p as f64);

    let blocks = exec.map(windows, |m| {
        let coeffs: Vec<Vec<Vec<Complex64>>> = (0..j)
            .map(|r| {
                let mut x: Vec<f64> = (0..w).map(|i| series.get(m * w + i, r)).collect();
                let mean = x.iter().sum::<f64>() / w as f64;
                x.iter_mut().for_each(|v| *v -= mean);
                tapers.tapers().iter().map(|nu| dft.coefficients(&x, nu, m * w + 1)).collect()
            })
            .collect();
        let mut block = vec![Complex64::new(0.0, 0.0); grid.bins() * j * j];
        for b in 0..grid.bins() {
            for r in 0..j {
                for t in 0..j {
                    let s: Complex64 = (0..p).map(|q| coeffs[r][q][b] * coeffs[t][q][b].conj()).sum();
                    block[(b * j + r) * j + t] = s * norm;
                }
            }
        }
        block
    });

    EsdSeries::from_values(windows, j, w, grid, blocks.concat())
}
