use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::hermitian_eig_range;

/// Frequency grid `omega_n = n * pi / N` for `n = 1 .. n_max - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqGrid {
    /// Grid denominator N.
    pub n: usize,
    /// Number of retained bins plus one (the DC bin is never reported).
    pub n_max: usize,
    /// Sampling rate in Hz.
    pub sample_rate: f64,
}

impl FreqGrid {
    pub fn new(n: usize, n_max: usize, sample_rate: f64) -> Result<Self> {
        if n_max < 2 || n_max > n {
            return Err(Error::validation(format!("need 2 <= N_max <= N, got N_max={n_max}, N={n}")));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::validation("sample rate must be positive"));
        }
        Ok(FreqGrid { n, n_max, sample_rate })
    }

    /// Number of reported bins, `N_max - 1`.
    pub fn bins(&self) -> usize {
        self.n_max - 1
    }

    /// Angular frequency of bin `b` (0-based, i.e. `n = b + 1`).
    pub fn omega(&self, b: usize) -> f64 {
        (b + 1) as f64 * PI / self.n as f64
    }

    pub fn frequency_hz(&self, b: usize) -> f64 {
        (b + 1) as f64 * self.sample_rate / (2.0 * self.n as f64)
    }

    /// Bin whose frequency is closest to `hz`.
    pub fn nearest_bin(&self, hz: f64) -> usize {
        let b = (hz * 2.0 * self.n as f64 / self.sample_rate).round() as isize - 1;
        b.clamp(0, self.bins() as isize - 1) as usize
    }
}

/// Evolutionary spectral density matrices: `M` windows by `N_max - 1`
/// frequencies of `J x J` Hermitian matrices, stored in (m, n, r, t) order.
#[derive(Debug, Clone, PartialEq)]
pub struct EsdSeries {
    windows: usize,
    channels: usize,
    window_length: usize,
    grid: FreqGrid,
    values: Vec<Complex64>,
}

impl EsdSeries {
    pub fn zeros(windows: usize, channels: usize, window_length: usize, grid: FreqGrid) -> Self {
        let len = windows * grid.bins() * channels * channels;
        EsdSeries { windows, channels, window_length, grid, values: vec![Complex64::new(0.0, 0.0); len] }
    }

    pub fn from_values(
        windows: usize,
        channels: usize,
        window_length: usize,
        grid: FreqGrid,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        let expected = windows * grid.bins() * channels * channels;
        if values.len() != expected {
            return Err(Error::validation(format!(
                "ESD has {} values, expected {expected}",
                values.len()
            )));
        }
        Ok(EsdSeries { windows, channels, window_length, grid, values })
    }

    pub fn windows(&self) -> usize {
        self.windows
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn grid(&self) -> FreqGrid {
        self.grid
    }

    pub fn bins(&self) -> usize {
        self.grid.bins()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn offset(&self, m: usize, b: usize) -> usize {
        let jj = self.channels * self.channels;
        (m * self.bins() + b) * jj
    }

    /// The `J x J` matrix at window `m`, bin `b`, row-major.
    pub fn matrix(&self, m: usize, b: usize) -> &[Complex64] {
        let o = self.offset(m, b);
        &self.values[o..o + self.channels * self.channels]
    }

    pub fn matrix_mut(&mut self, m: usize, b: usize) -> &mut [Complex64] {
        let o = self.offset(m, b);
        let jj = self.channels * self.channels;
        &mut self.values[o..o + jj]
    }

    #[inline]
    pub fn get(&self, m: usize, b: usize, r: usize, t: usize) -> Complex64 {
        self.values[self.offset(m, b) + r * self.channels + t]
    }

    /// Auto-spectrum of channel `r` across bins for window `m`.
    pub fn auto_spectrum(&self, m: usize, r: usize) -> Vec<f64> {
        (0..self.bins()).map(|b| self.get(m, b, r, r).re).collect()
    }

    pub fn same_shape(&self, other: &EsdSeries) -> bool {
        self.windows == other.windows
            && self.channels == other.channels
            && self.grid.n == other.grid.n
            && self.grid.n_max == other.grid.n_max
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Element-wise mean of series with identical shape.
    pub fn mean_of(series: &[EsdSeries]) -> Result<EsdSeries> {
        let first = series.first().ok_or_else(|| Error::validation("nothing to average"))?;
        if series.iter().any(|s| !s.same_shape(first)) {
            return Err(Error::validation("cannot average ESDs of different shape"));
        }
        let mut out = first.clone();
        for s in &series[1..] {
            out.values.iter_mut().zip(&s.values).for_each(|(a, b)| *a += b);
        }
        out.scale(1.0 / series.len() as f64);
        Ok(out)
    }

    /// Reorder channels so that new channel `i` is old channel `perm[i]`.
    pub fn permute_channels(&self, perm: &[usize]) -> Result<EsdSeries> {
        let j = self.channels;
        let mut seen = vec![false; j];
        if perm.len() != j || perm.iter().any(|&p| p >= j || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::validation("not a permutation of the channels"));
        }
        let mut out = self.clone();
        for m in 0..self.windows {
            for b in 0..self.bins() {
                let src = self.matrix(m, b).to_vec();
                let dst = out.matrix_mut(m, b);
                for r in 0..j {
                    for t in 0..j {
                        dst[r * j + t] = src[perm[r] * j + perm[t]];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Keep the listed channels.
    pub fn select_channels(&self, channels: &[usize]) -> Result<EsdSeries> {
        if channels.iter().any(|&c| c >= self.channels) {
            return Err(Error::validation("channel index out of range"));
        }
        let k = channels.len();
        let mut out = EsdSeries::zeros(self.windows, k, self.window_length, self.grid);
        for m in 0..self.windows {
            for b in 0..self.bins() {
                for (r, &cr) in channels.iter().enumerate() {
                    for (t, &ct) in channels.iter().enumerate() {
                        out.matrix_mut(m, b)[r * k + t] = self.get(m, b, cr, ct);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Check the Hermitian, PSD and real-diagonal invariants at every
    /// (window, bin). Returns the first violation.
    pub fn check_invariants(&self) -> Result<()> {
        let j = self.channels;
        for m in 0..self.windows {
            for b in 0..self.bins() {
                let a = self.matrix(m, b);
                if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(Error::numerical(format!("non-finite ESD at window {m}, bin {b}")));
                }
                let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let mut asym: f64 = 0.0;
                for r in 0..j {
                    for t in 0..j {
                        asym = asym.max((a[r * j + t] - a[t * j + r].conj()).norm());
                    }
                }
                if asym > 1e-9 * scale {
                    return Err(Error::numerical(format!(
                        "ESD not Hermitian at window {m}, bin {b}: {asym:.3e}"
                    )));
                }
                let (lo, hi) = hermitian_eig_range(a, j);
                if lo < -1e-8 * hi.max(0.0) {
                    return Err(Error::numerical(format!(
                        "ESD not PSD at window {m}, bin {b}: min eigenvalue {lo:.3e}"
                    )));
                }
                for r in 0..j {
                    let d = a[r * j + r];
                    if d.re < -1e-8 * hi.max(0.0) || d.im.abs() > 1e-9 * scale {
                        return Err(Error::numerical(format!(
                            "ESD diagonal not real non-negative at window {m}, bin {b}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
