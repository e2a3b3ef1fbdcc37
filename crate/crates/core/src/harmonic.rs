//! Window partitioning, the harmonic regression basis and ESD assembly.
//!
//! Within window `m` the latent path of channel `j` is modelled as
//!
//! ```text
//! x_k = c * (mu + sum_n p_n cos(omega_n k) - q_n sin(omega_n k)),  c = 2 pi / N
//! ```
//!
//! with the global time index `k`. The stacked state interleaves channels:
//! entry `iota * J + j` holds local coefficient `iota` of channel `j`, where
//! the local order is `[mu, p_1, q_1, p_2, q_2, ...]`. Hence the means occupy
//! the first `J` entries and frequency block `n` the entries
//! `J(2n-1) .. J(2n+1)` as `[p_n; q_n]`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::taper::FreqGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicLayout {
    pub channels: usize,
    pub n: usize,
    pub n_max: usize,
    pub window_length: usize,
    pub windows: usize,
    pub sample_rate: f64,
}

impl HarmonicLayout {
    pub fn new(
        channels: usize,
        n: usize,
        n_max: usize,
        window_length: usize,
        windows: usize,
        sample_rate: f64,
    ) -> Result<Self> {
        let layout = HarmonicLayout { channels, n, n_max, window_length, windows, sample_rate };
        layout.validate()?;
        Ok(layout)
    }

    /// Derive the window count from a series length.
    pub fn for_samples(
        channels: usize,
        samples: usize,
        n: usize,
        n_max: usize,
        window_length: usize,
        sample_rate: f64,
    ) -> Result<Self> {
        if window_length == 0 || samples % window_length != 0 {
            return Err(Error::validation(format!(
                "{samples} samples do not split into windows of {window_length}"
            )));
        }
        HarmonicLayout::new(channels, n, n_max, window_length, samples / window_length, sample_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.window_length == 0 || self.windows == 0 {
            return Err(Error::validation("layout dimensions must be positive"));
        }
        FreqGrid::new(self.n, self.n_max, self.sample_rate)?;
        Ok(())
    }

    pub fn grid(&self) -> FreqGrid {
        FreqGrid { n: self.n, n_max: self.n_max, sample_rate: self.sample_rate }
    }

    pub fn samples(&self) -> usize {
        self.windows * self.window_length
    }

    /// Coefficients per channel, `2 N_max - 1`.
    pub fn local_dim(&self) -> usize {
        2 * self.n_max - 1
    }

    pub fn state_dim(&self) -> usize {
        self.channels * self.local_dim()
    }

    /// Basis scale `2 pi / N`.
    pub fn scale(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Global (1-based) time index of the first sample of window `m` (0-based).
    pub fn first_index(&self, m: usize) -> usize {
        m * self.window_length + 1
    }

    #[inline]
    pub fn global_index(&self, local: usize, channel: usize) -> usize {
        local * self.channels + channel
    }
}

/// Dense `W x (2 N_max - 1)` basis of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBasis {
    pub m: usize,
    pub matrix: Mat,
}

/// Basis matrix of window `m` (0-based).
pub fn build_basis(m: usize, layout: &HarmonicLayout) -> Result<WindowBasis> {
    if m >= layout.windows {
        return Err(Error::validation(format!("window {m} out of range 0..{}", layout.windows)));
    }
    let w = layout.window_length;
    let d = layout.local_dim();
    let c = layout.scale();
    let theta = PI / layout.n as f64;
    let mut a = Mat::zeros(w, d);
    let period = 2 * layout.n;
    for i in 0..w {
        let k = layout.first_index(m) + i;
        a[(i, 0)] = c;
        for n in 1..layout.n_max {
            let phase = ((n * k) % period) as f64 * theta;
            a[(i, 2 * n - 1)] = c * phase.cos();
            a[(i, 2 * n)] = -c * phase.sin();
        }
    }
    Ok(WindowBasis { m, matrix: a })
}

/// Tables of `cos(s theta k)` and `sin(s theta k)` for `s = 0 .. 2 N_max - 2`
/// over one window, stored row by row in `s`.
///
/// The same tables give the basis product `A v`, its transpose, and the
/// weighted Gram matrix `A^T D A` through product-to-sum identities, so the
/// dense basis never has to be formed.
#[derive(Debug)]
pub struct TrigTable {
    len: usize,
    harmonics: usize,
    n_max: usize,
    scale: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigTable {
    pub fn new(layout: &HarmonicLayout, m: usize) -> Self {
        let len = layout.window_length;
        let harmonics = 2 * layout.n_max - 1;
        let theta = PI / layout.n as f64;
        let period = 2 * layout.n;
        let mut cos = vec![0.0; harmonics * len];
        let mut sin = vec![0.0; harmonics * len];
        for s in 0..harmonics {
            for i in 0..len {
                // Reduce s*k modulo 2N before the multiply to keep the angle small.
                let k = layout.first_index(m) + i;
                let phase = ((s * k) % period) as f64 * theta;
                cos[s * len + i] = phase.cos();
                sin[s * len + i] = phase.sin();
            }
        }
        TrigTable { len, harmonics, n_max: layout.n_max, scale: layout.scale(), cos, sin }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        2 * self.n_max - 1
    }

    fn cos_row(&self, s: usize) -> &[f64] {
        &self.cos[s * self.len..(s + 1) * self.len]
    }

    fn sin_row(&self, s: usize) -> &[f64] {
        &self.sin[s * self.len..(s + 1) * self.len]
    }

    /// `eta = A v`.
    pub fn apply(&self, v: &[f64], eta: &mut [f64]) {
        let c = self.scale;
        eta.iter_mut().for_each(|e| *e = c * v[0]);
        for n in 1..self.n_max {
            let (p, q) = (c * v[2 * n - 1], c * v[2 * n]);
            for ((e, cs), sn) in eta.iter_mut().zip(self.cos_row(n)).zip(self.sin_row(n)) {
                *e += p * cs - q * sn;
            }
        }
    }

    /// `g = A^T r`.
    pub fn apply_transpose(&self, r: &[f64], g: &mut [f64]) {
        let c = self.scale;
        g[0] = c * r.iter().sum::<f64>();
        for n in 1..self.n_max {
            g[2 * n - 1] = c * dot(r, self.cos_row(n));
            g[2 * n] = -c * dot(r, self.sin_row(n));
        }
    }

    /// `A^T diag(d) A`.
    pub fn weighted_gram(&self, d: &[f64]) -> Mat {
        let c2 = self.scale * self.scale;
        let cs: Vec<f64> = (0..self.harmonics).map(|s| dot(d, self.cos_row(s))).collect();
        let ss: Vec<f64> = (0..self.harmonics).map(|s| dot(d, self.sin_row(s))).collect();
        // S is odd in its argument.
        let s_at = |a: isize| if a >= 0 { ss[a as usize] } else { -ss[(-a) as usize] };
        let dim = self.dim();
        let mut h = Mat::zeros(dim, dim);
        h[(0, 0)] = c2 * cs[0];
        for a in 1..self.n_max {
            let (ia, ja) = (2 * a - 1, 2 * a);
            h[(0, ia)] = c2 * cs[a];
            h[(0, ja)] = -c2 * ss[a];
            for b in a..self.n_max {
                let (ib, jb) = (2 * b - 1, 2 * b);
                let diff = a.abs_diff(b);
                let sum = a + b;
                h[(ia, ib)] = 0.5 * c2 * (cs[diff] + cs[sum]);
                h[(ja, jb)] = 0.5 * c2 * (cs[diff] - cs[sum]);
                // cos(a) * (-sin(b)) and (-sin(a)) * cos(b)
                h[(ia, jb)] = -0.5 * c2 * (ss[sum] - s_at(a as isize - b as isize));
                h[(ja, ib)] = -0.5 * c2 * (ss[sum] + s_at(a as isize - b as isize));
            }
        }
        for i in 0..dim {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trig tables for every window, shared between windows with identical
/// phase (`m W mod 2N`).
#[derive(Debug, Clone)]
pub struct BasisCache {
    tables: Vec<Arc<TrigTable>>,
}

impl BasisCache {
    pub fn new(layout: &HarmonicLayout) -> Self {
        let period = 2 * layout.n;
        let mut by_phase: HashMap<usize, Arc<TrigTable>> = HashMap::new();
        let tables = (0..layout.windows)
            .map(|m| {
                let phase = layout.first_index(m) % period;
                by_phase.entry(phase).or_insert_with(|| Arc::new(TrigTable::new(layout, m))).clone()
            })
            .collect();
        BasisCache { tables }
    }

    pub fn window(&self, m: usize) -> &TrigTable {
        &self.tables[m]
    }

    /// Number of distinct tables held.
    pub fn distinct(&self) -> usize {
        let mut ptrs: Vec<*const TrigTable> = self.tables.iter().map(Arc::as_ptr).collect();
        ptrs.sort();
        ptrs.dedup();
        ptrs.len()
    }
}

/// Spectral matrix at bin `n` (1-based) from the second-moment matrix of the
/// stacked state: `(pi / N) * ((R_pp + R_qq) + i (R_qp - R_pq))`.
pub fn assemble_esd(r: &Mat, n: usize, layout: &HarmonicLayout) -> Result<Vec<Complex64>> {
    let j = layout.channels;
    if r.nrows() != layout.state_dim() || r.ncols() != layout.state_dim() {
        return Err(Error::validation("second-moment matrix does not match the layout"));
    }
    if n == 0 || n >= layout.n_max {
        return Err(Error::validation(format!("bin {n} outside 1..{}", layout.n_max - 1)));
    }
    let p0 = j * (2 * n - 1);
    let q0 = p0 + j;
    let block = r.view((p0, p0), (2 * j, 2 * j));
    let scale = block.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let asym = (block - block.transpose()).abs().max();
    if asym > 1e-9 * scale {
        return Err(Error::validation(format!("second-moment block {n} is not symmetric ({asym:.3e})")));
    }
    let f = PI / layout.n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); j * j];
    for a in 0..j {
        for b in 0..j {
            let re = r[(p0 + a, p0 + b)] + r[(q0 + a, q0 + b)];
            let im = r[(q0 + a, p0 + b)] - r[(p0 + a, q0 + b)];
            out[a * j + b] = Complex64::new(f * re, f * im);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eig_range;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    fn layout(j: usize, n: usize, n_max: usize, w: usize, m: usize) -> HarmonicLayout {
        HarmonicLayout::new(j, n, n_max, w, m, 32.0).unwrap()
    }

    #[test]
    fn tiny_basis_by_hand() {
        let a = build_basis(0, &layout(1, 2, 2, 2, 1)).unwrap().matrix;
        let pi = PI;
        let expect = Mat::from_row_slice(2, 3, &[pi, 0.0, -pi, pi, -pi, 0.0]);
        assert!((a - expect).abs().max() < 1e-12);
    }

    #[test]
    fn out_of_range_window() {
        assert!(build_basis(3, &layout(1, 4, 3, 8, 3)).is_err());
    }

    #[test]
    fn periodic_windows_share_basis() {
        let l = layout(1, 4, 4, 16, 3);
        assert_eq!(build_basis(0, &l).unwrap().matrix, build_basis(1, &l).unwrap().matrix);
        assert_eq!(BasisCache::new(&l).distinct(), 1);
        assert_eq!(BasisCache::new(&layout(1, 4, 4, 12, 3)).distinct(), 2);
    }

    #[test]
    fn columns_orthogonal_on_full_periods() {
        let a = build_basis(0, &layout(1, 8, 8, 32, 1)).unwrap().matrix;
        let g = a.transpose() * &a;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i != j {
                    assert!(g[(i, j)].abs() < 1e-10, "({i},{j}) = {}", g[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn trig_table_matches_dense_basis() {
        let l = layout(1, 10, 7, 23, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in 0..3 {
            let a = build_basis(m, &l).unwrap().matrix;
            let t = TrigTable::new(&l, m);
            let v: Vec<f64> = (0..t.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let r: Vec<f64> = (0..23).map(|_| StandardNormal.sample(&mut rng)).collect();
            let d: Vec<f64> = (0..23).map(|_| Uniform::new(0.1, 2.0).unwrap().sample(&mut rng)).collect();

            let mut eta = vec![0.0; 23];
            t.apply(&v, &mut eta);
            let eta_ref = &a * DVector::from_vec(v.clone());
            let mut g = vec![0.0; t.dim()];
            t.apply_transpose(&r, &mut g);
            let g_ref = a.transpose() * DVector::from_vec(r.clone());
            let h = t.weighted_gram(&d);
            let h_ref = a.transpose() * Mat::from_diagonal(&DVector::from_vec(d.clone())) * &a;

            for i in 0..23 {
                assert!((eta[i] - eta_ref[i]).abs() < 1e-10);
            }
            for i in 0..t.dim() {
                assert!((g[i] - g_ref[i]).abs() < 1e-10);
            }
            assert!((h - h_ref).abs().max() < 1e-10);
        }
    }

    #[test]
    fn identity_moments() {
        let l = layout(2, 8, 4, 16, 1);
        let out = assemble_esd(&Mat::identity(l.state_dim(), l.state_dim()), 2, &l).unwrap();
        let f = PI / 8.0;
        assert_eq!(out[0], Complex64::new(2.0 * f, 0.0));
        assert_eq!(out[1], Complex64::new(0.0, 0.0));
        assert_eq!(out[3], Complex64::new(2.0 * f, 0.0));
    }

    #[test]
    fn single_channel_block_is_real() {
        let l = layout(1, 8, 3, 16, 1);
        let mut r = Mat::identity(5, 5);
        r[(3, 3)] = 2.0;
        r[(3, 4)] = 0.7;
        r[(4, 3)] = 0.7;
        r[(4, 4)] = 5.0;
        let out = assemble_esd(&r, 2, &l).unwrap();
        assert_eq!(out[0], Complex64::new(7.0 * PI / 8.0, 0.0));
    }

    #[test]
    fn rejects_asymmetric_block() {
        let l = layout(1, 8, 3, 16, 1);
        let mut r = Mat::identity(5, 5);
        r[(1, 2)] = 1.0;
        assert!(assemble_esd(&r, 1, &l).is_err());
        assert!(assemble_esd(&Mat::identity(5, 5), 3, &l).is_err());
    }

    proptest! {
        #[test]
        fn outer_products_assemble_to_psd(seed in 0u64..1000) {
            let l = layout(2, 8, 3, 16, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut r = Mat::zeros(l.state_dim(), l.state_dim());
            for _ in 0..3 {
                let v = DVector::<f64>::from_fn(l.state_dim(), |_, _| StandardNormal.sample(&mut rng));
                r += &v * v.transpose();
            }
            for n in 1..3 {
                let psi = assemble_esd(&r, n, &l).unwrap();
                let (lo, hi) = hermitian_eig_range(&psi, 2);
                prop_assert!(lo >= -1e-10 * hi);
                prop_assert!((psi[1] - psi[2].conj()).norm() <= 1e-12 * hi);
            }
        }

        #[test]
        fn assembly_is_linear(seed in 0u64..1000, a in -3.0f64..3.0) {
            let l = layout(2, 8, 3, 16, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sym = || {
                let m = Mat::from_fn(l.state_dim(), l.state_dim(), |_, _| StandardNormal.sample(&mut rng));
                &m + m.transpose()
            };
            let (x, y) = (sym(), sym());
            let lhs = assemble_esd(&(&x * a + &y), 1, &l).unwrap();
            let px = assemble_esd(&x, 1, &l).unwrap();
            let py = assemble_esd(&y, 1, &l).unwrap();
            for i in 0..4 {
                prop_assert!((lhs[i] - (px[i] * a + py[i])).norm() < 1e-10);
            }
        }
    }
}
