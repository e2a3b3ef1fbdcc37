use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of orthonormal discrete prolate spheroidal sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaperSet {
    length: usize,
    time_bandwidth: f64,
    tapers: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

impl TaperSet {
    /// Build a taper set from explicit sequences. Concentrations are computed
    /// from the sequences; no orthonormality check is made.
    pub fn from_sequences(time_bandwidth: f64, tapers: Vec<Vec<f64>>) -> Result<Self> {
        let length = tapers.first().map(Vec::len).unwrap_or(0);
        if length == 0 || tapers.iter().any(|t| t.len() != length) {
            return Err(Error::validation("tapers must be non-empty and of equal length"));
        }
        let half_bw = time_bandwidth / length as f64;
        let eigenvalues = tapers.iter().map(|t| band_concentration(t, half_bw)).collect();
        Ok(TaperSet { length, time_bandwidth, tapers, eigenvalues })
    }

    /// Window length W in samples.
    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.tapers.is_empty()
    }

    /// Number of tapers P.
    pub fn count(&self) -> usize {
        self.tapers.len()
    }

    pub fn time_bandwidth(&self) -> f64 {
        self.time_bandwidth
    }

    pub fn taper(&self, p: usize) -> &[f64] {
        &self.tapers[p]
    }

    pub fn tapers(&self) -> &[Vec<f64>] {
        &self.tapers
    }

    /// Spectral concentrations c_p in the design band.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Keep only the first `p` tapers.
    pub fn truncated(&self, p: usize) -> TaperSet {
        let p = p.min(self.count());
        TaperSet {
            length: self.length,
            time_bandwidth: self.time_bandwidth,
            tapers: self.tapers[..p].to_vec(),
            eigenvalues: self.eigenvalues[..p].to_vec(),
        }
    }
}

/// Compute the first `count` dpss of length `len` with time-bandwidth
/// product `time_bandwidth` (half bandwidth `time_bandwidth / len` cycles per
/// sample).
///
/// The sequences are the eigenvectors belonging to the largest eigenvalues of
/// the symmetric tridiagonal matrix that commutes with the band-limiting
/// operator. Eigenvalues are isolated by Sturm-sequence bisection and the
/// vectors refined by inverse iteration, which keeps the cost linear in
/// `len` per taper.
pub fn compute_dpss(len: usize, time_bandwidth: f64, count: usize) -> Result<TaperSet> {
    if !(time_bandwidth > 0.0) || !time_bandwidth.is_finite() {
        return Err(Error::validation("time-bandwidth product must be positive"));
    }
    if count == 0 {
        return Err(Error::validation("taper count must be at least 1"));
    }
    if count as f64 > 2.0 * time_bandwidth {
        return Err(Error::validation(format!(
            "taper count exceeds usable band: {count} > 2 x {time_bandwidth}"
        )));
    }
    if len < 2 * count {
        return Err(Error::validation(format!(
            "window length {len} too short for {count} tapers"
        )));
    }

    let half_bw = time_bandwidth / len as f64;
    let (diag, off) = tridiagonal(len, half_bw);
    let norm = gershgorin_radius(&diag, &off);

    let mut tapers: Vec<Vec<f64>> = Vec::with_capacity(count);
    for order in 0..count {
        let lambda = kth_largest_eigenvalue(&diag, &off, order, norm);
        let mut v = inverse_iteration(&diag, &off, lambda, norm, order);
        for prev in &tapers {
            let proj = dot(&v, prev);
            v.iter_mut().zip(prev).for_each(|(a, b)| *a -= proj * b);
        }
        normalize(&mut v);
        if let Some(first) = v.iter().copied().find(|x| *x != 0.0) {
            if first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        tapers.push(v);
    }

    let eigenvalues = tapers.iter().map(|t| band_concentration(t, half_bw)).collect();
    Ok(TaperSet { length: len, time_bandwidth, tapers, eigenvalues })
}

/// Fraction of a unit-norm sequence's energy inside `[-half_bw, half_bw]`
/// cycles/sample.
///
/// The band integral of the spectral window reduces to a sinc-weighted sum
/// over the autocorrelation, so it is evaluated in closed form.
pub fn band_concentration(taper: &[f64], half_bw: f64) -> f64 {
    let n = taper.len();
    let energy = dot(taper, taper);
    let mut total = 2.0 * half_bw * energy;
    for lag in 1..n {
        let r: f64 = taper[..n - lag].iter().zip(&taper[lag..]).map(|(a, b)| a * b).sum();
        let d = lag as f64;
        total += 2.0 * r * (2.0 * PI * half_bw * d).sin() / (PI * d);
    }
    total / energy
}

fn tridiagonal(len: usize, half_bw: f64) -> (Vec<f64>, Vec<f64>) {
    let c = (2.0 * PI * half_bw).cos();
    let n = len as f64;
    let diag = (0..len)
        .map(|t| {
            let a = (n - 1.0 - 2.0 * t as f64) / 2.0;
            a * a * c
        })
        .collect();
    // off[t] couples rows t and t + 1.
    let off = (1..len).map(|t| t as f64 * (n - t as f64) / 2.0).collect();
    (diag, off)
}

fn gershgorin_radius(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { off[i].abs() } else { 0.0 };
            diag[i].abs() + left + right
        })
        .fold(0.0, f64::max)
}

/// Number of eigenvalues strictly less than `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64, norm: f64) -> usize {
    let tiny = f64::EPSILON * norm.max(1.0) * 1e-3;
    let mut count = 0;
    let mut q = diag[0] - x;
    if q == 0.0 {
        q = -tiny;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        q = diag[i] - x - off[i - 1] * off[i - 1] / q;
        if q == 0.0 {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn kth_largest_eigenvalue(diag: &[f64], off: &[f64], k: usize, norm: f64) -> f64 {
    let n = diag.len();
    // Eigenvalue with ascending index n - 1 - k: the smallest x such that
    // count(x) >= n - k.
    let target = n - k;
    let mut lo = -norm - 1.0;
    let mut hi = norm + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid, norm) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Inverse iteration with a tridiagonal LU factorization using partial
/// pivoting.
fn inverse_iteration(diag: &[f64], off: &[f64], lambda: f64, norm: f64, seed: usize) -> Vec<f64> {
    let n = diag.len();
    let lu = TridiagLu::factor(diag, off, lambda, norm);
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * (0.7 + 0.13 * seed as f64)).sin())
        .collect();
    normalize(&mut v);
    for _ in 0..4 {
        lu.solve(&mut v);
        normalize(&mut v);
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let s = dot(v, v).sqrt();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// LU of (T - lambda I) with row interchanges, stored as in LAPACK `gttrf`.
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(diag: &[f64], off: &[f64], lambda: f64, norm: f64) -> Self {
        let n = diag.len();
        let mut d: Vec<f64> = diag.iter().map(|x| x - lambda).collect();
        let mut dl = off.to_vec();
        let mut du = off.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n];
        let floor = f64::EPSILON * norm.max(1.0);

        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = floor;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            d[n - 1] = floor;
        }
        TridiagLu { dl, d, du, du2, swapped }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn gram_error(set: &TaperSet) -> f64 {
        let mut worst: f64 = 0.0;
        for p in 0..set.count() {
            for q in 0..set.count() {
                let ip = dot(set.taper(p), set.taper(q));
                let target = if p == q { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }

    #[test]
    fn rejects_too_many_tapers() {
        let err = compute_dpss(256, 2.0, 5).unwrap_err();
        assert!(err.to_string().contains("taper count exceeds usable band"));
    }

    #[test]
    fn rejects_short_window() {
        assert!(compute_dpss(3, 2.0, 2).is_err());
    }

    #[test]
    fn first_taper_symmetric_and_positive() {
        let set = compute_dpss(64, 2.0, 1).unwrap();
        let v = set.taper(0);
        for i in 0..64 {
            assert!(v[i] > 0.0);
            assert!((v[i] - v[63 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_eigensolver() {
        let len = 128;
        let set = compute_dpss(len, 2.5, 4).unwrap();
        let (diag, off) = tridiagonal(len, 2.5 / len as f64);
        let mut m = DMatrix::<f64>::zeros(len, len);
        for i in 0..len {
            m[(i, i)] = diag[i];
            if i + 1 < len {
                m[(i, i + 1)] = off[i];
                m[(i + 1, i)] = off[i];
            }
        }
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        for p in 0..4 {
            let col = eig.eigenvectors.column(order[p]);
            let ip: f64 = col.iter().zip(set.taper(p)).map(|(a, b)| a * b).sum();
            assert!((ip.abs() - 1.0).abs() < 1e-10, "taper {p}: {ip}");
        }
        assert!(gram_error(&set) < 1e-12);
    }

    #[test]
    fn concentrations_decrease() {
        let set = compute_dpss(512, 3.0, 5).unwrap();
        let c = set.eigenvalues();
        assert!(c[0] < 1.0);
        for w in c.windows(2) {
            assert!(w[0] > w[1]);
        }
        assert!(*c.last().unwrap() > 0.0);
    }
}
