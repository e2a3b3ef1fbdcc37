//! Leading eigenvector of the dpss tridiagonal matrix by bisection on the
//! Sturm count followed by a twisted factorisation: the eigenvector is
//! built outwards from the row where the forward and backward pivots
//! together are closest to singular.

pub fn tridiagonal(len: usize, nw: f64) -> (Vec<f64>, Vec<f64>) {
    let w = len as f64;
    let c = (2.0 * std::f64::consts::PI * nw / w).cos();
    let diag = (0..len).map(|i| ((w - 1.0) / 2.0 - i as f64).powi(2) * c).collect();
    let off = (1..len).map(|i| i as f64 * (w - i as f64) / 2.0).collect();
    (diag, off)
}

/// Number of eigenvalues strictly below `x`.
fn count_below(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let prev = if i > 0 { off[i - 1] * off[i - 1] / d } else { 0.0 };
        d = diag[i] - x - prev;
        if d == 0.0 {
            d = -f64::EPSILON * (diag[i].abs() + x.abs() + 1.0);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

pub fn largest_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    let radius = |i: usize| {
        (if i > 0 { off[i - 1].abs() } else { 0.0 }) + if i + 1 < n { off[i].abs() } else { 0.0 }
    };
    let mut lo = (0..n).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..n).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(diag, off, mid) < n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn leading_eigenvector(len: usize, nw: f64) -> Vec<f64> {
    let (diag, off) = tridiagonal(len, nw);
    let lambda = largest_eigenvalue(&diag, &off);
    let a: Vec<f64> = diag.iter().map(|d| d - lambda).collect();
    let n = len;
    let mut fwd = vec![0.0; n];
    let mut bwd = vec![0.0; n];
    fwd[0] = a[0];
    for i in 1..n {
        fwd[i] = a[i] - off[i - 1] * off[i - 1] / fwd[i - 1];
    }
    bwd[n - 1] = a[n - 1];
    for i in (0..n - 1).rev() {
        bwd[i] = a[i] - off[i] * off[i] / bwd[i + 1];
    }
    let r = (0..n)
        .min_by(|&i, &j| (fwd[i] + bwd[i] - a[i]).abs().total_cmp(&(fwd[j] + bwd[j] - a[j]).abs()))
        .unwrap();
    let mut z = vec![0.0; n];
    z[r] = 1.0;
    for i in (0..r).rev() {
        z[i] = -off[i] / fwd[i] * z[i + 1];
    }
    for i in r + 1..n {
        z[i] = -off[i - 1] / bwd[i] * z[i - 1];
    }
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sign = if z.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    z.iter().map(|v| sign * v / norm).collect()
}
