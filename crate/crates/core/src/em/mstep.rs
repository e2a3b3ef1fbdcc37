use crate::error::{Error, Result};

/// Maximize the expected complete-data log-likelihood plus the log-smoothness
/// prior over the diagonal of one window's state covariance.
///
/// `p` holds the innovation second moments of one channel in local order
/// `[mu, p_1, q_1, ..., p_{N_max-1}, q_{N_max-1}]`. The mean entry has no
/// prior and is set to its moment; the `p` and `q` chains are each solved
/// in `u = log Q` by Newton's method on
///
/// ```text
/// -1/2 sum_i (u_i + P_i exp(-u_i)) - rho sum_n (u_n - u_{n+1})^2
/// ```
///
/// whose Hessian is tridiagonal and negative definite.
pub fn mstep_update_q(p: &[f64], rho: f64, q_floor: f64, tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    if p.is_empty() || p.len() % 2 == 0 {
        return Err(Error::validation("moment vector must have odd length 2 N_max - 1"));
    }
    if p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::validation("innovation moments must be positive and finite"));
    }
    let mut q = vec![0.0; p.len()];
    q[0] = p[0].max(q_floor);
    let bins = (p.len() - 1) / 2;
    for offset in 1..=2 {
        let chain: Vec<f64> = (0..bins).map(|n| p[2 * n + offset]).collect();
        let solved = if rho == 0.0 { chain } else { solve_chain(&chain, rho, tol, max_iters)? };
        for (n, v) in solved.into_iter().enumerate() {
            q[2 * n + offset] = v.max(q_floor);
        }
    }
    Ok(q)
}

fn chain_objective(u: &[f64], p: &[f64], rho: f64) -> f64 {
    let lik: f64 = u.iter().zip(p).map(|(u, p)| -0.5 * (u + p * (-u).exp())).sum();
    let prior: f64 = u.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum();
    lik - rho * prior
}

fn solve_chain(p: &[f64], rho: f64, tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let n = p.len();
    let mut u: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let mut grad = vec![0.0; n];
    let mut diag = vec![0.0; n];
    for iteration in 0..=max_iters {
        for i in 0..n {
            let e = p[i] * (-u[i]).exp();
            let mut g = -0.5 + 0.5 * e;
            let mut h = 0.5 * e;
            if i > 0 {
                g -= 2.0 * rho * (u[i] - u[i - 1]);
                h += 2.0 * rho;
            }
            if i + 1 < n {
                g -= 2.0 * rho * (u[i] - u[i + 1]);
                h += 2.0 * rho;
            }
            grad[i] = g;
            diag[i] = h;
        }
        let grad_norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if grad_norm <= tol {
            return Ok(u.iter().map(|v| v.exp()).collect());
        }
        if iteration == max_iters {
            return Err(Error::NewtonDiverged { iterations: iteration, grad_norm });
        }
        let step = thomas(&diag, -2.0 * rho, &grad);
        let f0 = chain_objective(&u, p, rho);
        let slope: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();
        if slope <= 1e-14 * (1.0 + f0.abs()) {
            return Ok(u.iter().map(|v| v.exp()).collect());
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..=30 {
            let cand: Vec<f64> = u.iter().zip(&step).map(|(u, s)| u + t * s).collect();
            if chain_objective(&cand, p, rho) >= f0 + 1e-4 * t * slope {
                u = cand;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return Err(Error::NewtonDiverged { iterations: iteration + 1, grad_norm });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Solve the symmetric tridiagonal system with diagonal `diag` and constant
/// off-diagonal `off`.
fn thomas(diag: &[f64], off: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = off / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - off * c[i - 1];
        c[i] = off / denom;
        d[i] = (rhs[i] - off * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
