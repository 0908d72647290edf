//! Entropy-regularized optimal transport via log-domain Sinkhorn-Knopp.
//!
//! Solves S_ε(μ, ν) = min over couplings of E_π[d] + ε·KL(π ‖ μ⊗ν).
//! All updates run in the log domain with streamed log-sum-exp, so the
//! Gibbs kernel e^{−d/ε} is never materialized and ε down to 1/λ = 0.01
//! (and below) stays stable. Cost entries of `+inf` are allowed and simply
//! drop out of the log-sum-exp, which pins the corresponding coupling
//! entries to zero.
//!
//! Convergence is measured as the L1 violation of the ν-marginal right
//! after an f-update, where the μ-marginal is exact by construction. The
//! reported coupling gets one final row-then-column balancing pass (folded
//! into the potentials, preserving the factorized form) before the cost
//! and KL terms are computed from it.

use crate::error::{Error, Result};
use crate::measures::{Coupling, DiscreteDistribution, DistortionMatrix, ZERO_WEIGHT};
use crate::numerics::log_sum_exp_by;

/// Default marginal tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default iteration cap; desk-scale matrices favor accuracy.
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Output of a Sinkhorn solve.
#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub coupling: Coupling,
    /// Row log-potentials in nats; u(x) = exp(f/ε).
    pub f: Vec<f64>,
    /// Column log-potentials in nats; v(y) = exp(g/ε).
    pub g: Vec<f64>,
    /// E_π[d] under the reported coupling.
    pub transport_cost: f64,
    /// KL(π ‖ μ⊗ν) in nats, with 0·ln 0 = 0.
    pub kl_term: f64,
    /// transport_cost + ε·kl_term.
    pub objective: f64,
    pub iterations: usize,
    /// Worst L1 marginal violation of the reported coupling.
    pub marginal_error: f64,
    /// False when `max_iter` was reached before the tolerance; the result
    /// still carries the partial solution.
    pub converged: bool,
}

pub fn sinkhorn(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    d: &DistortionMatrix,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornResult> {
    sinkhorn_warm(mu, nu, d, eps, tol, max_iter, None, None)
}

/// Sinkhorn with optional warm-start potentials (full-size vectors, in
/// nats). Used by the ε-sweep and by the rate-distortion outer loop.
#[allow(clippy::too_many_arguments)]
pub fn sinkhorn_warm(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    d: &DistortionMatrix,
    eps: f64,
    tol: f64,
    max_iter: usize,
    f0: Option<&[f64]>,
    g0: Option<&[f64]>,
) -> Result<SinkhornResult> {
    let n = mu.len();
    let m = nu.len();
    if d.nrows() != n || d.ncols() != m {
        return Err(Error::ShapeMismatch {
            expected: (n, m),
            got: (d.nrows(), d.ncols()),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }

    // Drop zero-weight atoms; they reenter as zero rows/columns.
    let rows = mu.support();
    let cols = nu.support();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidDistribution(
            "no atoms with positive mass".to_string(),
        ));
    }
    let a: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| nu.weights()[j]).collect();
    let la: Vec<f64> = a.iter().map(|w| w.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|w| w.ln()).collect();
    let dd: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| d.get(i, j)).collect())
        .collect();
    for (r, &i) in rows.iter().enumerate() {
        if dd[r].iter().all(|c| c.is_infinite()) {
            return Err(Error::InvalidMatrix(format!(
                "source atom {i} has no finite-cost target"
            )));
        }
    }

    let nr = rows.len();
    let nc = cols.len();
    let mut f: Vec<f64> = match f0 {
        Some(full) => rows.iter().map(|&i| full[i]).collect(),
        None => vec![0.0; nr],
    };
    let mut g: Vec<f64> = match g0 {
        Some(full) => cols.iter().map(|&j| full[j]).collect(),
        None => vec![0.0; nc],
    };

    // Alternating scaling is a coordinate ascent on the smooth concave
    // dual; its linear rate degrades badly when ε is small relative to
    // the cost gaps (the coupling then has weak links and the slow mode
    // contracts like the link weight). When progress stalls we switch to
    // damped Newton steps on the same dual — the problems here are dense
    // and small, so a direct solve per step is cheap and restores fast
    // convergence exactly in the regime where scaling crawls.
    const STALL_WINDOW: usize = 30;
    let mut iterations = 0;
    let mut converged = false;
    let mut window_err = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        // f-update: row marginals become exact.
        for r in 0..nr {
            let lse = log_sum_exp_by(nc, |c| lb[c] + (g[c] - dd[r][c]) / eps);
            f[r] = -eps * lse;
        }
        // ν-marginal L1 violation.
        let mut err = 0.0;
        for c in 0..nc {
            let lcol =
                log_sum_exp_by(nr, |r| la[r] + lb[c] + (f[r] + g[c] - dd[r][c]) / eps);
            err += (lcol.exp() - b[c]).abs();
        }
        if err <= tol {
            converged = true;
            break;
        }
        if iterations % STALL_WINDOW == 0 {
            if err > 0.5 * window_err {
                let budget = max_iter - iterations;
                let (used, ok) =
                    newton_polish(&la, &lb, &dd, eps, &mut f, &mut g, tol, budget);
                iterations += used;
                if ok {
                    converged = true;
                    break;
                }
                // Newton bailed out; resume scaling sweeps.
                window_err = f64::INFINITY;
            } else {
                window_err = err;
            }
        }
        // g-update.
        for c in 0..nc {
            let lse = log_sum_exp_by(nr, |r| la[r] + (f[r] - dd[r][c]) / eps);
            g[c] = -eps * lse;
        }
    }

    // One balancing pass (rows then columns), folded into the potentials
    // so the Gibbs factorization is preserved exactly.
    let mut pi = vec![vec![0.0; nc]; nr];
    for r in 0..nr {
        for c in 0..nc {
            pi[r][c] = (la[r] + lb[c] + (f[r] + g[c] - dd[r][c]) / eps).exp();
        }
    }
    for r in 0..nr {
        let s: f64 = pi[r].iter().sum();
        if s > 0.0 {
            let scale = a[r] / s;
            for x in pi[r].iter_mut() {
                *x *= scale;
            }
            f[r] += eps * scale.ln();
        }
    }
    for c in 0..nc {
        let s: f64 = (0..nr).map(|r| pi[r][c]).sum();
        if s > 0.0 {
            let scale = b[c] / s;
            for r in 0..nr {
                pi[r][c] *= scale;
            }
            g[c] += eps * scale.ln();
        }
    }

    let mut row_err = 0.0;
    for r in 0..nr {
        row_err += (pi[r].iter().sum::<f64>() - a[r]).abs();
    }
    let mut col_err = 0.0;
    for c in 0..nc {
        col_err += ((0..nr).map(|r| pi[r][c]).sum::<f64>() - b[c]).abs();
    }
    let marginal_error = row_err.max(col_err);

    let mut transport_cost = 0.0;
    let mut kl_term = 0.0;
    for r in 0..nr {
        for c in 0..nc {
            let p = pi[r][c];
            if p > ZERO_WEIGHT {
                transport_cost += p * dd[r][c];
                kl_term += p * (p / (a[r] * b[c])).ln();
            }
        }
    }
    kl_term = kl_term.max(0.0);

    // Reinsert dropped atoms.
    let mut entries = vec![vec![0.0; m]; n];
    let mut f_full = vec![0.0; n];
    let mut g_full = vec![0.0; m];
    for (r, &i) in rows.iter().enumerate() {
        f_full[i] = f[r];
        for (c, &j) in cols.iter().enumerate() {
            entries[i][j] = pi[r][c];
        }
    }
    for (c, &j) in cols.iter().enumerate() {
        g_full[j] = g[c];
    }

    Ok(SinkhornResult {
        coupling: Coupling::new(entries)?,
        f: f_full,
        g: g_full,
        transport_cost,
        kl_term,
        objective: transport_cost + eps * kl_term,
        iterations,
        marginal_error,
        converged,
    })
}

/// One Sinkhorn solve per ε, warm-starting the potentials from the
/// previous (larger) ε. The list must be positive and descending.
pub fn sinkhorn_eps_sweep(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    d: &DistortionMatrix,
    eps_list: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<SinkhornResult>> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("empty eps list".to_string()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument(
            "eps list must be positive and strictly descending".to_string(),
        ));
    }
    let mut out: Vec<SinkhornResult> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let (f0, g0) = match out.last() {
            Some(prev) => (Some(prev.f.as_slice()), Some(prev.g.as_slice())),
            None => (None, None),
        };
        out.push(sinkhorn_warm(mu, nu, d, eps, tol, max_iter, f0, g0)?);
    }
    Ok(out)
}

/// Damped Newton ascent on the entropic dual, used when alternating
/// scaling stalls. Works on the support-reduced problem: `la`/`lb` are
/// log-weights, `dd` the cost rows, and `f`/`g` the current potentials
/// (updated in place). Returns the number of steps taken and whether the
/// marginal L1 error reached `tol` within `budget` steps.
fn newton_polish(
    la: &[f64],
    lb: &[f64],
    dd: &[Vec<f64>],
    eps: f64,
    f: &mut Vec<f64>,
    g: &mut Vec<f64>,
    tol: f64,
    budget: usize,
) -> (usize, bool) {
    let nr = la.len();
    let nc = lb.len();
    let dim = nr + nc;
    // Dual objective: Σ a f + Σ b g − ε Σ a_i b_j e^{(f_i+g_j−d_ij)/ε}.
    let phi = |f: &[f64], g: &[f64]| -> f64 {
        let mut s = 0.0;
        for r in 0..nr {
            s += la[r].exp() * f[r];
        }
        for c in 0..nc {
            s += lb[c].exp() * g[c];
        }
        for r in 0..nr {
            for c in 0..nc {
                let e = la[r] + lb[c] + (f[r] + g[c] - dd[r][c]) / eps;
                if e.is_finite() {
                    s -= eps * e.exp();
                }
            }
        }
        s
    };
    let mut steps = 0;
    let mut best_err = f64::INFINITY;
    let mut stagnant = 0;
    while steps < budget {
        steps += 1;
        let mut pi = vec![vec![0.0; nc]; nr];
        for r in 0..nr {
            for c in 0..nc {
                let e = la[r] + lb[c] + (f[r] + g[c] - dd[r][c]) / eps;
                pi[r][c] = if e.is_finite() { e.exp() } else { 0.0 };
            }
        }
        let rows: Vec<f64> = pi.iter().map(|row| row.iter().sum()).collect();
        let cols: Vec<f64> = (0..nc).map(|c| (0..nr).map(|r| pi[r][c]).sum()).collect();
        let mut grad = vec![0.0; dim];
        for r in 0..nr {
            grad[r] = la[r].exp() - rows[r];
        }
        for c in 0..nc {
            grad[nr + c] = lb[c].exp() - cols[c];
        }
        let row_err: f64 = grad[..nr].iter().map(|x| x.abs()).sum();
        let col_err: f64 = grad[nr..].iter().map(|x| x.abs()).sum();
        let err = row_err.max(col_err);
        if err <= tol {
            return (steps, true);
        }
        if err < 0.7 * best_err {
            best_err = err;
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= 3 {
                return (steps, false);
            }
        }
        // Hessian of −Φ: (1/ε) [[diag(rows), π], [πᵀ, diag(cols)]].
        // Singular along (1, −1) gauge, but grad ⊥ that null vector; a
        // tiny ridge keeps the Cholesky factorization well-posed.
        let mut h = vec![vec![0.0; dim]; dim];
        for r in 0..nr {
            h[r][r] = rows[r] / eps;
        }
        for c in 0..nc {
            h[nr + c][nr + c] = cols[c] / eps;
        }
        for r in 0..nr {
            for c in 0..nc {
                h[r][nr + c] = pi[r][c] / eps;
                h[nr + c][r] = pi[r][c] / eps;
            }
        }
        let dir = match solve_spd(h, &grad) {
            Some(dir) => dir,
            None => return (steps, false),
        };
        // Armijo backtracking on the ascent direction.
        let p0 = phi(f, g);
        let slope: f64 = grad.iter().zip(&dir).map(|(gi, di)| gi * di).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let ft: Vec<f64> = (0..nr).map(|r| f[r] + t * dir[r]).collect();
            let gt: Vec<f64> = (0..nc).map(|c| g[c] + t * dir[nr + c]).collect();
            if phi(&ft, &gt) >= p0 + 1e-4 * t * slope {
                *f = ft;
                *g = gt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return (steps, false);
        }
    }
    (steps, false)
}

/// Cholesky solve of a symmetric positive semi-definite system with a
/// relative ridge. Returns `None` if the factorization degenerates.
fn solve_spd(mut h: Vec<Vec<f64>>, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = h.len();
    let max_diag = (0..n).map(|i| h[i][i]).fold(0.0, f64::max);
    if !(max_diag > 0.0) || !max_diag.is_finite() {
        return None;
    }
    let ridge = 1e-12 * max_diag;
    for i in 0..n {
        h[i][i] += ridge;
    }
    for i in 0..n {
        for j in 0..i {
            let s: f64 = (0..j).map(|k| h[i][k] * h[j][k]).sum();
            h[i][j] = (h[i][j] - s) / h[j][j];
        }
        let s: f64 = (0..i).map(|k| h[i][k] * h[i][k]).sum();
        let v = h[i][i] - s;
        if !(v > 0.0) {
            return None;
        }
        h[i][i] = v.sqrt();
    }
    let mut x = rhs.to_vec();
    for i in 0..n {
        let s: f64 = (0..i).map(|k| h[i][k] * x[k]).sum();
        x[i] = (x[i] - s) / h[i][i];
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| h[k][i] * x[k]).sum();
        x[i] = (x[i] - s) / h[i][i];
    }
    Some(x)
}
