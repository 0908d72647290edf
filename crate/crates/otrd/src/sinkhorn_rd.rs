//! Rate-distortion via extremal entropic optimal transport.
//!
//! For a fixed multiplier λ the Sinkhorn-distortion value at an output
//! marginal Q is S_{1/λ}(P_X, Q) = min_π E_π[d] + (1/λ)·KL(π ‖ P_X⊗Q);
//! minimizing over Q on the simplex gives the same (rate, distortion)
//! point as Blahut-Arimoto. The inner problem is solved by [`crate::sinkhorn`];
//! the outer problem is convex in Q and is solved here by exponentiated
//! gradient (mirror descent on the simplex) with Armijo backtracking.
//!
//! By the envelope theorem the gradient of S_ε with respect to Q's weights
//! is the inner dual potential g, defined up to an additive constant that
//! we fix by subtracting the Q-weighted mean. At the optimum g is constant
//! on the support of Q — the same statement as the classical condition
//! that the Gibbs-kernel column sums against the optimal conditional all
//! equal one, which [`coupling_condition_check`] evaluates directly.

use crate::error::{Error, Result};
use crate::measures::{DiscreteDistribution, DistortionMatrix, RDCurve, RDPoint};
use crate::numerics::log_sum_exp_by;
use crate::sinkhorn::{sinkhorn_warm, SinkhornResult};

/// Weights are clamped here during iteration so the inner solver always
/// sees full support; letters this small are effectively extinct.
pub const WEIGHT_CLAMP: f64 = 1e-12;

/// Final report prunes weights below this to exact zeros.
pub const PRUNE_THRESHOLD: f64 = 1e-10;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 80;
const STALL_REL: f64 = 1e-13;

/// Converged S(D) point with its optimizers.
#[derive(Debug, Clone)]
pub struct SinkhornRdResult {
    pub point: RDPoint,
    /// Outer minimizer Q_Y (pruned support).
    pub q_y: DiscreteDistribution,
    /// Inner solve at the reported q_y.
    pub inner: SinkhornResult,
    pub outer_iterations: usize,
    /// Sup-norm of the projected gradient at the last iterate: |g − ḡ| on
    /// interior coordinates, max(0, −(g − ḡ)) on clamped ones.
    pub outer_gradient_norm: f64,
    pub converged: bool,
}

/// Per-atom values of Σ_x P(x) e^{−λd(x,y)} / Σ_{y′} q(y′) e^{−λd(x,y′)} − 1
/// over the support of q; atoms with q(y) = 0 are vacuous and recorded as
/// zero.
#[derive(Debug, Clone)]
pub struct CouplingConditionReport {
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
}

fn validate(p_x: &DiscreteDistribution, d: &DistortionMatrix, lambda: f64) -> Result<()> {
    if d.nrows() != p_x.len() {
        return Err(Error::ShapeMismatch {
            expected: (p_x.len(), d.ncols()),
            got: (d.nrows(), d.ncols()),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(())
}

struct Inner<'a> {
    p_x: &'a DiscreteDistribution,
    d: &'a DistortionMatrix,
    eps: f64,
    tol: f64,
    max_iter: usize,
}

impl Inner<'_> {
    fn solve(&self, q: &[f64], warm: Option<&SinkhornResult>) -> Result<SinkhornResult> {
        let nu = DiscreteDistribution::from_weights(q.to_vec())?;
        let (f0, g0) = match warm {
            Some(w) => (Some(w.f.as_slice()), Some(w.g.as_slice())),
            None => (None, None),
        };
        sinkhorn_warm(self.p_x, &nu, self.d, self.eps, self.tol, self.max_iter, f0, g0)
    }
}

fn clamp_and_renormalize(q: &mut [f64]) {
    let mut s = 0.0;
    for w in q.iter_mut() {
        if *w < WEIGHT_CLAMP {
            *w = WEIGHT_CLAMP;
        }
        s += *w;
    }
    for w in q.iter_mut() {
        *w /= s;
    }
}

/// Projected-gradient sup-norm on the simplex: clamped coordinates only
/// count when the gradient wants to push them up.
fn projected_gradient_norm(q: &[f64], gc: &[f64]) -> f64 {
    let mut norm = 0.0f64;
    for (&w, &g) in q.iter().zip(gc) {
        let contribution = if w > 10.0 * WEIGHT_CLAMP {
            g.abs()
        } else {
            (-g).max(0.0)
        };
        norm = norm.max(contribution);
    }
    norm
}

/// One S(D) point at multiplier λ.
#[allow(clippy::too_many_arguments)]
pub fn sinkhorn_rd_point(
    p_x: &DiscreteDistribution,
    d: &DistortionMatrix,
    lambda: f64,
    outer_tol: f64,
    outer_max_iter: usize,
    inner_tol: f64,
    inner_max_iter: usize,
) -> Result<SinkhornRdResult> {
    sinkhorn_rd_warm(
        p_x,
        d,
        lambda,
        outer_tol,
        outer_max_iter,
        inner_tol,
        inner_max_iter,
        None,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn sinkhorn_rd_warm(
    p_x: &DiscreteDistribution,
    d: &DistortionMatrix,
    lambda: f64,
    outer_tol: f64,
    outer_max_iter: usize,
    inner_tol: f64,
    inner_max_iter: usize,
    q0: Option<&[f64]>,
) -> Result<SinkhornRdResult> {
    validate(p_x, d, lambda)?;
    if !(outer_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "outer_tol must be positive, got {outer_tol}"
        )));
    }
    let m = d.ncols();
    let inner = Inner {
        p_x,
        d,
        eps: 1.0 / lambda,
        tol: inner_tol,
        max_iter: inner_max_iter,
    };

    let mut q: Vec<f64> = match q0 {
        Some(q0) => {
            if q0.len() != m {
                return Err(Error::LengthMismatch(q0.len(), m));
            }
            q0.to_vec()
        }
        None => vec![1.0 / m as f64; m],
    };
    clamp_and_renormalize(&mut q);

    let mut current = inner.solve(&q, None)?;
    let mut eta = 1.0;
    let mut outer_iterations = 0;
    let mut outer_gradient_norm = f64::INFINITY;
    let mut converged = false;
    while outer_iterations < outer_max_iter {
        outer_iterations += 1;
        let mean: f64 = q.iter().zip(&current.g).map(|(&w, &g)| w * g).sum();
        let gc: Vec<f64> = current.g.iter().map(|&g| g - mean).collect();
        outer_gradient_norm = projected_gradient_norm(&q, &gc);
        if outer_gradient_norm <= outer_tol {
            converged = true;
            break;
        }

        // Exponentiated-gradient trial with Armijo backtracking on the
        // true objective; the local curvature proxy is Σ q·gc².
        let curvature: f64 = q.iter().zip(&gc).map(|(&w, &g)| w * g * g).sum();
        let mut accepted = false;
        let mut step = eta;
        for _ in 0..MAX_BACKTRACKS {
            let lq: Vec<f64> = q
                .iter()
                .zip(&gc)
                .map(|(&w, &g)| w.ln() - step * g)
                .collect();
            let lz = log_sum_exp_by(m, |j| lq[j]);
            let mut trial: Vec<f64> = lq.iter().map(|&l| (l - lz).exp()).collect();
            clamp_and_renormalize(&mut trial);
            let trial_res = inner.solve(&trial, Some(&current))?;
            if trial_res.objective <= current.objective - ARMIJO_C * step * curvature {
                let decrease = current.objective - trial_res.objective;
                q = trial;
                current = trial_res;
                eta = step * 4.0;
                accepted = true;
                if decrease <= STALL_REL * current.objective.abs().max(1e-3) {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Line search exhausted: the objective is flat to numerical
            // precision in the descent direction.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    // Prune extinct letters and report the inner solve at the pruned q.
    let mut pruned = q.clone();
    let mut mass = 0.0;
    for w in pruned.iter_mut() {
        if *w < PRUNE_THRESHOLD {
            *w = 0.0;
        }
        mass += *w;
    }
    for w in pruned.iter_mut() {
        *w /= mass;
    }
    let final_inner = inner.solve(&pruned, Some(&current))?;
    let q_y = DiscreteDistribution::from_weights(pruned)?;
    let point = RDPoint::new(
        lambda,
        final_inner.kl_term.max(0.0),
        final_inner.transport_cost.max(0.0),
    )?;
    let all_converged = converged && final_inner.converged;
    Ok(SinkhornRdResult {
        point,
        q_y,
        inner: final_inner,
        outer_iterations,
        outer_gradient_norm,
        converged: all_converged,
    })
}

/// λ-sweep warm-starting q_y and the dual potentials across points.
#[allow(clippy::too_many_arguments)]
pub fn rd_sweep_sinkhorn(
    p_x: &DiscreteDistribution,
    d: &DistortionMatrix,
    lambdas: &[f64],
    outer_tol: f64,
    outer_max_iter: usize,
    inner_tol: f64,
    inner_max_iter: usize,
) -> Result<(RDCurve, Vec<SinkhornRdResult>)> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".to_string()));
    }
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]));
    let mut results: Vec<Option<SinkhornRdResult>> = vec![None; lambdas.len()];
    let mut warm_q: Option<Vec<f64>> = None;
    for &k in &order {
        let res = sinkhorn_rd_warm(
            p_x,
            d,
            lambdas[k],
            outer_tol,
            outer_max_iter,
            inner_tol,
            inner_max_iter,
            warm_q.as_deref(),
        )?;
        // Re-inflate pruned letters so later λ values can revive them.
        let m = res.q_y.len();
        warm_q = Some(
            res.q_y
                .weights()
                .iter()
                .map(|&w| (w + 1e-6) / (1.0 + 1e-6 * m as f64))
                .collect(),
        );
        results[k] = Some(res);
    }
    let results: Vec<SinkhornRdResult> = results.into_iter().map(Option::unwrap).collect();
    let curve = RDCurve::new(results.iter().map(|r| r.point).collect())?;
    Ok((curve, results))
}

/// Evaluates, per reproduction atom y,
/// Σ_x P(x)·e^{−λd(x,y)} / Σ_{y′} q(y′)·e^{−λd(x,y′)} − 1 in the log
/// domain. Zero residuals mean the Gibbs construction built from q is a
/// genuine coupling (its second marginal really is q).
pub fn coupling_condition_check(
    p_x: &DiscreteDistribution,
    q_y: &DiscreteDistribution,
    d: &DistortionMatrix,
    lambda: f64,
) -> Result<CouplingConditionReport> {
    validate(p_x, d, lambda)?;
    if d.ncols() != q_y.len() {
        return Err(Error::LengthMismatch(d.ncols(), q_y.len()));
    }
    let n = p_x.len();
    let m = q_y.len();
    let lq: Vec<f64> = q_y
        .weights()
        .iter()
        .map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
        .collect();
    // Per-source log normalizer ln Σ_y q(y) e^{−λ d(x,y)}.
    let lz: Vec<f64> = (0..n)
        .map(|x| log_sum_exp_by(m, |y| lq[y] - lambda * d.get(x, y)))
        .collect();
    let mut residuals = Vec::with_capacity(m);
    let mut max_abs: f64 = 0.0;
    for y in 0..m {
        // The condition is an integral against Q, so it constrains only
        // atoms in the support; extinct atoms hold vacuously and are
        // recorded as zero.
        if q_y.weights()[y] <= 0.0 {
            residuals.push(0.0);
            continue;
        }
        let log_sum = log_sum_exp_by(n, |x| {
            let px = p_x.weights()[x];
            if px > 0.0 {
                px.ln() - lambda * d.get(x, y) - lz[x]
            } else {
                f64::NEG_INFINITY
            }
        });
        let r = log_sum.exp() - 1.0;
        max_abs = max_abs.max(r.abs());
        residuals.push(r);
    }
    Ok(CouplingConditionReport {
        residuals,
        max_abs_residual: max_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blahut_arimoto::ba_rd;
    use crate::measures::{hamming_matrix, squared_error_matrix};

    fn dist(w: Vec<f64>) -> DiscreteDistribution {
        DiscreteDistribution::from_weights(w).unwrap()
    }

    fn five_atom() -> (DiscreteDistribution, DistortionMatrix) {
        let atoms = [-1.0, -0.4, 0.15, 0.7, 1.3];
        let p = dist(vec![0.15, 0.3, 0.2, 0.25, 0.1]);
        let d = squared_error_matrix(&atoms, &atoms).unwrap();
        (p, d)
    }

    fn h_b(p: f64) -> f64 {
        if p <= 0.0 || p >= 1.0 {
            0.0
        } else {
            -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
        }
    }

    #[test]
    fn single_reproduction_atom_forces_zero_rate() {
        let p = DiscreteDistribution::with_atoms(
            vec![-1.0, 0.0, 2.0],
            vec![0.25, 0.5, 0.25],
        )
        .unwrap();
        let d = squared_error_matrix(&[-1.0, 0.0, 2.0], &[0.0]).unwrap();
        let res = sinkhorn_rd_point(&p, &d, 1.0, 1e-7, 500, 1e-11, 100_000).unwrap();
        assert!(res.point.rate_nats <= 1e-10);
        let expected: f64 = 0.25 * 1.0 + 0.5 * 0.0 + 0.25 * 4.0;
        assert!((res.point.distortion - expected).abs() <= 1e-9);
    }

    #[test]
    fn matches_ba_on_five_atom_source() {
        let (p, d) = five_atom();
        for lambda in [0.05, 1.0, 10.0] {
            let ba = ba_rd(&p, &d, lambda, 1e-12, 200_000).unwrap();
            let srd =
                sinkhorn_rd_point(&p, &d, lambda, 1e-7, 2_000, 1e-11, 200_000).unwrap();
            assert!(
                (ba.point.rate_nats - srd.point.rate_nats).abs() <= 1e-3,
                "rate at λ={lambda}: {} vs {}",
                ba.point.rate_nats,
                srd.point.rate_nats
            );
            assert!(
                (ba.point.distortion - srd.point.distortion).abs() <= 1e-4,
                "distortion at λ={lambda}"
            );
            // Rate/distortion come straight from the inner solve.
            assert!((srd.point.rate_nats - srd.inner.kl_term).abs() <= 1e-10);
            assert!((srd.point.distortion - srd.inner.transport_cost).abs() <= 1e-10);
        }
    }

    #[test]
    fn binary_hamming_matches_analytic() {
        let p = dist(vec![0.5, 0.5]);
        let d = hamming_matrix(2, 2).unwrap();
        let target = 0.1;
        let lambda = ((1.0 - target) / target as f64).ln();
        let res = sinkhorn_rd_point(&p, &d, lambda, 1e-8, 2_000, 1e-12, 200_000).unwrap();
        let analytic = std::f64::consts::LN_2 - h_b(target);
        assert!((res.point.rate_nats - analytic).abs() <= 1e-3);
        assert!((res.point.distortion - target).abs() <= 1e-3);
    }

    #[test]
    fn dual_potential_constant_on_support_at_optimum() {
        // The main equivalence in action: at the outer optimum the column
        // potential is constant where q_y lives, so the Gibbs coupling
        // collapses to the Blahut-Arimoto form.
        let (p, d) = five_atom();
        let res = sinkhorn_rd_point(&p, &d, 1.0, 5e-8, 5_000, 1e-12, 200_000).unwrap();
        assert!(res.converged);
        let mean: f64 = res
            .q_y
            .weights()
            .iter()
            .zip(&res.inner.g)
            .map(|(&w, &g)| w * g)
            .sum();
        let variation = res
            .q_y
            .weights()
            .iter()
            .zip(&res.inner.g)
            .filter(|(&w, _)| w > 1e-6)
            .map(|(_, &g)| (g - mean).abs())
            .fold(0.0f64, f64::max);
        assert!(variation <= 1e-6, "variation {variation}");
        // And the coupling condition holds at the optimizer.
        let report = coupling_condition_check(&p, &res.q_y, &d, 1.0).unwrap();
        assert!(report.max_abs_residual <= 1e-6);
    }

    #[test]
    fn entropic_value_upper_bounds_unconstrained_inner() {
        // With the second marginal pinned to q, the entropic OT value
        // λ·E[d] + KL is at least the unconstrained partition-function
        // bound Σ_x p(x)·(−ln Σ_y q(y) e^{−λd}).
        let (p, d) = five_atom();
        let q = dist(vec![0.1, 0.25, 0.3, 0.2, 0.15]);
        for lambda in [0.5, 2.0] {
            let eps = 1.0 / lambda;
            let res =
                crate::sinkhorn::sinkhorn(&p, &q, &d, eps, 1e-11, 200_000).unwrap();
            let constrained = lambda * res.transport_cost + res.kl_term;
            let mut free = 0.0;
            for (x, &px) in p.weights().iter().enumerate() {
                let lz = log_sum_exp_by(q.len(), |y| {
                    q.weights()[y].ln() - lambda * d.get(x, y)
                });
                free -= px * lz;
            }
            assert!(constrained >= free - 1e-9, "λ={lambda}");
        }
    }

    #[test]
    fn sweep_matches_single_points_and_is_monotone() {
        let (p, d) = five_atom();
        let lambdas = [0.2, 1.0, 5.0];
        let (curve, results) =
            rd_sweep_sinkhorn(&p, &d, &lambdas, 1e-7, 2_000, 1e-11, 200_000).unwrap();
        assert!(curve.is_monotone(1e-6));
        for (k, &lambda) in lambdas.iter().enumerate() {
            let solo =
                sinkhorn_rd_point(&p, &d, lambda, 1e-7, 2_000, 1e-11, 200_000).unwrap();
            assert!((results[k].point.rate_nats - solo.point.rate_nats).abs() <= 1e-5);
            assert!((results[k].point.distortion - solo.point.distortion).abs() <= 1e-5);
        }
    }

    #[test]
    fn coupling_condition_zero_for_symmetric_case() {
        // Uniform source, uniform q, circulant distances: row and column
        // kernel sums coincide, so every residual cancels exactly.
        let p = dist(vec![0.25; 4]);
        let q = dist(vec![0.25; 4]);
        let entries: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| ((i + 4 - j) % 4) as f64).collect())
            .collect();
        let d = DistortionMatrix::new(entries).unwrap();
        let report = coupling_condition_check(&p, &q, &d, 0.7).unwrap();
        assert!(report.max_abs_residual <= 1e-12);
        assert_eq!(report.residuals.len(), 4);
    }

    #[test]
    fn coupling_condition_detects_non_optimal_q() {
        let p = dist(vec![0.9, 0.1]);
        let q = dist(vec![0.5, 0.5]);
        let d = hamming_matrix(2, 2).unwrap();
        let report = coupling_condition_check(&p, &q, &d, 1.0).unwrap();
        assert!(report.max_abs_residual > 0.01);
        // Direct finite-sum evaluation of the first residual.
        let z = 0.5 * (1.0 + (-1.0f64).exp());
        let expected = (0.9 + 0.1 * (-1.0f64).exp()) / z - 1.0;
        assert!((report.residuals[0] - expected).abs() <= 1e-12);
    }

    #[test]
    fn coupling_condition_near_zero_at_ba_optimum() {
        let (p, d) = five_atom();
        let ba = ba_rd(&p, &d, 2.0, 1e-12, 200_000).unwrap();
        let report = coupling_condition_check(&p, &ba.q_y, &d, 2.0).unwrap();
        assert!(report.max_abs_residual <= 1e-6);
    }
}
