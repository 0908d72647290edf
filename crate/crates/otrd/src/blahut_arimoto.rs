//! Blahut-Arimoto alternating minimization.
//!
//! Rate-distortion at a fixed multiplier λ alternates
//!
//! ```text
//! P(y|x) = Q(y) e^{−λ d(x,y)} / Σ_{y′} Q(y′) e^{−λ d(x,y′)}
//! Q(y)   = Σ_x P_X(x) P(y|x)
//! ```
//!
//! until the induced output marginal reproduces Q. Channel capacity uses
//! the dual Arimoto scheme with its bracketing bounds
//! Σ_x r(x) D(W_x ‖ q) ≤ C ≤ max_x D(W_x ‖ q), where q = rW.
//!
//! All computation is in the log domain, so large λ (hard distortion
//! constraints) and shrinking support are handled without underflow. Rates
//! are in nats throughout.

use crate::error::{Error, Result};
use crate::measures::{
    DiscreteDistribution, DistortionMatrix, RDCurve, RDPoint, ZERO_WEIGHT,
};
use crate::numerics::log_sum_exp_by;

/// Default fixed-point tolerance for both solvers.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200_000;

/// Converged rate-distortion point with its optimizers.
#[derive(Debug, Clone)]
pub struct BaRdResult {
    pub point: RDPoint,
    /// Output marginal Q_Y.
    pub q_y: DiscreteDistribution,
    /// Row-stochastic conditional P(y|x), n×m.
    pub conditional: Vec<Vec<f64>>,
    /// Sup over (x, y) with q_y(y) > 0 of the deviation of `conditional`
    /// from the Gibbs form it should take at the reported q_y.
    pub fixed_point_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Arimoto capacity output.
#[derive(Debug, Clone)]
pub struct CapacityResult {
    /// Capacity estimate in nats (final lower bound).
    pub capacity_nats: f64,
    /// Capacity-achieving input distribution r(x).
    pub input_dist: DiscreteDistribution,
    pub iterations: usize,
    /// Final upper-minus-lower bound gap.
    pub gap: f64,
    pub converged: bool,
}

fn validate_rd_inputs(
    p_x: &DiscreteDistribution,
    d: &DistortionMatrix,
    lambda: f64,
) -> Result<()> {
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

/// One rate-distortion point at multiplier λ, with an optional warm-start
/// output marginal (defaults to uniform).
pub fn ba_rd(
    p_x: &DiscreteDistribution,
    d: &DistortionMatrix,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<BaRdResult> {
    ba_rd_warm(p_x, d, lambda, tol, max_iter, None)
}

pub fn ba_rd_warm(
    p_x: &DiscreteDistribution,
    d: &DistortionMatrix,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    q0: Option<&[f64]>,
) -> Result<BaRdResult> {
    validate_rd_inputs(p_x, d, lambda)?;
    let rows = p_x.support();
    if rows.is_empty() {
        return Err(Error::InvalidDistribution(
            "source has no positive-mass atom".to_string(),
        ));
    }
    let n_full = p_x.len();
    let m = d.ncols();
    let p: Vec<f64> = rows.iter().map(|&i| p_x.weights()[i]).collect();
    let dd: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| (0..m).map(|j| d.get(i, j)).collect())
        .collect();
    for (r, &i) in rows.iter().enumerate() {
        if dd[r].iter().all(|c| c.is_infinite()) {
            return Err(Error::InvalidMatrix(format!(
                "source atom {i} has no finite-distortion reproduction"
            )));
        }
    }

    // Log-domain state: lq(y) = ln Q(y), with extinct letters at −inf.
    let mut lq: Vec<f64> = match q0 {
        Some(q) => {
            if q.len() != m {
                return Err(Error::LengthMismatch(q.len(), m));
            }
            q.iter()
                .map(|&w| if w > ZERO_WEIGHT { w.ln() } else { f64::NEG_INFINITY })
                .collect()
        }
        None => vec![-(m as f64).ln(); m],
    };

    let nr = rows.len();
    let mut iterations = 0;
    let mut converged = false;
    // Per-row log normalizer ln Σ_y Q(y) e^{−λ d}.
    let mut lz = vec![0.0; nr];
    while iterations < max_iter {
        iterations += 1;
        for r in 0..nr {
            lz[r] = log_sum_exp_by(m, |y| lq[y] - lambda * dd[r][y]);
        }
        // Induced marginal of the BA_1 conditional, in the log domain.
        let mut residual = 0.0f64;
        let mut lq_new = vec![f64::NEG_INFINITY; m];
        for (y, lqn) in lq_new.iter_mut().enumerate() {
            if lq[y] == f64::NEG_INFINITY {
                continue;
            }
            *lqn = log_sum_exp_by(nr, |r| p[r].ln() + lq[y] - lambda * dd[r][y] - lz[r]);
            residual = residual.max((lqn.exp() - lq[y].exp()).abs());
        }
        lq = lq_new;
        // Freeze letters that fell below the support threshold.
        for l in lq.iter_mut() {
            if *l < ZERO_WEIGHT.ln() {
                *l = f64::NEG_INFINITY;
            }
        }
        if residual <= tol {
            // The absolute-change residual is blind to letters with tiny
            // mass: one that shrinks by a fixed factor each sweep never
            // moves by more than its own mass, and one that grows by a
            // fixed factor (a KKT violation — its update ratio exceeds 1)
            // creeps below the radar for thousands of sweeps. Resolve
            // both from the update ratio itself: prune strictly
            // contracting letters (at a fixed point every supported
            // letter has ratio exactly 1, and the mass cap below bounds
            // what pruning can remove) and boost strictly expanding ones
            // back into the interior, then re-converge.
            let mut adjusted = false;
            for r in 0..nr {
                lz[r] = log_sum_exp_by(m, |y| lq[y] - lambda * dd[r][y]);
            }
            for (y, l) in lq.iter_mut().enumerate() {
                if *l == f64::NEG_INFINITY || *l > (1e-6f64).ln() {
                    continue;
                }
                let log_ratio =
                    log_sum_exp_by(nr, |r| p[r].ln() - lambda * dd[r][y] - lz[r]);
                if log_ratio < -1e-9 {
                    *l = f64::NEG_INFINITY;
                    adjusted = true;
                } else if log_ratio > 1e-9 {
                    *l = (1e-4f64).ln();
                    adjusted = true;
                }
            }
            if !adjusted {
                converged = true;
                break;
            }
        }
    }

    // Final conditional from the reported Q, and the point's functionals.
    for r in 0..nr {
        lz[r] = log_sum_exp_by(m, |y| lq[y] - lambda * dd[r][y]);
    }
    let mut conditional = vec![vec![0.0; m]; n_full];
    let mut rate = 0.0;
    let mut distortion = 0.0;
    for (r, &i) in rows.iter().enumerate() {
        for y in 0..m {
            if lq[y] == f64::NEG_INFINITY {
                continue;
            }
            let lc = lq[y] - lambda * dd[r][y] - lz[r];
            let c = lc.exp();
            conditional[i][y] = c;
            if c > ZERO_WEIGHT {
                rate += p[r] * c * (lc - lq[y]);
                distortion += p[r] * c * dd[r][y];
            }
        }
    }

    // Residual of BA_1 at (q_y, conditional): rebuilding the conditional
    // from the reported Q must reproduce it, so the only slack left is
    // BA_2 — the gap between Q and the marginal it induces.
    let mut fixed_point_residual = 0.0f64;
    for (y, &l) in lq.iter().enumerate() {
        if l == f64::NEG_INFINITY {
            continue;
        }
        let induced: f64 = rows
            .iter()
            .enumerate()
            .map(|(r, _)| p[r] * conditional[rows[r]][y])
            .sum();
        fixed_point_residual = fixed_point_residual.max((induced - l.exp()).abs());
    }

    let q_weights: Vec<f64> = lq
        .iter()
        .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() })
        .collect();
    let total: f64 = q_weights.iter().sum();
    let q_y = DiscreteDistribution::from_weights(
        q_weights.iter().map(|w| w / total).collect(),
    )?;

    Ok(BaRdResult {
        point: RDPoint::new(lambda, rate.max(0.0), distortion.max(0.0))?,
        q_y,
        conditional,
        fixed_point_residual,
        iterations,
        converged,
    })
}

/// λ-sweep with the output marginal warm-started from the previous point.
pub fn rd_sweep_ba(
    p_x: &DiscreteDistribution,
    d: &DistortionMatrix,
    lambdas: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(RDCurve, Vec<BaRdResult>)> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".to_string()));
    }
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]));
    let mut results: Vec<Option<BaRdResult>> = vec![None; lambdas.len()];
    let mut warm: Option<Vec<f64>> = None;
    for &k in &order {
        let res = ba_rd_warm(p_x, d, lambdas[k], tol, max_iter, warm.as_deref())?;
        // Extinct letters would stay extinct forever under a log-domain
        // warm start; re-inflate them slightly so the next λ can revive
        // support if it wants to.
        warm = Some(
            res.q_y
                .weights()
                .iter()
                .map(|&w| (w + 1e-9) / (1.0 + 1e-9 * res.q_y.len() as f64))
                .collect(),
        );
        results[k] = Some(res);
    }
    let results: Vec<BaRdResult> = results.into_iter().map(Option::unwrap).collect();
    let curve = RDCurve::new(results.iter().map(|r| r.point).collect())?;
    Ok((curve, results))
}

/// Arimoto capacity of a discrete memoryless channel given as a dense
/// row-stochastic matrix W[x][y] = p(y|x).
pub fn ba_capacity(
    channel: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<CapacityResult> {
    let n = channel.len();
    if n == 0 {
        return Err(Error::InvalidMatrix("empty channel".to_string()));
    }
    let m = channel[0].len();
    for (x, row) in channel.iter().enumerate() {
        if row.len() != m {
            return Err(Error::InvalidMatrix(format!(
                "channel row {x} has length {}, expected {m}",
                row.len()
            )));
        }
        if row.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(Error::InvalidMatrix(format!(
                "channel row {x} has entries outside [0, 1]"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidMatrix(format!(
                "channel row {x} sums to {s}, expected 1"
            )));
        }
    }

    let mut r = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    let mut lower = 0.0;
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut prev_lower = f64::NEG_INFINITY;
    while iterations < max_iter {
        iterations += 1;
        let mut q = vec![0.0; m];
        for (x, row) in channel.iter().enumerate() {
            for (y, &w) in row.iter().enumerate() {
                q[y] += r[x] * w;
            }
        }
        // D_x = D(W_x ‖ q); q(y) = 0 forces W[x][y] = 0, skipped.
        let dx: Vec<f64> = channel
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&q)
                    .filter(|(&w, _)| w > 0.0)
                    .map(|(&w, &qy)| w * (w / qy).ln())
                    .sum()
            })
            .collect();
        lower = r.iter().zip(&dx).map(|(&rx, &d)| rx * d).sum();
        let upper = dx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        gap = upper - lower;
        debug_assert!(lower >= prev_lower - 1e-12);
        prev_lower = lower;
        if gap <= tol {
            converged = true;
            break;
        }
        // r_x ← r_x e^{D_x}, renormalized.
        let shift = upper;
        let mut z = 0.0;
        for (rx, &d) in r.iter_mut().zip(&dx) {
            *rx *= (d - shift).exp();
            z += *rx;
        }
        for rx in r.iter_mut() {
            *rx /= z;
        }
    }

    Ok(CapacityResult {
        capacity_nats: lower.max(0.0),
        input_dist: DiscreteDistribution::from_weights(r)?,
        iterations,
        gap,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{hamming_matrix, squared_error_matrix};
    use proptest::prelude::*;

    fn dist(w: Vec<f64>) -> DiscreteDistribution {
        DiscreteDistribution::from_weights(w).unwrap()
    }

    /// Binary entropy in nats.
    fn h_b(p: f64) -> f64 {
        if p <= 0.0 || p >= 1.0 {
            0.0
        } else {
            -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
        }
    }

    #[test]
    fn binary_hamming_matches_analytic_curve() {
        // For the uniform binary source under Hamming distortion,
        // R(D) = ln 2 − H_b(D); the multiplier λ = ln((1−D)/D) attains
        // distortion exactly D.
        let p = dist(vec![0.5, 0.5]);
        let d = hamming_matrix(2, 2).unwrap();
        for target in [0.05, 0.1, 0.25, 0.4] {
            let lambda = ((1.0 - target) / target as f64).ln();
            let res = ba_rd(&p, &d, lambda, 1e-12, 200_000).unwrap();
            assert!(res.converged);
            assert!((res.point.distortion - target).abs() <= 1e-8, "D {target}");
            let analytic = std::f64::consts::LN_2 - h_b(target);
            assert!(
                (res.point.rate_nats - analytic).abs() <= 1e-8,
                "R at D={target}: {} vs {analytic}",
                res.point.rate_nats
            );
        }
    }

    #[test]
    fn zero_rate_and_zero_distortion_limits() {
        let p = dist(vec![0.15, 0.3, 0.2, 0.25, 0.1]);
        let atoms = [-1.0, -0.4, 0.15, 0.7, 1.3];
        let d = squared_error_matrix(&atoms, &atoms).unwrap();
        let soft = ba_rd(&p, &d, 1e-6, 1e-12, 200_000).unwrap();
        assert!(soft.point.rate_nats <= 1e-4);
        let hard = ba_rd(&p, &d, 1e3, 1e-12, 200_000).unwrap();
        assert!(hard.point.distortion <= 1e-3);
        assert!((hard.point.rate_nats - p.entropy()).abs() <= 1e-3);
    }

    #[test]
    fn rate_agrees_with_kl_form() {
        let p = dist(vec![0.15, 0.3, 0.2, 0.25, 0.1]);
        let atoms = [-1.0, -0.4, 0.15, 0.7, 1.3];
        let d = squared_error_matrix(&atoms, &atoms).unwrap();
        let res = ba_rd(&p, &d, 3.0, 1e-12, 200_000).unwrap();
        // Σ_x p(x)·KL(conditional[x] ‖ q_y).
        let mut rate_kl = 0.0;
        for (x, &px) in p.weights().iter().enumerate() {
            for (y, &qy) in res.q_y.weights().iter().enumerate() {
                let c = res.conditional[x][y];
                if c > ZERO_WEIGHT {
                    rate_kl += px * c * (c / qy).ln();
                }
            }
        }
        assert!((rate_kl - res.point.rate_nats).abs() <= 1e-10);
        // Rows are stochastic and BA_2 holds at the fixed point.
        for row in &res.conditional {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
        assert!(res.fixed_point_residual <= 1e-8);
    }

    #[test]
    fn sweep_is_monotone_and_matches_single_points() {
        let p = dist(vec![0.15, 0.3, 0.2, 0.25, 0.1]);
        let atoms = [-1.0, -0.4, 0.15, 0.7, 1.3];
        let d = squared_error_matrix(&atoms, &atoms).unwrap();
        let lambdas = [0.1, 0.5, 2.0, 8.0, 32.0];
        let (curve, results) = rd_sweep_ba(&p, &d, &lambdas, 1e-11, 200_000).unwrap();
        assert!(curve.is_monotone(1e-6));
        assert_eq!(curve.points().len(), lambdas.len());
        for (k, &lambda) in lambdas.iter().enumerate() {
            let solo = ba_rd(&p, &d, lambda, 1e-11, 200_000).unwrap();
            assert!((results[k].point.rate_nats - solo.point.rate_nats).abs() <= 1e-7);
            assert!((results[k].point.distortion - solo.point.distortion).abs() <= 1e-7);
        }
        // A single λ reduces to ba_rd.
        let (single, _) = rd_sweep_ba(&p, &d, &[2.0], 1e-11, 200_000).unwrap();
        let solo = ba_rd(&p, &d, 2.0, 1e-11, 200_000).unwrap();
        assert!((single.points()[0].rate_nats - solo.point.rate_nats).abs() <= 1e-9);
    }

    #[test]
    fn capacity_bsc_matches_analytic() {
        let eps = 0.11;
        let channel = vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]];
        let res = ba_capacity(&channel, 1e-12, 200_000).unwrap();
        assert!(res.converged);
        let analytic = std::f64::consts::LN_2 - h_b(eps);
        assert!(
            (res.capacity_nats - analytic).abs() <= 1e-9,
            "{} vs {analytic}",
            res.capacity_nats
        );
        // Symmetric channel → uniform input.
        for &w in res.input_dist.weights() {
            assert!((w - 0.5).abs() <= 1e-6);
        }
    }

    #[test]
    fn capacity_edge_channels() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let res = ba_capacity(&id, 1e-12, 10_000).unwrap();
        assert!((res.capacity_nats - std::f64::consts::LN_2).abs() <= 1e-9);

        let useless = vec![vec![0.3, 0.7], vec![0.3, 0.7]];
        let res = ba_capacity(&useless, 1e-12, 10_000).unwrap();
        assert!(res.capacity_nats <= 1e-12);
    }

    #[test]
    fn capacity_z_channel_matches_closed_form() {
        // Z-channel p(0|0)=1 with back-crossover s = p(0|1):
        // C = ln(1 + (1−s) s^{s/(1−s)}).
        let s = 0.3f64;
        let channel = vec![vec![1.0, 0.0], vec![s, 1.0 - s]];
        let res = ba_capacity(&channel, 1e-13, 500_000).unwrap();
        let analytic = (1.0 + (1.0 - s) * s.powf(s / (1.0 - s))).ln();
        assert!(
            (res.capacity_nats - analytic).abs() <= 1e-9,
            "{} vs {analytic}",
            res.capacity_nats
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = dist(vec![0.5, 0.5]);
        let d = hamming_matrix(2, 2).unwrap();
        assert!(ba_rd(&p, &d, 0.0, 1e-10, 100).is_err());
        assert!(ba_rd(&p, &hamming_matrix(3, 2).unwrap(), 1.0, 1e-10, 100).is_err());
        assert!(ba_capacity(&[vec![0.6, 0.3]], 1e-10, 100).is_err());
        assert!(rd_sweep_ba(&p, &d, &[], 1e-10, 100).is_err());
    }

    fn weights_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.05f64..1.0, len).prop_map(move |mut v| {
            let s: f64 = v.iter().sum();
            for x in v.iter_mut() {
                *x /= s;
            }
            let head: f64 = v.iter().take(len - 1).sum();
            v[len - 1] = 1.0 - head;
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn rate_bounded_by_source_entropy(
            ws in weights_strategy(4),
            lambda in 0.05f64..20.0,
        ) {
            let p = dist(ws);
            let atoms = [-1.0, 0.0, 0.5, 2.0];
            let d = squared_error_matrix(&atoms, &atoms).unwrap();
            let res = ba_rd(&p, &d, lambda, 1e-10, 200_000).unwrap();
            prop_assert!(res.point.rate_nats <= p.entropy() + 1e-9);
            prop_assert!(res.point.distortion >= 0.0);
            for row in &res.conditional {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            }
        }

        #[test]
        fn capacity_bounds_and_validity(
            rows in prop::collection::vec(weights_strategy(3), 3),
        ) {
            let res = ba_capacity(&rows, 1e-10, 200_000).unwrap();
            prop_assert!(res.capacity_nats >= 0.0);
            prop_assert!(res.capacity_nats <= (3.0f64).ln() + 1e-9);
            let s: f64 = res.input_dist.weights().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
    }
}
