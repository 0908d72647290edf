//! Exact discrete Kantorovich optimal transport (Earth Mover's Distance).
//!
//! The transportation problem min Σ π_ij d_ij over couplings π ∈ Π(μ, ν)
//! is solved as a min-cost flow on the bipartite graph, using successive
//! shortest paths with node potentials (dense Dijkstra). Mass stays in
//! floating point; flows below [`PIVOT_TOL`] are treated as zero.
//!
//! The returned dual variables certify optimality:
//! `dual_row[i] + dual_col[j] ≤ d[i][j]` everywhere (feasibility) with
//! equality on the support of the plan (complementary slackness).

use crate::error::{Error, Result};
use crate::measures::{Coupling, DiscreteDistribution, DistortionMatrix, ZERO_WEIGHT};

/// Flows below this threshold count as zero.
pub const PIVOT_TOL: f64 = 1e-12;

/// An optimal transport plan together with its optimality certificate.
#[derive(Debug, Clone)]
pub struct EmdResult {
    pub coupling: Coupling,
    /// Optimal transport cost Σ π_ij d_ij.
    pub cost: f64,
    /// Row dual variables (one per μ atom).
    pub dual_row: Vec<f64>,
    /// Column dual variables (one per ν atom).
    pub dual_col: Vec<f64>,
}

/// Solve the transportation problem between `mu` and `nu` under cost `d`.
///
/// Zero-weight atoms are dropped before solving and reinserted as zero
/// rows/columns; their duals are completed to remain feasible.
pub fn emd(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    d: &DistortionMatrix,
) -> Result<EmdResult> {
    let n = mu.len();
    let m = nu.len();
    if d.nrows() != n || d.ncols() != m {
        return Err(Error::ShapeMismatch {
            expected: (n, m),
            got: (d.nrows(), d.ncols()),
        });
    }
    if d.has_infinite_entries() {
        return Err(Error::InvalidMatrix(
            "emd requires finite cost entries".to_string(),
        ));
    }
    let mass_gap =
        (mu.weights().iter().sum::<f64>() - nu.weights().iter().sum::<f64>()).abs();
    if mass_gap > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "marginal mass mismatch {mass_gap:e}"
        )));
    }

    let rows = mu.support();
    let cols = nu.support();
    let supply: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| nu.weights()[j]).collect();
    let cost_sub: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| d.get(i, j)).collect())
        .collect();

    let (flow, pot_row, pot_col) = solve_transportation(&supply, &demand, &cost_sub)?;

    // Reinsert dropped atoms as zero rows/columns.
    let mut entries = vec![vec![0.0; m]; n];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            entries[i][j] = flow[a][b];
        }
    }
    let mut dual_row = vec![f64::NEG_INFINITY; n];
    let mut dual_col = vec![f64::NEG_INFINITY; m];
    for (a, &i) in rows.iter().enumerate() {
        dual_row[i] = pot_row[a];
    }
    for (b, &j) in cols.iter().enumerate() {
        dual_col[j] = pot_col[b];
    }
    // Dropped columns: tightest feasible dual given the row duals.
    for j in 0..m {
        if dual_col[j] == f64::NEG_INFINITY {
            dual_col[j] = rows
                .iter()
                .enumerate()
                .map(|(a, &i)| d.get(i, j) - pot_row[a])
                .fold(f64::INFINITY, f64::min);
        }
    }
    // Dropped rows: tightest feasible dual given all column duals.
    for i in 0..n {
        if dual_row[i] == f64::NEG_INFINITY {
            dual_row[i] = (0..m)
                .map(|j| d.get(i, j) - dual_col[j])
                .fold(f64::INFINITY, f64::min);
        }
    }

    let mut cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            if entries[i][j] > 0.0 {
                cost += entries[i][j] * d.get(i, j);
            }
        }
    }
    // The flow satisfies the marginals up to accumulated rounding; a final
    // renormalization keeps the Coupling constructor's mass check honest.
    let total: f64 = entries.iter().flatten().sum();
    if (total - 1.0).abs() > PIVOT_TOL {
        for row in entries.iter_mut() {
            for x in row.iter_mut() {
                *x /= total;
            }
        }
    }
    let coupling = Coupling::new(entries)?;
    Ok(EmdResult {
        coupling,
        cost,
        dual_row,
        dual_col,
    })
}

/// Successive shortest paths on the bipartite transportation graph.
///
/// Node layout: 0 = source, 1..=n rows, n+1..=n+m columns, n+m+1 = sink.
/// Potentials keep all residual reduced costs nonnegative so dense
/// Dijkstra applies; ties break toward the lowest node index.
fn solve_transportation(
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    let n = supply.len();
    let m = demand.len();
    if n == 0 || m == 0 {
        return Err(Error::InvalidDistribution(
            "no atoms with positive mass".to_string(),
        ));
    }
    let nodes = n + m + 2;
    let src = 0;
    let sink = n + m + 1;
    let row = |i: usize| 1 + i;
    let col = |j: usize| 1 + n + j;

    let mut flow = vec![vec![0.0; m]; n];
    let mut rem_supply = supply.to_vec();
    let mut rem_demand = demand.to_vec();
    let mut pi = vec![0.0; nodes];

    let mut shipped = 0.0;
    let need: f64 = supply.iter().sum();
    let max_aug = 50 * (n + m) + 100;

    for _aug in 0..max_aug {
        if need - shipped <= PIVOT_TOL {
            let pot_row: Vec<f64> = (0..n).map(|i| -pi[row(i)]).collect();
            let pot_col: Vec<f64> = (0..m).map(|j| pi[col(j)]).collect();
            return Ok((flow, pot_row, pot_col));
        }

        // Dense Dijkstra with reduced costs.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        dist[src] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for w in 0..nodes {
                if !done[w] && dist[w] < best {
                    best = dist[w];
                    u = w;
                }
            }
            if u == usize::MAX || u == sink {
                break;
            }
            done[u] = true;
            if u == src {
                for i in 0..n {
                    if rem_supply[i] > PIVOT_TOL {
                        let rc = pi[src] - pi[row(i)];
                        relax(&mut dist, &mut prev, src, row(i), rc);
                    }
                }
            } else if u >= row(0) && u <= row(n - 1) {
                let i = u - 1;
                for j in 0..m {
                    let rc = cost[i][j] + pi[row(i)] - pi[col(j)];
                    relax(&mut dist, &mut prev, row(i), col(j), rc);
                }
            } else {
                let j = u - 1 - n;
                if rem_demand[j] > PIVOT_TOL {
                    let rc = pi[col(j)] - pi[sink];
                    relax(&mut dist, &mut prev, col(j), sink, rc);
                }
                for i in 0..n {
                    if flow[i][j] > PIVOT_TOL {
                        let rc = -cost[i][j] + pi[col(j)] - pi[row(i)];
                        relax(&mut dist, &mut prev, col(j), row(i), rc);
                    }
                }
            }
        }
        if !dist[sink].is_finite() {
            return Err(Error::CertificationFailed(
                "transportation network disconnected before all mass shipped".to_string(),
            ));
        }

        let d_sink = dist[sink];
        for w in 0..nodes {
            pi[w] += dist[w].min(d_sink);
        }

        // Trace the path and find the bottleneck.
        let mut bottleneck = f64::INFINITY;
        let mut w = sink;
        while w != src {
            let p = prev[w];
            if p == src {
                bottleneck = bottleneck.min(rem_supply[w - 1]);
            } else if w == sink {
                bottleneck = bottleneck.min(rem_demand[p - 1 - n]);
            } else if p <= n {
                // row -> col: forward arc, uncapacitated.
            } else {
                // col -> row: backward arc limited by current flow.
                bottleneck = bottleneck.min(flow[w - 1][p - 1 - n]);
            }
            w = p;
        }
        let push = bottleneck.min(need - shipped);

        let mut w = sink;
        while w != src {
            let p = prev[w];
            if p == src {
                rem_supply[w - 1] -= push;
            } else if w == sink {
                rem_demand[p - 1 - n] -= push;
            } else if p <= n {
                flow[p - 1][w - 1 - n] += push;
            } else {
                flow[w - 1][p - 1 - n] -= push;
                if flow[w - 1][p - 1 - n] < PIVOT_TOL {
                    flow[w - 1][p - 1 - n] = 0.0;
                }
            }
            w = p;
        }
        shipped += push;
    }
    Err(Error::CertificationFailed(
        "successive shortest paths did not terminate".to_string(),
    ))
}

fn relax(dist: &mut [f64], prev: &mut [usize], from: usize, to: usize, rc: f64) {
    // Clamp tiny negative reduced costs from rounding.
    let rc = rc.max(0.0);
    let cand = dist[from] + rc;
    if cand < dist[to] - 1e-15 {
        dist[to] = cand;
        prev[to] = from;
    }
}

/// Expected cost of the product coupling μ ⊗ ν; a feasibility upper bound.
pub fn product_coupling_cost(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    d: &DistortionMatrix,
) -> f64 {
    let mut sum = 0.0;
    for (i, &wi) in mu.weights().iter().enumerate() {
        if wi <= ZERO_WEIGHT {
            continue;
        }
        for (j, &wj) in nu.weights().iter().enumerate() {
            if wj > ZERO_WEIGHT {
                sum += wi * wj * d.get(i, j);
            }
        }
    }
    sum
}
