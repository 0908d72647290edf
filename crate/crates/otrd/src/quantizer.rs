//! M-level scalar quantizer design under squared error, three ways.
//!
//! * [`lloyd_max`] — the classical alternation between nearest-codeword
//!   assignment and centroid update (weighted k-means on the line);
//! * [`kmeans_1d_exact`] — globally optimal via dynamic programming, valid
//!   because optimal squared-error clusters are contiguous in sorted atom
//!   order;
//! * [`extremal_emd_quantizer`] — minimizes the Kantorovich cost
//!   W(P_X, Q) over all Q supported on at most M points. For a fixed
//!   codebook the optimal free-weight Q concentrates each atom's mass on
//!   its nearest codeword, so the alternation coincides with Lloyd steps;
//!   the exact transport solver certifies the equivalence at convergence
//!   (the certified EMD cost must equal the quantizer's distortion).
//!
//! The nearest-codeword map is monotone on the line, so its pushforward
//! coupling is the monotone (optimal) one — which is why the EMD of the
//! induced Q equals the quantization distortion.

use crate::error::{Error, Result};
use crate::exact_ot::emd;
use crate::measures::{squared_error_matrix, DiscreteDistribution, ZERO_WEIGHT};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Certified agreement required between the transport cost of the induced
/// Q and the quantizer distortion.
pub const EMD_CERT_TOL: f64 = 1e-9;

/// An M-level scalar quantizer for a discrete source.
#[derive(Debug, Clone)]
pub struct Quantizer {
    /// Reproduction levels, in source units.
    pub codebook: Vec<f64>,
    /// Codeword index per source atom.
    pub assignment: Vec<usize>,
    /// Expected squared error under P_X.
    pub distortion: f64,
    /// Mass of each codeword under the assignment.
    pub induced_q: DiscreteDistribution,
}

/// Initialization for the Lloyd alternation.
#[derive(Debug, Clone)]
pub enum LloydInit {
    /// Explicit starting codebook.
    Codebook(Vec<f64>),
    /// Weighted sampling without replacement from the source atoms.
    Seed(u64),
}

fn atoms_of(p_x: &DiscreteDistribution) -> Result<&[f64]> {
    p_x.atoms().ok_or_else(|| {
        Error::InvalidArgument("quantizer design needs a source with atoms".to_string())
    })
}

/// Nearest codeword per atom, ties broken toward the lowest index.
fn assign_nearest(atoms: &[f64], codebook: &[f64]) -> Vec<usize> {
    atoms
        .iter()
        .map(|&x| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, &c) in codebook.iter().enumerate() {
                let d = (x - c) * (x - c);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn distortion_of(
    atoms: &[f64],
    weights: &[f64],
    codebook: &[f64],
    assignment: &[usize],
) -> f64 {
    atoms
        .iter()
        .zip(weights)
        .zip(assignment)
        .map(|((&x, &w), &k)| w * (x - codebook[k]) * (x - codebook[k]))
        .sum()
}

fn build_quantizer(
    p_x: &DiscreteDistribution,
    codebook: Vec<f64>,
) -> Result<Quantizer> {
    let atoms = atoms_of(p_x)?;
    let assignment = assign_nearest(atoms, &codebook);
    let distortion = distortion_of(atoms, p_x.weights(), &codebook, &assignment);
    let mut q = vec![0.0; codebook.len()];
    for (&w, &k) in p_x.weights().iter().zip(&assignment) {
        q[k] += w;
    }
    let total: f64 = q.iter().sum();
    let induced_q = DiscreteDistribution::with_atoms(
        codebook.clone(),
        q.iter().map(|w| w / total).collect(),
    )?;
    Ok(Quantizer {
        codebook,
        assignment,
        distortion,
        induced_q,
    })
}

/// Sampling without replacement from the positive-mass atoms: the first
/// level is drawn with probability ∝ mass, later ones ∝ mass times the
/// squared distance to the closest level drawn so far (the k-means++
/// rule). Plain mass-proportional draws cluster the levels on the heavy
/// atoms and can miss the basin of the global optimum entirely.
fn seeded_codebook(p_x: &DiscreteDistribution, m: usize, seed: u64) -> Result<Vec<f64>> {
    let atoms = atoms_of(p_x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<(f64, f64)> = atoms
        .iter()
        .zip(p_x.weights())
        .filter(|(_, &w)| w > ZERO_WEIGHT)
        .map(|(&x, &w)| (x, w))
        .collect();
    let take = m.min(pool.len());
    let mut codebook: Vec<f64> = Vec::with_capacity(take);
    for _ in 0..take {
        let score = |x: f64, w: f64| -> f64 {
            match codebook
                .iter()
                .map(|&c| (x - c) * (x - c))
                .min_by(f64::total_cmp)
            {
                Some(d2) => w * d2,
                None => w,
            }
        };
        let total: f64 = pool.iter().map(|&(x, w)| score(x, w)).sum();
        let mut pick = pool.len() - 1;
        if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            for (idx, &(x, w)) in pool.iter().enumerate() {
                u -= score(x, w);
                if u <= 0.0 {
                    pick = idx;
                    break;
                }
            }
        } else {
            // All remaining atoms coincide with chosen levels; any pick
            // is equivalent.
            pick = 0;
        }
        codebook.push(pool.remove(pick).0);
    }
    Ok(codebook)
}

fn lloyd_core(
    p_x: &DiscreteDistribution,
    mut codebook: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let atoms = atoms_of(p_x)?;
    let weights = p_x.weights();
    let mut prev_distortion = f64::INFINITY;
    for _ in 0..max_iter {
        let mut assignment = assign_nearest(atoms, &codebook);
        // Repair empty cells: move the codeword to the atom contributing
        // the most distortion, then reassign.
        loop {
            let mut mass = vec![0.0; codebook.len()];
            for (&w, &k) in weights.iter().zip(&assignment) {
                mass[k] += w;
            }
            let empty = match mass.iter().position(|&w| w <= ZERO_WEIGHT) {
                Some(k) => k,
                None => break,
            };
            let worst = atoms
                .iter()
                .zip(weights)
                .zip(&assignment)
                .enumerate()
                .max_by(|(_, ((xa, wa), ka)), (_, ((xb, wb), kb))| {
                    let da = *wa * (*xa - codebook[**ka]).powi(2);
                    let db = *wb * (*xb - codebook[**kb]).powi(2);
                    da.total_cmp(&db)
                })
                .map(|(i, _)| i)
                .expect("source has atoms");
            codebook[empty] = atoms[worst];
            assignment = assign_nearest(atoms, &codebook);
        }
        // Centroid update.
        let mut num = vec![0.0; codebook.len()];
        let mut den = vec![0.0; codebook.len()];
        for ((&x, &w), &k) in atoms.iter().zip(weights).zip(&assignment) {
            num[k] += w * x;
            den[k] += w;
        }
        let mut movement = 0.0f64;
        for (k, c) in codebook.iter_mut().enumerate() {
            if den[k] > 0.0 {
                let next = num[k] / den[k];
                movement = movement.max((next - *c).abs());
                *c = next;
            }
        }
        let assignment = assign_nearest(atoms, &codebook);
        let distortion = distortion_of(atoms, weights, &codebook, &assignment);
        debug_assert!(distortion <= prev_distortion + 1e-12);
        if movement <= tol || prev_distortion - distortion <= 1e-15 {
            break;
        }
        prev_distortion = distortion;
    }
    Ok(codebook)
}

/// Weighted Lloyd-Max alternation from the given initialization.
pub fn lloyd_max(
    p_x: &DiscreteDistribution,
    m: usize,
    init: LloydInit,
    tol: f64,
    max_iter: usize,
) -> Result<Quantizer> {
    if m < 1 {
        return Err(Error::InvalidArgument("need at least one level".to_string()));
    }
    let initial = match init {
        LloydInit::Codebook(c) => {
            if c.is_empty() || c.len() > m {
                return Err(Error::InvalidArgument(format!(
                    "initial codebook must have 1..={m} levels, got {}",
                    c.len()
                )));
            }
            c
        }
        LloydInit::Seed(seed) => seeded_codebook(p_x, m, seed)?,
    };
    let codebook = lloyd_core(p_x, initial, tol, max_iter)?;
    build_quantizer(p_x, codebook)
}

/// Best of `restarts` seeded Lloyd runs (seeds `seed`, `seed+1`, …).
pub fn lloyd_max_restarts(
    p_x: &DiscreteDistribution,
    m: usize,
    restarts: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<Quantizer> {
    if restarts < 1 {
        return Err(Error::InvalidArgument("need at least one restart".to_string()));
    }
    let mut best: Option<Quantizer> = None;
    for k in 0..restarts {
        let q = lloyd_max(
            p_x,
            m,
            LloydInit::Seed(seed.wrapping_add(k as u64)),
            tol,
            max_iter,
        )?;
        if best.as_ref().is_none_or(|b| q.distortion < b.distortion) {
            best = Some(q);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Globally optimal M-level quantizer by dynamic programming over
/// contiguous partitions of the sorted atoms.
pub fn kmeans_1d_exact(p_x: &DiscreteDistribution, m: usize) -> Result<Quantizer> {
    if m < 1 {
        return Err(Error::InvalidArgument("need at least one level".to_string()));
    }
    let atoms = atoms_of(p_x)?;
    let weights = p_x.weights();
    let mut order: Vec<usize> = (0..atoms.len())
        .filter(|&i| weights[i] > ZERO_WEIGHT)
        .collect();
    order.sort_by(|&a, &b| atoms[a].total_cmp(&atoms[b]));
    let n = order.len();
    if n == 0 {
        return Err(Error::InvalidDistribution(
            "source has no positive-mass atom".to_string(),
        ));
    }

    // Prefix sums over the sorted support: Σw, Σwx, Σwx².
    let mut sw = vec![0.0; n + 1];
    let mut sx = vec![0.0; n + 1];
    let mut sxx = vec![0.0; n + 1];
    for (t, &i) in order.iter().enumerate() {
        sw[t + 1] = sw[t] + weights[i];
        sx[t + 1] = sx[t] + weights[i] * atoms[i];
        sxx[t + 1] = sxx[t] + weights[i] * atoms[i] * atoms[i];
    }
    // Weighted within-cluster squared error of sorted range [a, b).
    let cell_cost = |a: usize, b: usize| -> f64 {
        let w = sw[b] - sw[a];
        if w <= 0.0 {
            return 0.0;
        }
        let mean = (sx[b] - sx[a]) / w;
        ((sxx[b] - sxx[a]) - w * mean * mean).max(0.0)
    };

    let k = m.min(n);
    let mut dp = vec![vec![f64::INFINITY; n + 1]; k + 1];
    let mut cut = vec![vec![0usize; n + 1]; k + 1];
    dp[0][0] = 0.0;
    for c in 1..=k {
        for b in c..=n {
            for a in (c - 1)..b {
                let v = dp[c - 1][a] + cell_cost(a, b);
                if v < dp[c][b] {
                    dp[c][b] = v;
                    cut[c][b] = a;
                }
            }
        }
    }
    // Fewer clusters can never win under squared error, but pick the best
    // feasible count anyway for robustness.
    let mut best_c = k;
    for c in 1..=k {
        if dp[c][n] < dp[best_c][n] {
            best_c = c;
        }
    }
    let mut bounds = vec![n];
    let mut b = n;
    for c in (1..=best_c).rev() {
        b = cut[c][b];
        bounds.push(b);
    }
    bounds.reverse();
    let codebook: Vec<f64> = bounds
        .windows(2)
        .map(|w| (sx[w[1]] - sx[w[0]]) / (sw[w[1]] - sw[w[0]]))
        .collect();
    build_quantizer(p_x, codebook)
}

/// Minimizes W(P_X, Q) over distributions Q with at most M support
/// points. The alternation is Lloyd's, and at convergence the induced Q
/// is certified against the exact transport solver.
pub fn extremal_emd_quantizer(
    p_x: &DiscreteDistribution,
    m: usize,
    restarts: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<Quantizer> {
    let q = lloyd_max_restarts(p_x, m, restarts, seed, tol, max_iter)?;
    let cost = emd_of_induced(p_x, &q)?;
    if (cost - q.distortion).abs() > EMD_CERT_TOL {
        return Err(Error::CertificationFailed(format!(
            "EMD of induced Q is {cost} but quantizer distortion is {}",
            q.distortion
        )));
    }
    Ok(q)
}

/// Certified Kantorovich cost between the source and the induced Q of a
/// quantizer, under squared error between source atoms and codebook.
pub fn emd_of_induced(p_x: &DiscreteDistribution, q: &Quantizer) -> Result<f64> {
    let atoms = atoms_of(p_x)?;
    let d = squared_error_matrix(atoms, &q.codebook)?;
    Ok(emd(p_x, &q.induced_q, &d)?.cost)
}
