//! Probability and distortion types shared by all solvers, plus the
//! information-theoretic primitives built on them.
//!
//! Conventions used throughout the crate:
//!
//! - All rates, entropies, and divergences are in **nats**. Conversion to
//!   bits (division by ln 2) happens only at the CLI layer.
//! - Weights below [`ZERO_WEIGHT`] are treated as exact zeros in support
//!   and KL computations, which keeps `0·ln 0` terms out of the sums.
//! - Types validate their invariants on construction; operations may then
//!   assume them. Everything is immutable after construction and safe to
//!   share between threads.

use crate::error::{Error, Result};

/// Weights at or below this value count as exact zeros for support purposes.
pub const ZERO_WEIGHT: f64 = 1e-15;

/// Absolute tolerance on Σ weights = 1 at construction.
pub const MASS_TOL: f64 = 1e-12;

/// Absolute tolerance on the total mass of a coupling.
pub const COUPLING_MASS_TOL: f64 = 1e-10;

/// A probability distribution on finitely many atoms.
///
/// Atoms carry an optional real location (needed for squared-error
/// distortion and quantization); purely categorical uses leave it out.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Option<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    /// Categorical distribution from weights alone.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        Self::validate_weights(&weights)?;
        Ok(Self {
            atoms: None,
            weights,
        })
    }

    /// Distribution with real-valued atom locations.
    pub fn with_atoms(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::LengthMismatch(atoms.len(), weights.len()));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidDistribution(
                "atoms must be finite".to_string(),
            ));
        }
        Self::validate_weights(&weights)?;
        Ok(Self {
            atoms: Some(atoms),
            weights,
        })
    }

    /// Uniform distribution on `n` categorical atoms.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("empty support".to_string()));
        }
        Self::from_weights(vec![1.0 / n as f64; n])
    }

    fn validate_weights(weights: &[f64]) -> Result<()> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty support".to_string()));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".to_string(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1 within {MASS_TOL:e}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> Option<&[f64]> {
        self.atoms.as_deref()
    }

    /// Indices with weight above [`ZERO_WEIGHT`].
    pub fn support(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.weights[i] > ZERO_WEIGHT)
            .collect()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|&&w| w > ZERO_WEIGHT)
            .map(|&w| w * w.ln())
            .sum::<f64>()
    }

    /// Mean of the atom locations; `None` for categorical distributions.
    pub fn mean(&self) -> Option<f64> {
        let atoms = self.atoms.as_ref()?;
        Some(
            atoms
                .iter()
                .zip(&self.weights)
                .map(|(a, w)| a * w)
                .sum::<f64>(),
        )
    }

    /// Variance of the atom locations; `None` for categorical distributions.
    pub fn variance(&self) -> Option<f64> {
        let atoms = self.atoms.as_ref()?;
        let mu = self.mean()?;
        Some(
            atoms
                .iter()
                .zip(&self.weights)
                .map(|(a, w)| w * (a - mu) * (a - mu))
                .sum::<f64>(),
        )
    }
}

/// Dense n×m matrix of nonnegative distortion values d(x_i, y_j).
///
/// Entries may be `+inf` (used by the capacity solver to encode forbidden
/// transitions); the exact-transport solver rejects such matrices. The
/// [`DistortionMatrix::new_signed`] constructor additionally admits
/// negative entries for log-likelihood-ratio costs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMatrix {
    entries: Vec<Vec<f64>>,
}

impl DistortionMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        if entries.is_empty() || entries[0].is_empty() {
            return Err(Error::InvalidMatrix("empty matrix".to_string()));
        }
        let m = entries[0].len();
        for row in &entries {
            if row.len() != m {
                return Err(Error::InvalidMatrix("ragged rows".to_string()));
            }
            if row.iter().any(|&d| d.is_nan() || d < 0.0) {
                return Err(Error::InvalidMatrix(
                    "entries must be nonnegative".to_string(),
                ));
            }
        }
        Ok(Self { entries })
    }

    /// Like [`DistortionMatrix::new`] but admits negative finite entries.
    ///
    /// Genuine distortions are nonnegative; signed costs arise only from
    /// log-likelihood-ratio constructions (see the capacity solver), and
    /// the entropic solver is indifferent to the sign.
    pub fn new_signed(entries: Vec<Vec<f64>>) -> Result<Self> {
        if entries.is_empty() || entries[0].is_empty() {
            return Err(Error::InvalidMatrix("empty matrix".to_string()));
        }
        let m = entries[0].len();
        for row in &entries {
            if row.len() != m {
                return Err(Error::InvalidMatrix("ragged rows".to_string()));
            }
            if row.iter().any(|&d| d.is_nan() || d == f64::NEG_INFINITY) {
                return Err(Error::InvalidMatrix(
                    "entries must not be NaN or -inf".to_string(),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn nrows(&self) -> usize {
        self.entries.len()
    }

    pub fn ncols(&self) -> usize {
        self.entries[0].len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn has_infinite_entries(&self) -> bool {
        self.entries
            .iter()
            .any(|row| row.iter().any(|d| d.is_infinite()))
    }
}

/// Squared-error distortion d(x, y) = (x − y)².
pub fn squared_error_matrix(x_atoms: &[f64], y_atoms: &[f64]) -> Result<DistortionMatrix> {
    if x_atoms.is_empty() || y_atoms.is_empty() {
        return Err(Error::InvalidArgument("empty atom list".to_string()));
    }
    let entries = x_atoms
        .iter()
        .map(|&x| y_atoms.iter().map(|&y| (x - y) * (x - y)).collect())
        .collect();
    DistortionMatrix::new(entries)
}

/// Hamming distortion: 0 on the diagonal, 1 elsewhere.
pub fn hamming_matrix(n: usize, m: usize) -> Result<DistortionMatrix> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("empty alphabet".to_string()));
    }
    let entries = (0..n)
        .map(|i| (0..m).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
        .collect();
    DistortionMatrix::new(entries)
}

/// A joint probability matrix, optionally checked against prescribed
/// marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    entries: Vec<Vec<f64>>,
}

/// Per-entry tolerance when checking a coupling against prescribed marginals.
pub const MARGINAL_TOL: f64 = 1e-8;

impl Coupling {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        if entries.is_empty() || entries[0].is_empty() {
            return Err(Error::InvalidMatrix("empty coupling".to_string()));
        }
        let m = entries[0].len();
        let mut total = 0.0;
        for row in &entries {
            if row.len() != m {
                return Err(Error::InvalidMatrix("ragged rows".to_string()));
            }
            for &p in row {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidMatrix(
                        "coupling entries must be finite and nonnegative".to_string(),
                    ));
                }
                total += p;
            }
        }
        if (total - 1.0).abs() > COUPLING_MASS_TOL {
            return Err(Error::InvalidMatrix(format!(
                "total mass {total}, expected 1 within {COUPLING_MASS_TOL:e}"
            )));
        }
        Ok(Self { entries })
    }

    /// Construct and verify both marginals to [`MARGINAL_TOL`] per entry.
    pub fn with_marginals(
        entries: Vec<Vec<f64>>,
        mu: &DiscreteDistribution,
        nu: &DiscreteDistribution,
    ) -> Result<Self> {
        let c = Self::new(entries)?;
        if c.nrows() != mu.len() || c.ncols() != nu.len() {
            return Err(Error::ShapeMismatch {
                expected: (mu.len(), nu.len()),
                got: (c.nrows(), c.ncols()),
            });
        }
        let rows = c.row_marginal();
        let cols = c.col_marginal();
        for (i, (&r, &w)) in rows.iter().zip(mu.weights()).enumerate() {
            if (r - w).abs() > MARGINAL_TOL {
                return Err(Error::InvalidMatrix(format!(
                    "row marginal {i}: {r} vs prescribed {w}"
                )));
            }
        }
        for (j, (&cv, &w)) in cols.iter().zip(nu.weights()).enumerate() {
            if (cv - w).abs() > MARGINAL_TOL {
                return Err(Error::InvalidMatrix(format!(
                    "column marginal {j}: {cv} vs prescribed {w}"
                )));
            }
        }
        Ok(c)
    }

    pub fn nrows(&self) -> usize {
        self.entries.len()
    }

    pub fn ncols(&self) -> usize {
        self.entries[0].len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.entries.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut cols = vec![0.0; self.ncols()];
        for row in &self.entries {
            for (c, &p) in cols.iter_mut().zip(row) {
                *c += p;
            }
        }
        cols
    }
}

/// One point of a rate-distortion sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RDPoint {
    /// Lagrange multiplier that produced this point (1/distortion-unit).
    pub lambda: f64,
    /// Rate in nats.
    pub rate_nats: f64,
    /// Expected distortion.
    pub distortion: f64,
}

impl RDPoint {
    pub fn new(lambda: f64, rate_nats: f64, distortion: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if rate_nats < -0.0 || !rate_nats.is_finite() || distortion < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rate {rate_nats} and distortion {distortion} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            lambda,
            rate_nats,
            distortion,
        })
    }
}

/// Slack allowed when checking that rate is non-increasing in distortion
/// along a curve; absorbs solver noise near the curve's flat ends.
pub const CURVE_MONOTONE_SLACK: f64 = 1e-6;

/// A rate-distortion curve: points sorted by ascending distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct RDCurve {
    points: Vec<RDPoint>,
}

impl RDCurve {
    /// Sorts the points by distortion. Fails on empty input.
    pub fn new(mut points: Vec<RDPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty curve".to_string()));
        }
        points.sort_by(|a, b| a.distortion.total_cmp(&b.distortion));
        Ok(Self { points })
    }

    pub fn points(&self) -> &[RDPoint] {
        &self.points
    }

    /// True when rate is non-increasing in distortion within `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].rate_nats <= w[0].rate_nats + slack)
    }
}

/// KL divergence Σ p_i ln(p_i/q_i) in nats.
///
/// Returns `+inf` when p puts mass where q does not; `0·ln(0/q) = 0`.
pub fn kl_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    let mut sum = 0.0;
    for (&pi, &qi) in p.weights().iter().zip(q.weights()) {
        if pi <= ZERO_WEIGHT {
            continue;
        }
        if qi <= ZERO_WEIGHT {
            return Ok(f64::INFINITY);
        }
        sum += pi * (pi / qi).ln();
    }
    Ok(sum)
}

/// Mutual information of a coupling: KL against the product of its own
/// marginals, in nats.
pub fn mutual_information(pi: &Coupling) -> f64 {
    let rows = pi.row_marginal();
    let cols = pi.col_marginal();
    let mut sum = 0.0;
    for (i, row) in pi.rows().iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > ZERO_WEIGHT {
                sum += p * (p / (rows[i] * cols[j])).ln();
            }
        }
    }
    sum.max(0.0)
}

/// Σ_{ij} π_ij d_ij. Entries of π below [`ZERO_WEIGHT`] are skipped so that
/// zero mass on an infinite-cost cell contributes nothing.
pub fn expected_distortion(pi: &Coupling, d: &DistortionMatrix) -> Result<f64> {
    if pi.nrows() != d.nrows() || pi.ncols() != d.ncols() {
        return Err(Error::ShapeMismatch {
            expected: (d.nrows(), d.ncols()),
            got: (pi.nrows(), pi.ncols()),
        });
    }
    let mut sum = 0.0;
    for (prow, drow) in pi.rows().iter().zip(d.rows()) {
        for (&p, &dv) in prow.iter().zip(drow) {
            if p > ZERO_WEIGHT {
                sum += p * dv;
            }
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn squared_error_examples() {
        let d = squared_error_matrix(&[0.0], &[0.0]).unwrap();
        assert_eq!(d.rows(), &[vec![0.0]]);

        let d = squared_error_matrix(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(d.rows(), &[vec![0.0, 1.0], vec![1.0, 0.0]]);

        let d = squared_error_matrix(&[0.0, 2.0], &[1.0]).unwrap();
        assert_eq!(d.rows(), &[vec![1.0], vec![1.0]]);
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(
            hamming_matrix(2, 2).unwrap().rows(),
            &[vec![0.0, 1.0], vec![1.0, 0.0]]
        );
        assert_eq!(hamming_matrix(1, 1).unwrap().rows(), &[vec![0.0]]);
        assert_eq!(
            hamming_matrix(2, 3).unwrap().rows(),
            &[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0]]
        );
    }

    #[test]
    fn kl_examples() {
        let half = DiscreteDistribution::from_weights(vec![0.5, 0.5]).unwrap();
        assert_eq!(kl_divergence(&half, &half).unwrap(), 0.0);

        let q = DiscreteDistribution::from_weights(vec![0.25, 0.75]).unwrap();
        // Direct summation: 0.5 ln 2 + 0.5 ln(2/3).
        let expected = 0.5 * 2.0f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl_divergence(&half, &q).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.143841).abs() < 1e-6);

        let p = DiscreteDistribution::from_weights(vec![1.0, 0.0]).unwrap();
        let q = DiscreteDistribution::from_weights(vec![0.0, 1.0]).unwrap();
        assert_eq!(kl_divergence(&p, &q).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kl_length_mismatch_is_an_error() {
        let p = DiscreteDistribution::from_weights(vec![1.0]).unwrap();
        let q = DiscreteDistribution::from_weights(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            kl_divergence(&p, &q),
            Err(Error::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn mutual_information_examples() {
        // Product coupling: independent, zero information.
        let pi = Coupling::new(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        assert!(mutual_information(&pi).abs() < 1e-15);

        // Diagonal coupling: one full bit (ln 2 nats). Direct summation:
        // 2 · 0.5 ln(0.5/0.25) = ln 2.
        let pi = Coupling::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((mutual_information(&pi) - 2.0f64.ln()).abs() < 1e-15);

        // Outer product of asymmetric marginals is still independent.
        let pi = Coupling::new(vec![vec![0.06, 0.24], vec![0.14, 0.56]]).unwrap();
        assert!(mutual_information(&pi).abs() < 1e-12);
    }

    #[test]
    fn expected_distortion_examples() {
        let pi = Coupling::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let zero = DistortionMatrix::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(expected_distortion(&pi, &zero).unwrap(), 0.0);

        let pi1 = Coupling::new(vec![vec![1.0]]).unwrap();
        let d1 = DistortionMatrix::new(vec![vec![3.5]]).unwrap();
        assert_eq!(expected_distortion(&pi1, &d1).unwrap(), 3.5);

        let ham = hamming_matrix(2, 2).unwrap();
        assert_eq!(expected_distortion(&pi, &ham).unwrap(), 0.0);

        assert!(expected_distortion(&pi1, &ham).is_err());
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        assert!(DiscreteDistribution::from_weights(vec![0.5, 0.4]).is_err());
        assert!(DiscreteDistribution::from_weights(vec![-0.1, 1.1]).is_err());
        assert!(DiscreteDistribution::with_atoms(vec![0.0], vec![0.5, 0.5]).is_err());
        assert!(DistortionMatrix::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(DistortionMatrix::new(vec![vec![-1.0]]).is_err());
        assert!(Coupling::new(vec![vec![0.5, 0.1], vec![0.1, 0.1]]).is_err());
    }

    #[test]
    fn coupling_marginal_check() {
        let mu = DiscreteDistribution::from_weights(vec![0.4, 0.6]).unwrap();
        let nu = DiscreteDistribution::from_weights(vec![0.5, 0.5]).unwrap();
        let ok = Coupling::with_marginals(vec![vec![0.4, 0.0], vec![0.1, 0.5]], &mu, &nu);
        assert!(ok.is_ok());
        let bad = Coupling::with_marginals(vec![vec![0.4, 0.0], vec![0.2, 0.4]], &mu, &nu);
        assert!(bad.is_err());
    }

    #[test]
    fn curve_sorts_and_checks_monotonicity() {
        let pts = vec![
            RDPoint::new(2.0, 0.2, 0.3).unwrap(),
            RDPoint::new(10.0, 0.9, 0.05).unwrap(),
            RDPoint::new(5.0, 0.5, 0.1).unwrap(),
        ];
        let curve = RDCurve::new(pts).unwrap();
        let ds: Vec<f64> = curve.points().iter().map(|p| p.distortion).collect();
        assert_eq!(ds, vec![0.05, 0.1, 0.3]);
        assert!(curve.is_monotone(CURVE_MONOTONE_SLACK));

        let bad = RDCurve::new(vec![
            RDPoint::new(1.0, 0.1, 0.1).unwrap(),
            RDPoint::new(1.0, 0.5, 0.2).unwrap(),
        ])
        .unwrap();
        assert!(!bad.is_monotone(CURVE_MONOTONE_SLACK));
    }

    fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e-6f64..10.0, len).prop_map(move |mut v| {
            let s: f64 = v.iter().sum();
            for x in v.iter_mut() {
                *x /= s;
            }
            // Nudge the last entry so the sum is exactly 1 up to rounding.
            let s: f64 = v.iter().take(len - 1).sum();
            v[len - 1] = 1.0 - s;
            v
        })
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_iff_equal(p in simplex(4), q in simplex(4)) {
            let dp = DiscreteDistribution::from_weights(p.clone()).unwrap();
            let dq = DiscreteDistribution::from_weights(q.clone()).unwrap();
            let kl = kl_divergence(&dp, &dq).unwrap();
            prop_assert!(kl >= -1e-15);
            let self_kl = kl_divergence(&dp, &dp).unwrap();
            prop_assert!(self_kl.abs() <= 1e-12);
            if p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-9) {
                prop_assert!(kl > 0.0);
            }
        }

        #[test]
        fn mi_bounded_by_marginal_entropies(raw in prop::collection::vec(1e-3f64..1.0, 12)) {
            let total: f64 = raw.iter().sum();
            let entries: Vec<Vec<f64>> = raw
                .chunks(4)
                .map(|c| c.iter().map(|x| x / total).collect())
                .collect();
            let pi = Coupling::new(entries).unwrap();
            let hr = DiscreteDistribution::from_weights(pi.row_marginal())
                .unwrap()
                .entropy();
            let hc = DiscreteDistribution::from_weights(pi.col_marginal())
                .unwrap()
                .entropy();
            prop_assert!(mutual_information(&pi) <= hr.min(hc) + 1e-10);
        }

        #[test]
        fn squared_error_symmetric_on_shared_atoms(atoms in prop::collection::vec(-5.0f64..5.0, 5)) {
            let d = squared_error_matrix(&atoms, &atoms).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                }
            }
        }
    }
}
