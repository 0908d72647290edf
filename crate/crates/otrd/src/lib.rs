//! Discrete rate-distortion, optimal transport, and scalar quantization.
//!
//! The crate computes Shannon rate-distortion curves for finite discrete
//! sources by two independent routes and lets you check them against each
//! other:
//!
//! - [`blahut_arimoto`]: the classical alternating-minimization solver for
//!   R(D) at a fixed Lagrange multiplier, plus Arimoto's capacity algorithm.
//! - [`sinkhorn_rd`]: the same curve obtained as an extremal entropic
//!   optimal-transport problem, minimizing the Sinkhorn value over the
//!   output marginal with mirror descent on the simplex.
//!
//! Supporting machinery:
//!
//! - [`measures`]: probability distributions, distortion matrices,
//!   couplings, and information-theoretic primitives. All rates and
//!   divergences are in nats.
//! - [`exact_ot`]: exact Kantorovich transport (Earth Mover's Distance)
//!   via min-cost flow, with dual optimality certificates.
//! - [`sinkhorn`]: log-domain stabilized Sinkhorn iterations for
//!   entropy-regularized transport.
//! - [`quantizer`]: M-level scalar quantizer design by Lloyd-Max,
//!   exact 1-D dynamic programming, and extremal-EMD alternation.
//! - [`capacity_ot`]: an experimental channel-capacity solver built on
//!   entropic transport, cross-checked against Arimoto.
//! - [`fixtures`]: the built-in sources and channels used by the
//!   reproduction experiments and the CLI.

pub mod blahut_arimoto;
pub mod capacity_ot;
mod error;
pub mod exact_ot;
pub mod fixtures;
pub mod measures;
pub(crate) mod numerics;
pub mod quantizer;
pub mod sinkhorn;
pub mod sinkhorn_rd;

pub use error::{Error, Result};
