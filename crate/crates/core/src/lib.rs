//! Random permutations with cycle weights.
//!
//! A permutation `π` of `n` elements is drawn with probability proportional to
//! `∏_j θ_j^{r_j(π)}`, where `r_j(π)` counts the `j`-cycles of `π`. This crate
//! computes the exact finite-`n` quantities of that model (normalization
//! constants `h_n`, the law of the length of the cycle containing a given
//! index, pair laws, expected cycle counts), draws exact samples, and evaluates
//! the large-`n` predictions for the three weight regimes: Ewens-like weights,
//! slowly diverging `α_j = -log θ_j` (one giant cycle), and quickly diverging
//! `α_j` (cycles of logarithmic size).
//!
//! Everything is carried in log domain; `θ_j = 0` is represented by
//! `f64::NEG_INFINITY`.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod exact_dist;
pub mod logspace;
pub mod normalization;
pub mod oracle;
pub mod sampler;
pub mod weights;

pub use error::{Error, Result};
pub use exact_dist::{ell1_pmf, expected_rk, joint_pmf, tail_prob, JointPMF, LengthPMF};
pub use normalization::{build_norm_table, ewens_log_hn, NormTable, TruncationPolicy};
pub use sampler::{sample_cycle_type, CycleType, RandomSource};
pub use weights::{check_hypotheses, shift_weights, HypothesisReport, WeightSequence};
