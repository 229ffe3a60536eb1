//! Brute-force ground truth for small `n`.
//!
//! Everything here is computed by summing over all partitions of `n` (or all
//! `n!` permutations) with the partition weight
//! `∏_j (θ_j / j)^{r_j} / r_j!`. No summation code is shared with the
//! recursion-based modules.

use std::collections::BTreeMap;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::exact_dist::{JointPMF, LengthPMF};
use crate::weights::WeightSequence;

pub const MAX_PARTITION_N: usize = 30;
pub const MAX_JOINT_N: usize = 10;
pub const MAX_PERMUTATION_N: usize = 7;

/// Occupation numbers `j ↦ r_j` (only nonzero entries).
pub type Occupation = BTreeMap<usize, usize>;

fn cap(what: &'static str, n: usize, max: usize) -> Result<()> {
    if n > max {
        Err(Error::CapExceeded { what, n, cap: max })
    } else {
        Ok(())
    }
}

/// Partitions of `n` as non-increasing part lists, in reverse lexicographic
/// order starting from `[n]`.
#[derive(Debug, Clone)]
pub struct Partitions {
    next: Option<Vec<usize>>,
}

impl Iterator for Partitions {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        // rightmost part larger than 1
        if let Some(i) = current.iter().rposition(|&p| p > 1) {
            let mut succ = current[..i].to_vec();
            let x = current[i] - 1;
            let mut rest = current.len() - i;
            succ.push(x);
            while rest >= x {
                succ.push(x);
                rest -= x;
            }
            if rest > 0 {
                succ.push(rest);
            }
            self.next = Some(succ);
        }
        Some(current)
    }
}

pub fn partitions(n: usize) -> Result<Partitions> {
    if n == 0 {
        return Err(Error::Config("partitions of 0 are not enumerated".into()));
    }
    cap("partition enumeration", n, MAX_PARTITION_N)?;
    Ok(Partitions {
        next: Some(vec![n]),
    })
}

pub fn occupation(parts: &[usize]) -> Occupation {
    let mut r = Occupation::new();
    for &p in parts {
        *r.entry(p).or_insert(0) += 1;
    }
    r
}

/// Every partition of `n` as occupation numbers.
pub fn enumerate_partitions(n: usize) -> Result<impl Iterator<Item = Occupation>> {
    Ok(partitions(n)?.map(|p| occupation(&p)))
}

fn ln_fact(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// `Σ_j [r_j (log θ_j - log j) - log r_j!]`; `-inf` if a part is unsupported.
pub fn partition_log_weight(w: &WeightSequence, r: &Occupation) -> f64 {
    let mut total = 0.0;
    for (&j, &rj) in r {
        let lt = w.log_theta(j);
        if lt == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += rj as f64 * (lt - (j as f64).ln()) - ln_fact(rj);
    }
    total
}

/// Partition law with its log-normalizer.
struct Law {
    log_hn: f64,
    items: Vec<(Occupation, f64)>,
}

fn law(w: &WeightSequence, n: usize) -> Result<Law> {
    let weighted: Vec<(Occupation, f64)> = enumerate_partitions(n)?
        .map(|r| {
            let lw = partition_log_weight(w, &r);
            (r, lw)
        })
        .filter(|(_, lw)| *lw > f64::NEG_INFINITY)
        .collect();
    let max = weighted
        .iter()
        .map(|(_, lw)| *lw)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(Law {
            log_hn: f64::NEG_INFINITY,
            items: Vec::new(),
        });
    }
    let scaled: f64 = weighted.iter().map(|(_, lw)| (lw - max).exp()).sum();
    let log_hn = max + scaled.ln();
    let items = weighted
        .into_iter()
        .map(|(r, lw)| (r, (lw - log_hn).exp()))
        .collect();
    Ok(Law { log_hn, items })
}

fn defined_law(w: &WeightSequence, n: usize) -> Result<Law> {
    let l = law(w, n)?;
    if l.items.is_empty() {
        Err(Error::UndefinedModel { n })
    } else {
        Ok(l)
    }
}

/// `log h_n` as a sum over partitions (`h_0 = 1`).
pub fn oracle_hn(w: &WeightSequence, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    Ok(law(w, n)?.log_hn)
}

/// Cycle-type law: `(r, P(r))` for every partition with positive weight.
pub fn oracle_cycle_type_law(w: &WeightSequence, n: usize) -> Result<Vec<(Occupation, f64)>> {
    Ok(defined_law(w, n)?.items)
}

/// `P(ℓ_1 = j) = Σ_λ P(λ) j r_j / n`.
pub fn oracle_ell1_pmf(w: &WeightSequence, n: usize) -> Result<LengthPMF> {
    let l = defined_law(w, n)?;
    let mut p = vec![0.0; n + 1];
    for (r, pr) in &l.items {
        for (&j, &rj) in r {
            p[j] += pr * (j * rj) as f64 / n as f64;
        }
    }
    let log_p = p
        .iter()
        .map(|x| if *x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
        .collect();
    Ok(LengthPMF::from_log_p(n, log_p))
}

/// Pair law by counting ordered index pairs within each partition.
pub fn oracle_joint(w: &WeightSequence, n: usize) -> Result<JointPMF> {
    cap("oracle pair law", n, MAX_JOINT_N)?;
    if n < 2 {
        return Err(Error::Config("pair law needs n ≥ 2".into()));
    }
    let l = defined_law(w, n)?;
    let pairs = (n * (n - 1)) as f64;
    let mut out = JointPMF::zeros(n);
    for (r, pr) in &l.items {
        for (&j, &rj) in r {
            *out.same_mut(j) += pr * (j * rj * (j - 1)) as f64 / pairs;
            for (&k, &rk) in r {
                let count = if k == j {
                    j * rj * j * (rj - 1)
                } else {
                    j * rj * k * rk
                };
                if count > 0 {
                    *out.diff_mut(j, k) += pr * count as f64 / pairs;
                }
            }
        }
    }
    Ok(out)
}

/// `E r_k = Σ_λ P(λ) r_k`.
pub fn oracle_erk(w: &WeightSequence, n: usize, k: usize) -> Result<f64> {
    let l = defined_law(w, n)?;
    Ok(l.items
        .iter()
        .map(|(r, pr)| pr * r.get(&k).copied().unwrap_or(0) as f64)
        .sum())
}

/// Cycle type of a permutation given as an image vector on `0..n`.
pub fn cycle_type_of(perm: &[usize]) -> Occupation {
    let mut seen = vec![false; perm.len()];
    let mut r = Occupation::new();
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
            len += 1;
        }
        *r.entry(len).or_insert(0) += 1;
    }
    r
}

#[derive(Debug, Clone)]
pub struct PermutationCheck {
    pub agrees: bool,
    /// `(1/n!) Σ_π ∏_j θ_j^{r_j(π)}`, which must equal `h_n`.
    pub hn_from_permutations: f64,
    pub max_rel_error: f64,
}

/// Sums `∏ θ_j^{r_j(π)}` over all `n!` permutations, groups by cycle type,
/// and compares each group with `n! ∏ (θ_j/j)^{r_j} / r_j!`.
pub fn oracle_permutation_check(w: &WeightSequence, n: usize) -> Result<PermutationCheck> {
    cap("permutation enumeration", n, MAX_PERMUTATION_N)?;
    if n == 0 {
        return Err(Error::Config("n must be ≥ 1".into()));
    }
    let mut by_type: BTreeMap<Vec<(usize, usize)>, f64> = BTreeMap::new();
    let mut total = 0.0;
    for perm in (0..n).permutations(n) {
        let r = cycle_type_of(&perm);
        let weight: f64 = r
            .iter()
            .map(|(&j, &rj)| w.theta(j).powi(rj as i32))
            .product();
        total += weight;
        *by_type.entry(r.into_iter().collect()).or_insert(0.0) += weight;
    }
    let n_fact: f64 = (1..=n).map(|i| i as f64).product();
    let mut max_rel: f64 = 0.0;
    for parts in partitions(n)? {
        let r = occupation(&parts);
        let formula = n_fact * partition_log_weight(w, &r).exp();
        let counted = by_type
            .get(&r.clone().into_iter().collect::<Vec<_>>())
            .copied()
            .unwrap_or(0.0);
        let scale = formula.abs().max(counted.abs());
        if scale > 0.0 {
            max_rel = max_rel.max((formula - counted).abs() / scale);
        }
    }
    let hn = total / n_fact;
    let from_partitions = oracle_hn(w, n)?.exp();
    let hn_scale = hn.max(from_partitions);
    if hn_scale > 0.0 {
        max_rel = max_rel.max((hn - from_partitions).abs() / hn_scale);
    }
    Ok(PermutationCheck {
        agrees: max_rel <= 1e-10,
        hn_from_permutations: hn,
        max_rel_error: max_rel,
    })
}
