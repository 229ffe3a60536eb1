//! Exact sampling of cycle types and permutations.
//!
//! A cycle type is drawn by repeatedly drawing the length `j` of the cycle
//! through the smallest remaining index with probability
//! `θ_j h_{m-j} / (m h_m)` (`m` = indices left), then removing that cycle.
//! Conditionally on the first cycle, the remaining `m - j` indices carry the
//! same model at size `m - j`, so the product of these steps telescopes to the
//! cycle-type law.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::normalization::{NormTable, TruncationPolicy};
use crate::weights::WeightSequence;

/// Occupation numbers of a permutation of `n` elements.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CycleType {
    n: usize,
    r: BTreeMap<usize, usize>,
}

impl CycleType {
    /// Errors unless `Σ j r_j = n` and no `j` is zero.
    pub fn new(r: BTreeMap<usize, usize>) -> Result<Self> {
        if r.contains_key(&0) {
            return Err(Error::Config("cycle length 0".into()));
        }
        let r: BTreeMap<usize, usize> = r.into_iter().filter(|(_, c)| *c > 0).collect();
        let n = r.iter().map(|(j, c)| j * c).sum();
        Ok(CycleType { n, r })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self, j: usize) -> usize {
        self.r.get(&j).copied().unwrap_or(0)
    }

    pub fn occupation(&self) -> &BTreeMap<usize, usize> {
        &self.r
    }

    /// Cycle lengths, non-increasing.
    pub fn parts(&self) -> Vec<usize> {
        self.r
            .iter()
            .rev()
            .flat_map(|(&j, &c)| std::iter::repeat_n(j, c))
            .collect()
    }
}

impl fmt::Display for CycleType {
    /// `j:r_j` pairs sorted by `j`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.r.iter().map(|(j, c)| format!("{j}:{c}")).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Seed and stream selector for a reproducible ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSource {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RandomSource { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Precomputed state for repeated draws at sizes up to the table length.
pub struct CycleSampler<'a> {
    table: &'a NormTable,
    log_theta: Vec<f64>,
    support: Vec<usize>,
    drop: Option<f64>,
    weights: Vec<f64>,
}

impl<'a> CycleSampler<'a> {
    pub fn new(table: &'a NormTable, w: &WeightSequence) -> Result<Self> {
        if table.weights_id() != w.descriptor() {
            return Err(Error::Config(
                "table was built from different weights".into(),
            ));
        }
        let log_theta = w.log_theta_vec(table.n_max());
        let support = (1..=table.n_max())
            .filter(|&j| log_theta[j] > f64::NEG_INFINITY)
            .collect();
        let drop = match table.policy() {
            TruncationPolicy::Full => None,
            TruncationPolicy::Adaptive { drop_threshold } => Some(drop_threshold),
        };
        Ok(CycleSampler {
            table,
            log_theta,
            support,
            drop,
            weights: Vec::new(),
        })
    }

    /// Draws the length of the cycle through the first of `m` indices.
    pub fn draw_length<R: Rng + ?Sized>(&mut self, m: usize, rng: &mut R) -> usize {
        let lh = self.table.log_h_slice();
        // window of candidate lengths with their log weights
        let mut best = f64::NEG_INFINITY;
        let mut argmax = 0;
        let mut cand: Vec<(usize, f64)> = Vec::new();
        for &j in self.support.iter().take_while(|&&j| j <= m) {
            let x = self.log_theta[j] + lh[m - j];
            if x == f64::NEG_INFINITY {
                continue;
            }
            if x > best {
                best = x;
                argmax = j;
            }
            cand.push((j, x));
            if let Some(thr) = self.drop {
                if j > argmax && x < best - thr {
                    break;
                }
            }
        }
        self.weights.clear();
        let mut total = 0.0;
        for &(_, x) in &cand {
            total += (x - best).exp();
            self.weights.push(total);
        }
        let u = rng.random::<f64>() * total;
        let i = self
            .weights
            .partition_point(|&c| c <= u)
            .min(cand.len() - 1);
        cand[i].0
    }

    /// One cycle type at size `n`; the first drawn length is `ℓ_1`.
    pub fn sample_with_first<R: Rng + ?Sized>(
        &mut self,
        n: usize,
        rng: &mut R,
    ) -> Result<(CycleType, usize)> {
        self.table.require_positive(n)?;
        let mut r = BTreeMap::new();
        let mut m = n;
        let mut first = 0;
        while m > 0 {
            let j = self.draw_length(m, rng);
            if first == 0 {
                first = j;
            }
            *r.entry(j).or_insert(0) += 1;
            m -= j;
        }
        Ok((CycleType { n, r }, first))
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> Result<CycleType> {
        Ok(self.sample_with_first(n, rng)?.0)
    }
}

/// Draws one cycle type at size `n` from the stream `source`.
pub fn sample_cycle_type(
    t: &NormTable,
    w: &WeightSequence,
    n: usize,
    source: RandomSource,
) -> Result<CycleType> {
    let mut s = CycleSampler::new(t, w)?;
    s.sample(n, &mut source.rng())
}

/// Samples per stream in [`sample_many`]; fixed so output does not depend on
/// the thread count.
pub const CHUNK: usize = 4096;

/// `count` cycle types with their `ℓ_1`. Chunk `i` of [`CHUNK`] draws uses
/// stream `i` of `seed`; chunks run in parallel and are concatenated in order.
pub fn sample_many(
    t: &NormTable,
    w: &WeightSequence,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(CycleType, usize)>> {
    t.require_positive(n)?;
    CycleSampler::new(t, w)?;
    let chunks = count.div_ceil(CHUNK);
    let parts: Result<Vec<Vec<(CycleType, usize)>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = CycleSampler::new(t, w)?;
            let mut rng = RandomSource::new(seed, c as u64).rng();
            let len = CHUNK.min(count - c * CHUNK);
            (0..len).map(|_| s.sample_with_first(n, &mut rng)).collect()
        })
        .collect();
    Ok(parts?.into_iter().flatten().collect())
}

/// Uniformly random permutation (images of `0..n`) with cycle type `ct`:
/// a uniform arrangement of the indices cut into consecutive cycles.
pub fn realize_permutation<R: Rng + ?Sized>(ct: &CycleType, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ct.n).collect();
    order.shuffle(rng);
    let mut perm = vec![0; ct.n];
    let mut start = 0;
    for len in ct.parts() {
        let cycle = &order[start..start + len];
        for i in 0..len {
            perm[cycle[i]] = cycle[(i + 1) % len];
        }
        start += len;
    }
    perm
}

/// Total variation between the empirical law of `samples` and `exact`.
/// Keys missing from `exact` have probability zero.
pub fn empirical_tv<K: Ord + Clone>(samples: &[K], exact: &BTreeMap<K, f64>) -> f64 {
    assert!(
        !samples.is_empty(),
        "empirical law needs at least one sample"
    );
    let mut counts: BTreeMap<K, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.clone()).or_insert(0) += 1;
    }
    let total = samples.len() as f64;
    let mut l1 = 0.0;
    for (k, p) in exact {
        let q = counts.get(k).copied().unwrap_or(0) as f64 / total;
        l1 += (q - p).abs();
    }
    for (k, c) in &counts {
        if !exact.contains_key(k) {
            l1 += *c as f64 / total;
        }
    }
    0.5 * l1
}

#[derive(Debug, Clone, Copy)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit; adjacent categories (in key order) are pooled
/// until each has expected count ≥ 5.
pub fn chi_square_gof<K: Ord + Clone>(samples: &[K], exact: &BTreeMap<K, f64>) -> ChiSquareResult {
    let mut counts: BTreeMap<K, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.clone()).or_insert(0) += 1;
    }
    let total = samples.len() as f64;
    let mut stat = 0.0;
    let mut bins = 0usize;
    let (mut obs, mut exp) = (0.0, 0.0);
    for (k, p) in exact {
        obs += counts.get(k).copied().unwrap_or(0) as f64;
        exp += p * total;
        if exp >= 5.0 {
            stat += (obs - exp) * (obs - exp) / exp;
            bins += 1;
            obs = 0.0;
            exp = 0.0;
        }
    }
    // leftover mass and keys outside the exact support
    let outside: usize = counts
        .iter()
        .filter(|(k, _)| !exact.contains_key(*k))
        .map(|(_, c)| c)
        .sum();
    obs += outside as f64;
    if exp > 0.0 {
        stat += (obs - exp) * (obs - exp) / exp;
        bins += 1;
    } else if obs > 0.0 {
        stat = f64::INFINITY;
    }
    let dof = bins.saturating_sub(1);
    let p_value = if stat.is_infinite() {
        0.0
    } else if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("dof > 0").cdf(stat)
    };
    ChiSquareResult {
        statistic: stat,
        dof,
        p_value,
    }
}
