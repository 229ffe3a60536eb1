//! Exact laws at fixed `n`: the length `ℓ_1` of the cycle containing index 1,
//! the pair `(ℓ_1, ℓ_2)`, and expected cycle counts.
//!
//! With `P(ℓ_1 = j) = θ_j h_{n-j} / (n h_n)`, exchangeability of the indices
//! gives `E r_k = n P(ℓ_1 = k) / k` and `E N_{a,b} = n P(ℓ_1 ∈ [a,b])`.

use crate::error::{Error, Result};
use crate::normalization::NormTable;
use crate::weights::WeightSequence;

/// Largest `n` for which [`joint_pmf`] materializes the pair law.
pub const JOINT_DENSE_MAX: usize = 4000;

#[derive(Debug, Clone, PartialEq)]
pub struct LengthPMF {
    n: usize,
    /// Index `j` holds `log P(ℓ_1 = j)`; index 0 is unused.
    log_p: Vec<f64>,
}

impl LengthPMF {
    pub(crate) fn from_log_p(n: usize, log_p: Vec<f64>) -> Self {
        debug_assert_eq!(log_p.len(), n + 1);
        LengthPMF { n, log_p }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_p(&self, j: usize) -> f64 {
        self.log_p.get(j).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn p(&self, j: usize) -> f64 {
        self.log_p(j).exp()
    }

    /// `(j, P(ℓ_1 = j))` for `j = 1..=n`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (1..=self.n).map(|j| (j, self.p(j)))
    }

    pub fn total(&self) -> f64 {
        self.iter().map(|(_, p)| p).sum()
    }
}

/// Integer range `[⌈a⌉, ⌊b⌋] ∩ [1, n]`, or `None` when empty.
pub fn integer_range(a: f64, b: f64, n: usize) -> Option<(usize, usize)> {
    if a.is_nan() || b.is_nan() {
        return None;
    }
    let lo = a.ceil().max(1.0);
    let hi = b.floor().min(n as f64);
    if lo > hi {
        None
    } else {
        Some((lo as usize, hi as usize))
    }
}

/// Law of the length of the cycle containing index 1.
pub fn ell1_pmf(t: &NormTable, w: &WeightSequence, n: usize) -> Result<LengthPMF> {
    t.require_positive(n)?;
    if n == 0 {
        return Err(Error::Config("ℓ_1 needs n ≥ 1".into()));
    }
    let lh = t.log_h_slice();
    let base = lh[n] + (n as f64).ln();
    let mut log_p = Vec::with_capacity(n + 1);
    log_p.push(f64::NEG_INFINITY);
    for j in 1..=n {
        let lt = w.log_theta(j);
        log_p.push(if lt == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            lt + lh[n - j] - base
        });
    }
    Ok(LengthPMF { n, log_p })
}

/// `P(ℓ_1 ∈ [a, b])` summed over the integers `⌈a⌉ ..= ⌊b⌋`.
pub fn tail_prob(p: &LengthPMF, a: f64, b: f64) -> f64 {
    match integer_range(a, b, p.n) {
        None => 0.0,
        Some((lo, hi)) => (lo..=hi).map(|j| p.p(j)).sum(),
    }
}

/// `E N_{a,b}`: expected number of indices in cycles with length in `[a, b]`.
pub fn expected_nab(p: &LengthPMF, a: f64, b: f64) -> f64 {
    p.n as f64 * tail_prob(p, a, b)
}

/// `E r_k = θ_k h_{n-k} / (k h_n)`.
pub fn expected_rk(t: &NormTable, w: &WeightSequence, n: usize, k: usize) -> Result<f64> {
    t.require_positive(n)?;
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} outside 1..={n}")));
    }
    Ok((w.log_theta(k) + t.log_h(n - k) - t.log_h(n)).exp() / k as f64)
}

/// Law of `(ℓ_1, ℓ_2)`, split by whether 1 and 2 share a cycle.
#[derive(Debug, Clone)]
pub struct JointPMF {
    n: usize,
    /// Index `j`: both indices in one `j`-cycle. Index 0 unused.
    same: Vec<f64>,
    /// Different cycles, row `j` holds `k = 1..=n-j` (triangular).
    diff: Vec<f64>,
}

impl JointPMF {
    fn offset(n: usize, j: usize) -> usize {
        (j - 1) * n - (j - 1) * j / 2
    }

    pub(crate) fn zeros(n: usize) -> Self {
        let len = if n >= 2 { Self::offset(n, n) } else { 0 };
        JointPMF {
            n,
            same: vec![0.0; n + 1],
            diff: vec![0.0; len],
        }
    }

    pub(crate) fn diff_mut(&mut self, j: usize, k: usize) -> &mut f64 {
        let i = Self::offset(self.n, j) + k - 1;
        &mut self.diff[i]
    }

    pub(crate) fn same_mut(&mut self, j: usize) -> &mut f64 {
        &mut self.same[j]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `P(ℓ_1 = j, ℓ_2 = j, 1 ~ 2)`.
    pub fn same_cycle(&self, j: usize) -> f64 {
        self.same.get(j).copied().unwrap_or(0.0)
    }

    /// `P(ℓ_1 = j, ℓ_2 = k, 1 ≁ 2)`; zero unless `j + k ≤ n`.
    pub fn diff_cycle(&self, j: usize, k: usize) -> f64 {
        if j == 0 || k == 0 || j + k > self.n {
            0.0
        } else {
            self.diff[Self::offset(self.n, j) + k - 1]
        }
    }

    /// `P(ℓ_1 = j, ℓ_2 = k)` summing both cases.
    pub fn p(&self, j: usize, k: usize) -> f64 {
        let same = if j == k { self.same_cycle(j) } else { 0.0 };
        same + self.diff_cycle(j, k)
    }

    pub fn total(&self) -> f64 {
        self.same.iter().sum::<f64>() + self.diff.iter().sum::<f64>()
    }

    /// Marginal law of `ℓ_1`.
    pub fn marginal(&self, j: usize) -> f64 {
        self.same_cycle(j)
            + (1..=self.n.saturating_sub(j))
                .map(|k| self.diff_cycle(j, k))
                .sum::<f64>()
    }
}

/// Pair law `(ℓ_1, ℓ_2)` for `2 ≤ n ≤ 4000`.
pub fn joint_pmf(t: &NormTable, w: &WeightSequence, n: usize) -> Result<JointPMF> {
    t.require_positive(n)?;
    if n < 2 {
        return Err(Error::Config("pair law needs n ≥ 2".into()));
    }
    if n > JOINT_DENSE_MAX {
        return Err(Error::CapExceeded {
            what: "dense pair law",
            n,
            cap: JOINT_DENSE_MAX,
        });
    }
    let lt = w.log_theta_vec(n);
    let lh = t.log_h_slice();
    let base = lh[n] + (n as f64 * (n - 1) as f64).ln();
    let mut out = JointPMF::zeros(n);
    for j in 1..=n {
        if lt[j] == f64::NEG_INFINITY {
            continue;
        }
        if j >= 2 {
            *out.same_mut(j) = (j - 1) as f64 * (lt[j] + lh[n - j] - base).exp();
        }
        for k in 1..=n - j {
            *out.diff_mut(j, k) = (lt[j] + lt[k] + lh[n - j - k] - base).exp();
        }
    }
    Ok(out)
}

/// `P(ℓ_1 ∈ [a,b], ℓ_2 ∈ [c,d])` by direct summation, without materializing
/// the pair law. Endpoints follow the ceil/floor convention.
pub fn joint_range_prob(
    t: &NormTable,
    w: &WeightSequence,
    n: usize,
    (a, b): (f64, f64),
    (c, d): (f64, f64),
) -> Result<f64> {
    t.require_positive(n)?;
    if n < 2 {
        return Err(Error::Config("pair law needs n ≥ 2".into()));
    }
    let (Some((j0, j1)), Some((k0, k1))) = (integer_range(a, b, n), integer_range(c, d, n)) else {
        return Ok(0.0);
    };
    let lt = w.log_theta_vec(n);
    let lh = t.log_h_slice();
    let base = lh[n] + (n as f64 * (n - 1) as f64).ln();
    let mut total = 0.0;
    for j in j0..=j1 {
        if lt[j] == f64::NEG_INFINITY {
            continue;
        }
        let mut row = 0.0;
        for k in k0..=k1.min(n - j) {
            row += (lt[j] + lt[k] + lh[n - j - k] - base).exp();
        }
        if j >= 2 && (k0..=k1).contains(&j) {
            row += (j - 1) as f64 * (lt[j] + lh[n - j] - base).exp();
        }
        total += row;
    }
    Ok(total)
}

/// `P(ℓ_1 > s·n, ℓ_2 > t·n)`.
pub fn joint_tail(table: &NormTable, w: &WeightSequence, n: usize, s: f64, t: f64) -> Result<f64> {
    let nf = n as f64;
    joint_range_prob(
        table,
        w,
        n,
        ((s * nf).floor() + 1.0, nf),
        ((t * nf).floor() + 1.0, nf),
    )
}
