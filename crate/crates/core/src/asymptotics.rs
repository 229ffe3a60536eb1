//! Large-`n` predictions: Ewens limits, the giant-cycle law, the saddle-point
//! estimate of `h_n` and the typical cycle length for `α_j = j^γ`, `γ > 1`.

use crate::error::{Error, Result};
use crate::exact_dist::{ell1_pmf, tail_prob};
use crate::logspace::LogSumExp;
use crate::normalization::{ratio_bound_monitor, NormTable, DEFAULT_DROP_NATS};
use crate::weights::{check_hypotheses, Regime, WeightSequence};

pub const DEFAULT_RN_TOL: f64 = 1e-12;

/// Guard against weights that never decay.
const MAX_SERIES_TERMS: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleData {
    pub n: usize,
    pub r_n: f64,
    pub log_rn: f64,
    pub log_i0: f64,
    pub log_i1: f64,
    pub log_i2: f64,
    /// `φ(r_n) = Σ θ_j r_n^j / j`.
    pub phi: f64,
    pub log_hn_estimate: f64,
    /// `|I_0(r_n) - n| / n`.
    pub residual: f64,
}

/// `log I_{-1}, log I_0, log I_1, log I_2` at `z = e^x`.
struct Series {
    log_i: [f64; 4],
}

fn series(w: &WeightSequence, x: f64) -> Result<Series> {
    let mut acc = [
        LogSumExp::new(),
        LogSumExp::new(),
        LogSumExp::new(),
        LogSumExp::new(),
    ];
    let mut push = |j: usize, lt: f64| -> f64 {
        let base = lt + j as f64 * x;
        let lj = (j as f64).ln();
        for (b, a) in acc.iter_mut().enumerate() {
            a.add(base + (b as f64 - 1.0) * lj);
        }
        base
    };
    if let Some(top) = w.max_support() {
        for j in 1..=top {
            let lt = w.log_theta(j);
            if lt > f64::NEG_INFINITY {
                push(j, lt);
            }
        }
    } else {
        let mut best = f64::NEG_INFINITY;
        let mut argmax = 0;
        let mut j = 0;
        loop {
            j += 1;
            if j > MAX_SERIES_TERMS {
                return Err(Error::Uncertified(format!(
                    "power series at log z = {x} did not decay within {MAX_SERIES_TERMS} terms"
                )));
            }
            let lt = w.log_theta(j);
            if lt == f64::NEG_INFINITY {
                continue;
            }
            let term = push(j, lt);
            if term > best {
                best = term;
                argmax = j;
            }
            // j^2 grows slower than the drop margin once past the peak
            if j > argmax && term + 2.0 * (j as f64).ln() < best - DEFAULT_DROP_NATS {
                break;
            }
        }
    }
    Ok(Series {
        log_i: acc.map(|a| a.value()),
    })
}

fn require_quick(w: &WeightSequence) -> Result<()> {
    match w.regime() {
        Regime::QuicklyDiverging => Ok(()),
        r => Err(Error::Hypothesis(format!(
            "saddle point needs an entire generating function; `{w}` is {r:?}"
        ))),
    }
}

/// Solves `I_0(r) = n` and evaluates the saddle-point quantities at the root.
pub fn solve_rn(w: &WeightSequence, n: usize, tol: f64) -> Result<SaddleData> {
    require_quick(w)?;
    if n == 0 {
        return Err(Error::Config("r_n needs n ≥ 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let target = (n as f64).ln();
    let f = |x: f64| -> Result<f64> { Ok(series(w, x)?.log_i[1] - target) };
    let ln2 = std::f64::consts::LN_2;

    let f0 = f(0.0)?;
    // r doubles (or halves) from 1 until the root is bracketed
    let (mut lo, mut hi) = (0.0, 0.0);
    if f0 < 0.0 {
        hi = ln2;
        while f(hi)? < 0.0 {
            lo = hi;
            hi += ln2;
        }
    } else if f0 > 0.0 {
        lo = -ln2;
        while f(lo)? > 0.0 {
            hi = lo;
            lo -= ln2;
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let fx = f(x)?;
        if fx.exp_m1().abs() <= tol {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        x = mid;
    }
    saddle_at(w, n, x)
}

fn saddle_at(w: &WeightSequence, n: usize, log_rn: f64) -> Result<SaddleData> {
    let s = series(w, log_rn)?;
    let [log_im1, log_i0, log_i1, log_i2] = s.log_i;
    let phi = log_im1.exp();
    let mut sd = SaddleData {
        n,
        r_n: log_rn.exp(),
        log_rn,
        log_i0,
        log_i1,
        log_i2,
        phi,
        log_hn_estimate: 0.0,
        residual: (log_i0 - (n as f64).ln()).exp_m1().abs(),
    };
    sd.log_hn_estimate = saddle_log_hn(&sd);
    Ok(sd)
}

/// `log(r_n^{-n} (2π I_1(r_n))^{-1/2} e^{φ(r_n)})`.
pub fn saddle_log_hn(sd: &SaddleData) -> f64 {
    -(sd.n as f64) * sd.log_rn - 0.5 * ((2.0 * std::f64::consts::PI).ln() + sd.log_i1) + sd.phi
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioBoundRow {
    pub n: usize,
    pub log_rn: f64,
    /// `max_{j < (1-δ)n} log(h_{n-j}/h_n) - (j + 1/2) log r_n`.
    pub log_c: f64,
    /// Maximizing `j`.
    pub argmax: usize,
    /// The `j = 0` row: `-log r_n / 2`.
    pub sanity: f64,
}

#[derive(Debug, Clone)]
pub struct RatioBoundReport {
    pub delta: f64,
    pub rows: Vec<RatioBoundRow>,
}

impl RatioBoundReport {
    /// Largest empirical `log C_δ` over the grid.
    pub fn log_c(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.log_c)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// No row beyond `from` exceeds the first row at or after `from`.
    pub fn non_increasing_beyond(&self, from: usize) -> bool {
        let tail: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.n >= from)
            .map(|r| r.log_c)
            .collect();
        tail.windows(2).all(|p| p[1] <= p[0] + 1e-9)
    }
}

/// Evaluates `log C_δ` from the exact table at each grid point with
/// `h_n > 0`.
pub fn h_ratio_bound_check(
    t: &NormTable,
    w: &WeightSequence,
    delta: f64,
    grid: &[usize],
) -> Result<RatioBoundReport> {
    require_quick(w)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("δ must lie in (0, 1), got {delta}")));
    }
    let lh = t.log_h_slice();
    let mut rows = Vec::new();
    for &n in grid {
        t.check_index(n)?;
        if !t.is_positive(n) {
            continue;
        }
        let sd = solve_rn(w, n, DEFAULT_RN_TOL)?;
        let jmax = ((1.0 - delta) * n as f64).ceil() as usize;
        let mut best = (f64::NEG_INFINITY, 0);
        for j in 0..jmax.min(n + 1) {
            let v = lh[n - j] - lh[n] - (j as f64 + 0.5) * sd.log_rn;
            if v > best.0 {
                best = (v, j);
            }
        }
        rows.push(RatioBoundRow {
            n,
            log_rn: sd.log_rn,
            log_c: best.0,
            argmax: best.1,
            sanity: -0.5 * sd.log_rn,
        });
    }
    Ok(RatioBoundReport { delta, rows })
}

/// `(lim P(ℓ_1 > sn), lim P(ℓ_1 > sn, ℓ_2 > tn))` for Ewens weights `θ`.
pub fn ewens_limits(theta: f64, s: f64, t: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0) {
        return Err(Error::Config(format!("θ must be positive, got {theta}")));
    }
    for v in [s, t] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("s, t must lie in [0, 1], got {v}")));
        }
    }
    let tail = (1.0 - s).powf(theta);
    let m = s.max(t);
    let joint = theta / (1.0 + theta) * (1.0 - s - t).max(0.0).powf(theta + 1.0)
        + (1.0 + theta * m) / (1.0 + theta) * (1.0 - m).powf(theta);
    Ok((tail, joint))
}

/// Which normalizer the limit law uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalizer {
    /// `Σ_{j≥0} h_j`.
    WithH0,
    /// `Σ_{j≥1} h_j`.
    WithoutH0,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GiantCycleLimit {
    pub m: usize,
    pub log_hm: f64,
    pub sum_with_h0: f64,
    pub sum_without_h0: f64,
    /// Certified bound on `Σ_{j>N} h_j`.
    pub tail_bound: f64,
    pub b_empirical: f64,
    /// Total mass of `m ↦ h_m / S` over `m ≤ N` under each normalizer.
    pub mass_with_h0: f64,
    pub mass_without_h0: f64,
    pub convention: Normalizer,
}

impl GiantCycleLimit {
    pub fn limit(&self, convention: Normalizer) -> f64 {
        let s = match convention {
            Normalizer::WithH0 => self.sum_with_h0,
            Normalizer::WithoutH0 => self.sum_without_h0,
        };
        self.log_hm.exp() / s
    }

    /// The limit under the convention whose total mass matches 1.
    pub fn value(&self) -> f64 {
        self.limit(self.convention)
    }
}

/// `lim_n P(ℓ_1 = n - m)`. The tail of `Σ h_j` beyond the table is bounded
/// by `B Σ_{j>N} θ_j / j`, with `B = max_n n h_n / θ_n` taken from the table.
pub fn giant_cycle_limit(w: &WeightSequence, t: &NormTable, m: usize) -> Result<GiantCycleLimit> {
    if !check_hypotheses(w, 64)?.giant_cycle_ok() {
        return Err(Error::Hypothesis(format!(
            "`{w}` is not certified for the giant-cycle regime"
        )));
    }
    t.check_index(m)?;
    let monitor = ratio_bound_monitor(t, w)?;
    let big_n = t.n_max();
    let theta_tail = w
        .theta_over_j_tail(big_n)
        .ok_or_else(|| Error::Uncertified(format!("no closed-form tail of Σ θ_j / j for `{w}`")))?;
    let tail_bound = monitor.b_empirical * theta_tail;
    let lh = t.log_h_slice();
    // smallest terms first
    let without: f64 = lh[1..].iter().rev().map(|x| x.exp()).sum();
    let with = without + lh[0].exp();
    if !(tail_bound < 1e-6 * with) {
        return Err(Error::Uncertified(format!(
            "tail of Σ h_j beyond N = {big_n} bounded only by {tail_bound:e}"
        )));
    }
    let sum_with_h0 = with + 0.5 * tail_bound;
    let sum_without_h0 = without + 0.5 * tail_bound;
    let mass_with_h0 = with / sum_with_h0;
    let mass_without_h0 = with / sum_without_h0;
    let convention = if (mass_with_h0 - 1.0).abs() <= (mass_without_h0 - 1.0).abs() {
        Normalizer::WithH0
    } else {
        Normalizer::WithoutH0
    };
    Ok(GiantCycleLimit {
        m,
        log_hm: lh[m],
        sum_with_h0,
        sum_without_h0,
        tail_bound,
        b_empirical: monitor.b_empirical,
        mass_with_h0,
        mass_without_h0,
        convention,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrediction {
    pub gamma: f64,
    pub n: usize,
    /// `log r_n` used for `j_max` and the threshold: the numeric root when
    /// supplied, otherwise `log_rn_asym`.
    pub log_rn: f64,
    pub log_rn_asym: f64,
    /// Root of `α'(j) = log r_n`: `(log r_n / γ)^{1/(γ-1)}`.
    pub j_max: f64,
    /// `(log n / (γ-1))^{1/γ}`.
    pub typical_length: f64,
    pub small_cycle_threshold: f64,
}

impl GammaPrediction {
    /// `log(e^{-α(j_max)} r_n^{j_max})`.
    pub fn log_peak_term(&self) -> f64 {
        -self.j_max.powf(self.gamma) + self.j_max * self.log_rn
    }
}

/// `log n / log r_n - 3/4`.
pub fn small_cycle_threshold(n: usize, log_rn: f64) -> f64 {
    (n as f64).ln() / log_rn - 0.75
}

/// Closed-form predictions for `α_j = j^γ`; pass the numeric `log r_n` when
/// known.
pub fn gamma_prediction(gamma: f64, n: usize, log_rn: Option<f64>) -> Result<GammaPrediction> {
    if !(gamma > 1.0) {
        return Err(Error::Config(format!("γ must exceed 1, got {gamma}")));
    }
    if n < 3 {
        return Err(Error::Config("predictions need n ≥ 3".into()));
    }
    let l = (n as f64).ln() / (gamma - 1.0);
    let log_rn_asym = gamma * l.powf((gamma - 1.0) / gamma);
    let lr = log_rn.unwrap_or(log_rn_asym);
    Ok(GammaPrediction {
        gamma,
        n,
        log_rn: lr,
        log_rn_asym,
        j_max: (lr / gamma).powf(1.0 / (gamma - 1.0)),
        typical_length: l.powf(1.0 / gamma),
        small_cycle_threshold: small_cycle_threshold(n, lr),
    })
}

/// `n P(ℓ_1 > δn)`, an upper bound on `P(max_i ℓ_i ≥ δn)`.
pub fn macroscopic_tail(t: &NormTable, w: &WeightSequence, n: usize, delta: f64) -> Result<f64> {
    require_quick(w)?;
    t.require_positive(n)?;
    if delta > 1.0 {
        return Ok(0.0);
    }
    let pmf = ell1_pmf(t, w, n)?;
    let nf = n as f64;
    Ok(nf * tail_prob(&pmf, (delta * nf).floor() + 1.0, nf))
}
