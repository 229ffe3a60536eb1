//! Normalization constants `h_n`.
//!
//! Summing over the length `j` of the cycle containing a fixed index gives
//! `h_n = (1/n) Σ_{j=1}^n θ_j h_{n-j}` with `h_0 = 1`. The table stores
//! `log h_n` and evaluates each inner sum with a streaming log-sum-exp, so
//! weights decaying like `exp(-j²)` are handled long after `h_n` would have
//! underflowed.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::logspace::{ln_factorial, ln_gamma, LogSumExp};
use crate::weights::{check_hypotheses, Family, Regime, WeightSequence};

/// Default drop threshold for adaptive truncation, in nats.
pub const DEFAULT_DROP_NATS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationPolicy {
    Full,
    /// Stop each inner sum once past its largest term and the current term is
    /// `drop_threshold` nats below it. Only valid for quickly decaying weights.
    Adaptive {
        drop_threshold: f64,
    },
}

impl fmt::Display for TruncationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruncationPolicy::Full => f.write_str("full"),
            TruncationPolicy::Adaptive { drop_threshold } => write!(f, "adaptive:{drop_threshold}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormTable {
    weights_id: String,
    log_h: Vec<f64>,
    policy: TruncationPolicy,
}

impl NormTable {
    /// Descriptor of the weights the table was built from.
    pub fn weights_id(&self) -> &str {
        &self.weights_id
    }

    /// Largest `n` in the table.
    pub fn n_max(&self) -> usize {
        self.log_h.len() - 1
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    /// `log h_0 .. log h_N`.
    pub fn log_h_slice(&self) -> &[f64] {
        &self.log_h
    }

    pub fn log_h(&self, n: usize) -> f64 {
        self.log_h[n]
    }

    pub fn is_positive(&self, n: usize) -> bool {
        self.log_h[n] > f64::NEG_INFINITY
    }

    pub(crate) fn check_index(&self, n: usize) -> Result<()> {
        if n > self.n_max() {
            Err(Error::OutOfTable {
                n,
                max: self.n_max(),
            })
        } else {
            Ok(())
        }
    }

    /// Errors unless `n` is in the table and `h_n > 0`.
    pub fn require_positive(&self, n: usize) -> Result<()> {
        self.check_index(n)?;
        if self.is_positive(n) {
            Ok(())
        } else {
            Err(Error::UndefinedModel { n })
        }
    }

    /// Header line of the on-disk format.
    pub fn header(&self) -> String {
        cache_header(&self.weights_id, self.n_max(), self.policy)
    }

    /// Writes the header and one `n<TAB>log h_n` row per entry.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.header())?;
        for (n, lh) in self.log_h.iter().enumerate() {
            writeln!(out, "{n}\t{}", fmt_float(*lh))?;
        }
        Ok(())
    }

    /// Reads a table written by [`NormTable::write_to`]. When `expected_header`
    /// is given, a different header is reported as [`Error::Cache`].
    pub fn read_from<R: BufRead>(input: R, expected_header: Option<&str>) -> Result<NormTable> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Cache("empty file".into()))??;
        if let Some(exp) = expected_header {
            if header != exp {
                return Err(Error::Cache(format!("header mismatch: `{header}`")));
            }
        }
        let (weights_id, n_max, policy) = parse_header(&header)?;
        let mut log_h = Vec::with_capacity(n_max + 1);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let (n, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::Cache(format!("bad row `{line}`")))?;
            if n.parse::<usize>().ok() != Some(i) {
                return Err(Error::Cache(format!("row {i} labelled `{n}`")));
            }
            let v = parse_float(v).ok_or_else(|| Error::Cache(format!("bad value `{v}`")))?;
            log_h.push(v);
        }
        if log_h.len() != n_max + 1 || log_h[0] != 0.0 {
            return Err(Error::Cache(format!(
                "expected {} rows starting at log h_0 = 0",
                n_max + 1
            )));
        }
        Ok(NormTable {
            weights_id,
            log_h,
            policy,
        })
    }
}

/// 17 significant digits, `-inf` for the zero sentinel.
pub fn fmt_float(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_float(s: &str) -> Option<f64> {
    match s {
        "-inf" => Some(f64::NEG_INFINITY),
        "inf" => Some(f64::INFINITY),
        _ => s.parse().ok(),
    }
}

pub fn cache_header(descriptor: &str, n: usize, policy: TruncationPolicy) -> String {
    format!("cycleweights-norm v1 {descriptor} N={n} policy={policy}")
}

fn parse_header(header: &str) -> Result<(String, usize, TruncationPolicy)> {
    let bad = || Error::Cache(format!("bad header `{header}`"));
    let rest = header
        .strip_prefix("cycleweights-norm v1 ")
        .ok_or_else(bad)?;
    let (rest, policy) = rest.rsplit_once(" policy=").ok_or_else(bad)?;
    let (descriptor, n) = rest.rsplit_once(" N=").ok_or_else(bad)?;
    let n = n.parse().map_err(|_| bad())?;
    let policy = match policy {
        "full" => TruncationPolicy::Full,
        p => {
            let nats = p
                .strip_prefix("adaptive:")
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)?;
            TruncationPolicy::Adaptive {
                drop_threshold: nats,
            }
        }
    };
    Ok((descriptor.to_string(), n, policy))
}

/// Builds `log h_0 .. log h_N`.
pub fn build_norm_table(
    w: &WeightSequence,
    n: usize,
    policy: TruncationPolicy,
) -> Result<NormTable> {
    let drop = match policy {
        TruncationPolicy::Full => None,
        TruncationPolicy::Adaptive { drop_threshold } => {
            if w.regime() != Regime::QuicklyDiverging {
                return Err(Error::Hypothesis(format!(
                    "adaptive truncation needs quickly decaying weights, got {:?} for `{w}`",
                    w.regime()
                )));
            }
            if !(drop_threshold > 0.0) {
                return Err(Error::Config(format!(
                    "drop threshold {drop_threshold} must be > 0"
                )));
            }
            Some(drop_threshold)
        }
    };
    let lt = w.log_theta_vec(n);
    let support: Vec<usize> = (1..=n).filter(|&j| lt[j] > f64::NEG_INFINITY).collect();

    let mut log_h = Vec::with_capacity(n + 1);
    log_h.push(0.0);
    for m in 1..=n {
        let mut acc = LogSumExp::new();
        let mut argmax = 0;
        for &j in support.iter().take_while(|&&j| j <= m) {
            let term = lt[j] + log_h[m - j];
            if term == f64::NEG_INFINITY {
                continue;
            }
            if term > acc.max() {
                argmax = j;
            }
            acc.add(term);
            if let Some(thr) = drop {
                if j > argmax && term < acc.max() - thr {
                    break;
                }
            }
        }
        log_h.push(acc.value() - (m as f64).ln());
    }
    Ok(NormTable {
        weights_id: w.descriptor(),
        log_h,
        policy,
    })
}

/// Relative error of the recursion at `n`, recomputed with a plain linear sum
/// scaled by `h_n`.
pub fn recursion_residual(t: &NormTable, w: &WeightSequence, n: usize) -> f64 {
    let lh = t.log_h(n);
    if lh == f64::NEG_INFINITY {
        return 0.0;
    }
    let rhs: f64 = (1..=n)
        .map(|j| (w.log_theta(j) + t.log_h(n - j) - lh).exp())
        .sum::<f64>()
        / n as f64;
    (rhs - 1.0).abs()
}

/// Loads a table from `dir` when a file with the matching header exists;
/// otherwise builds it and writes it there.
pub fn load_or_build(
    w: &WeightSequence,
    n: usize,
    policy: TruncationPolicy,
    dir: Option<&Path>,
) -> Result<NormTable> {
    let Some(dir) = dir else {
        return build_norm_table(w, n, policy);
    };
    let header = cache_header(&w.descriptor(), n, policy);
    let path = cache_path(dir, &header);
    if let Ok(f) = fs::File::open(&path) {
        if let Ok(t) = NormTable::read_from(BufReader::new(f), Some(&header)) {
            return Ok(t);
        }
    }
    let t = build_norm_table(w, n, policy)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        t.write_to(&mut f)?;
        f.flush()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(t)
}

pub fn cache_path(dir: &Path, header: &str) -> PathBuf {
    let digest = Sha256::digest(header.as_bytes());
    dir.join(format!("norm-{}.tsv", &hex::encode(digest)[..32]))
}

/// `log((θ)_n / n!) = log Γ(n+θ) - log Γ(θ) - log n!`, exact for `θ_j ≡ θ`.
pub fn ewens_log_hn(theta: f64, n: usize) -> f64 {
    ln_gamma(n as f64 + theta) - ln_gamma(theta) - ln_factorial(n)
}

/// `log (θ)_n`.
pub fn log_ascending_factorial(theta: f64, n: usize) -> f64 {
    ln_gamma(n as f64 + theta) - ln_gamma(theta)
}

/// Large-`n` constants for weights close to a constant `θ`:
/// `h_n ≈ C · (θ)_n / n!` with `log C = Σ_j (θ_j - θ)/j`.
#[derive(Debug, Clone, Copy)]
pub struct EwensAsymptote {
    pub theta: f64,
    pub log_c: f64,
}

impl EwensAsymptote {
    pub fn new(w: &WeightSequence) -> Result<Self> {
        let theta = match w.family() {
            Family::Ewens { theta } | Family::PerturbedEwens { theta, .. } => *theta,
            _ => {
                return Err(Error::Hypothesis(format!(
                    "`{w}` is not an Ewens-type family"
                )))
            }
        };
        Ok(EwensAsymptote {
            theta,
            log_c: prop22_constant(w)?,
        })
    }

    pub fn log_ascending_factorial(&self, n: usize) -> f64 {
        log_ascending_factorial(self.theta, n)
    }

    /// Predicted `log h_n`.
    pub fn log_hn(&self, n: usize) -> f64 {
        self.log_c + ewens_log_hn(self.theta, n)
    }
}

const CONSTANT_TAIL_TOL: f64 = 1e-12;
const CONSTANT_MAX_TERMS: usize = 10_000_000;

/// `log C = Σ_{j≥1} (θ_j - θ)/j`, truncated where the certified tail bound is
/// below `1e-12`.
pub fn prop22_constant(w: &WeightSequence) -> Result<f64> {
    let report = check_hypotheses(w, 64)?;
    if !report.ewens_ok() {
        return Err(Error::Hypothesis(format!(
            "`{w}` does not satisfy Σ|θ_j - θ|/j < ∞ with a certified tail"
        )));
    }
    let p = match w.family() {
        Family::Ewens { .. } => return Ok(0.0),
        Family::PerturbedEwens { perturbation, .. } => *perturbation,
        _ => unreachable!("ewens_ok only for Ewens-type families"),
    };
    let mut terms = 16;
    while p.abs_tail(terms, true) >= CONSTANT_TAIL_TOL {
        terms *= 2;
        if terms > CONSTANT_MAX_TERMS {
            return Err(Error::Uncertified(format!(
                "tail of Σ(θ_j - θ)/j for `{w}` still ≥ {CONSTANT_TAIL_TOL} after {CONSTANT_MAX_TERMS} terms"
            )));
        }
    }
    // smallest terms first
    Ok((1..=terms).rev().map(|j| p.delta(j) / j as f64).sum())
}

/// `log a_n` with `a_n = n h_n / θ_n`, for `n` with `θ_n > 0`.
#[derive(Debug, Clone)]
pub struct RatioMonitor {
    pub log_a: Vec<(usize, f64)>,
    /// `max a_n` over the table; stands in for the non-constructive bound.
    pub b_empirical: f64,
    pub min_a: f64,
}

impl RatioMonitor {
    /// Largest `a_n` with `lo < n ≤ hi`.
    pub fn block_max(&self, lo: usize, hi: usize) -> Option<f64> {
        self.log_a
            .iter()
            .filter(|(n, _)| *n > lo && *n <= hi)
            .map(|(_, la)| la.exp())
            .reduce(f64::max)
    }
}

pub fn ratio_bound_monitor(t: &NormTable, w: &WeightSequence) -> Result<RatioMonitor> {
    if t.weights_id() != w.descriptor() {
        return Err(Error::Config(
            "table was built from different weights".into(),
        ));
    }
    if !check_hypotheses(w, 64)?.giant_cycle_ok() {
        return Err(Error::Hypothesis(format!(
            "`{w}` is not certified for the giant-cycle regime"
        )));
    }
    let log_a: Vec<(usize, f64)> = (1..=t.n_max())
        .filter(|&n| w.is_supported(n))
        .map(|n| (n, (n as f64).ln() + t.log_h(n) - w.log_theta(n)))
        .collect();
    let b_empirical = log_a
        .iter()
        .map(|(_, la)| la.exp())
        .fold(f64::NEG_INFINITY, f64::max);
    let min_a = log_a
        .iter()
        .map(|(_, la)| la.exp())
        .fold(f64::INFINITY, f64::min);
    Ok(RatioMonitor {
        log_a,
        b_empirical,
        min_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::shift_weights;

    fn h(t: &NormTable) -> Vec<f64> {
        t.log_h_slice().iter().map(|x| x.exp()).collect()
    }

    #[test]
    fn uniform_table_is_all_zero() {
        let t = build_norm_table(&WeightSequence::uniform(), 10, TruncationPolicy::Full).unwrap();
        assert!(t.log_h_slice().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn ewens_two_small_table() {
        let t = build_norm_table(
            &WeightSequence::ewens(2.0).unwrap(),
            3,
            TruncationPolicy::Full,
        )
        .unwrap();
        for (got, want) in h(&t).iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn even_support_zeros() {
        let w = WeightSequence::finite_support([(2, 1.0)]).unwrap();
        let t = build_norm_table(&w, 5, TruncationPolicy::Full).unwrap();
        let want = [1.0, 0.0, 0.5, 0.0, 0.125, 0.0];
        for (n, (got, want)) in h(&t).iter().zip(want).enumerate() {
            assert!((got - want).abs() < 1e-15, "n = {n}");
        }
        assert_eq!(t.log_h(5), f64::NEG_INFINITY);
        assert!(matches!(
            t.require_positive(5),
            Err(Error::UndefinedModel { n: 5 })
        ));
    }

    #[test]
    fn ewens_closed_form_examples() {
        assert!((ewens_log_hn(2.0, 3) - 4f64.ln()).abs() < 1e-13);
        assert_eq!(ewens_log_hn(1.0, 1000), 0.0);
        assert!((ewens_log_hn(0.5, 2) - 0.375f64.ln()).abs() < 1e-13);
        let w = WeightSequence::ewens(0.5).unwrap();
        let t = build_norm_table(&w, 2, TruncationPolicy::Full).unwrap();
        assert!((t.log_h(2) - 0.375f64.ln()).abs() < 1e-13);
        assert!((log_ascending_factorial(0.7, 1) - 0.7f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn ewens_matches_closed_form_to_2000() {
        for theta in [0.5, 1.0, 2.0] {
            let t = build_norm_table(
                &WeightSequence::ewens(theta).unwrap(),
                2000,
                TruncationPolicy::Full,
            )
            .unwrap();
            for n in 0..=2000 {
                let d = (t.log_h(n) - ewens_log_hn(theta, n)).abs();
                assert!(d <= 1e-9, "θ = {theta}, n = {n}, diff {d}");
            }
        }
    }

    #[test]
    fn recursion_self_consistency() {
        for cfg in [
            "family=negpower gamma=2",
            "family=power gamma=0.5",
            "family=power gamma=2",
        ] {
            let w = WeightSequence::parse(cfg).unwrap();
            let t = build_norm_table(&w, 300, TruncationPolicy::Full).unwrap();
            for n in [1, 2, 17, 150, 299, 300] {
                assert!(recursion_residual(&t, &w, n) <= 1e-12, "{cfg} n = {n}");
            }
        }
    }

    #[test]
    fn constant_examples() {
        assert_eq!(
            prop22_constant(&WeightSequence::ewens(3.0).unwrap()).unwrap(),
            0.0
        );
        use crate::weights::Perturbation;
        let w = WeightSequence::perturbed_ewens(
            2.0,
            Perturbation::Geometric {
                amplitude: 1.0,
                ratio: 0.5,
            },
        )
        .unwrap();
        // brute partial sum of 2^{-j}/j
        let brute: f64 = (1..=10_000).rev().map(|j| 0.5f64.powi(j) / j as f64).sum();
        let c = prop22_constant(&w).unwrap();
        assert!((c - 2f64.ln()).abs() < 1e-12);
        assert!((c - brute).abs() < 1e-12);
        // θ_1 = θ + 1, others θ: a power perturbation with amplitude 1 and a
        // very negative exponent is 1 at j = 1 and negligible afterwards
        let w = WeightSequence::perturbed_ewens(
            2.0,
            Perturbation::Power {
                amplitude: 1.0,
                exponent: -80.0,
            },
        )
        .unwrap();
        assert!((prop22_constant(&w).unwrap() - 1.0).abs() < 1e-12);
        assert!(prop22_constant(&WeightSequence::neg_power(2.0).unwrap()).is_err());
        let slow = WeightSequence::perturbed_ewens(
            2.0,
            Perturbation::Power {
                amplitude: 1.0,
                exponent: -1.01,
            },
        )
        .unwrap();
        assert!(matches!(prop22_constant(&slow), Err(Error::Uncertified(_))));
    }

    #[test]
    fn shift_examples() {
        let t = build_norm_table(
            &shift_weights(&WeightSequence::uniform(), 1.0),
            20,
            TruncationPolicy::Full,
        )
        .unwrap();
        for n in 0..=20 {
            assert!((t.log_h(n) + n as f64).abs() < 1e-12);
        }
        let w2 = shift_weights(&WeightSequence::ewens(2.0).unwrap(), 2f64.ln());
        let t = build_norm_table(&w2, 3, TruncationPolicy::Full).unwrap();
        assert!((t.log_h(3) + 2f64.ln()).abs() < 1e-13);
        let w = WeightSequence::neg_power(2.0).unwrap();
        let a = build_norm_table(&w, 50, TruncationPolicy::Full).unwrap();
        let b = build_norm_table(&shift_weights(&w, 0.0), 50, TruncationPolicy::Full).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adaptive_rejected_outside_quick_regime() {
        let p = TruncationPolicy::Adaptive {
            drop_threshold: 50.0,
        };
        assert!(build_norm_table(&WeightSequence::ewens(1.0).unwrap(), 10, p).is_err());
        assert!(build_norm_table(&WeightSequence::neg_power(2.0).unwrap(), 10, p).is_err());
        assert!(build_norm_table(&WeightSequence::power_alpha(2.0).unwrap(), 10, p).is_ok());
    }

    #[test]
    fn adaptive_matches_full() {
        let w = WeightSequence::power_alpha(2.0).unwrap();
        let full = build_norm_table(&w, 2000, TruncationPolicy::Full).unwrap();
        let adaptive = build_norm_table(
            &w,
            2000,
            TruncationPolicy::Adaptive {
                drop_threshold: 50.0,
            },
        )
        .unwrap();
        let worst = (0..=2000)
            .map(|n| (full.log_h(n) - adaptive.log_h(n)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "{worst}");
    }

    #[test]
    fn ratio_monitor_first_entry_is_one() {
        let w = WeightSequence::neg_power(2.0).unwrap();
        let t = build_norm_table(&w, 100, TruncationPolicy::Full).unwrap();
        let m = ratio_bound_monitor(&t, &w).unwrap();
        assert_eq!(m.log_a[0].0, 1);
        assert!(m.log_a[0].1.abs() < 1e-15);
        assert!(m.min_a >= 1.0 - 1e-12);
        let e = WeightSequence::ewens(1.0).unwrap();
        let te = build_norm_table(&e, 10, TruncationPolicy::Full).unwrap();
        assert!(ratio_bound_monitor(&te, &e).is_err());
    }

    #[test]
    fn file_format_round_trip() {
        let w = WeightSequence::finite_support([(2, 1.0), (3, 0.5)]).unwrap();
        let t = build_norm_table(&w, 40, TruncationPolicy::Full).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "cycleweights-norm v1 family=finite support=2:1,3:0.5 N=40 policy=full\n0\t"
        ));
        assert!(text.contains("\n1\t-inf\n"));
        let back = NormTable::read_from(&buf[..], Some(&t.header())).unwrap();
        assert_eq!(back, t);
        assert!(NormTable::read_from(
            &buf[..],
            Some("cycleweights-norm v1 other N=40 policy=full")
        )
        .is_err());
    }

    #[test]
    fn cache_hit_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let w = WeightSequence::power_alpha(2.0).unwrap();
        let p = TruncationPolicy::Adaptive {
            drop_threshold: 50.0,
        };
        let a = load_or_build(&w, 500, p, Some(dir.path())).unwrap();
        let b = load_or_build(&w, 500, p, Some(dir.path())).unwrap();
        let c = build_norm_table(&w, 500, p).unwrap();
        assert_eq!(a, c);
        assert_eq!(b, c);
        for (x, y) in b.log_h_slice().iter().zip(c.log_h_slice()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // a stale file under the same name is rebuilt
        let path = cache_path(dir.path(), &c.header());
        fs::write(
            &path,
            "cycleweights-norm v1 garbage N=1 policy=full\n0\t0\n1\t0\n",
        )
        .unwrap();
        let d = load_or_build(&w, 500, p, Some(dir.path())).unwrap();
        assert_eq!(d, c);
    }
}
