//! Cycle weight families `θ_j = exp(-α_j)` and checks of the regime
//! hypotheses each limit theorem relies on.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::logspace::ln_factorial;

/// Absolutely summable perturbation `δ_j` of a constant weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// `δ_j = amplitude · ratio^j`, `|ratio| < 1`.
    Geometric { amplitude: f64, ratio: f64 },
    /// `δ_j = amplitude · j^exponent`, `exponent < -1`.
    Power { amplitude: f64, exponent: f64 },
}

impl Perturbation {
    pub fn delta(&self, j: usize) -> f64 {
        match *self {
            Perturbation::Geometric { amplitude, ratio } => amplitude * ratio.powi(j as i32),
            Perturbation::Power {
                amplitude,
                exponent,
            } => amplitude * (j as f64).powf(exponent),
        }
    }

    /// Upper bound on `Σ_{j>from} |δ_j|`, or on `Σ_{j>from} |δ_j|/j` when
    /// `over_j` is set.
    pub fn abs_tail(&self, from: usize, over_j: bool) -> f64 {
        let jf = from as f64;
        match *self {
            Perturbation::Geometric { amplitude, ratio } => {
                let q = ratio.abs();
                let head = amplitude.abs() * q.powf(jf + 1.0) / (1.0 - q);
                if over_j {
                    head / (jf + 1.0)
                } else {
                    head
                }
            }
            Perturbation::Power {
                amplitude,
                exponent,
            } => {
                // integral bound of the decreasing summand from `from` to ∞
                let p = if over_j { exponent - 1.0 } else { exponent };
                if from == 0 {
                    amplitude.abs() * (1.0 + 1.0 / (-p - 1.0))
                } else {
                    amplitude.abs() * jf.powf(p + 1.0) / (-p - 1.0)
                }
            }
        }
    }

    fn validate(&self, theta: f64) -> Result<()> {
        match *self {
            Perturbation::Geometric { amplitude, ratio } => {
                if !(ratio.abs() < 1.0) || !amplitude.is_finite() {
                    return Err(Error::Config(format!(
                        "geometric perturbation needs |ratio| < 1, got {ratio}"
                    )));
                }
                // the largest |δ_j| is at j = 1
                if theta - amplitude.abs() * ratio.abs() < 0.0 {
                    return Err(Error::Config("perturbation makes some θ_j negative".into()));
                }
            }
            Perturbation::Power {
                amplitude,
                exponent,
            } => {
                if !(exponent < -1.0) || !amplitude.is_finite() {
                    return Err(Error::Config(format!(
                        "power perturbation needs exponent < -1, got {exponent}"
                    )));
                }
                if theta - amplitude.abs() < 0.0 {
                    return Err(Error::Config("perturbation makes some θ_j negative".into()));
                }
            }
        }
        Ok(())
    }
}

/// Deterministic user rule `j ↦ log θ_j`.
#[derive(Clone)]
pub struct CustomRule {
    name: String,
    rule: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomRule")
            .field("name", &self.name)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    Ewens {
        theta: f64,
    },
    PerturbedEwens {
        theta: f64,
        perturbation: Perturbation,
    },
    /// `α_j = j^γ`
    PowerAlpha {
        gamma: f64,
    },
    /// `θ_j = j^{-γ}`
    NegPower {
        gamma: f64,
    },
    FiniteSupport(BTreeMap<usize, f64>),
    Custom(CustomRule),
}

/// Asymptotic behaviour of the weights, up to the `α_j ↦ α_j + cj` symmetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// `θ_j → θ` (after removing a linear shift of `α`).
    EwensLike {
        theta: f64,
    },
    /// `α_j → ∞` sublinearly; one giant cycle.
    SlowlyDiverging,
    /// Superexponentially decaying `θ_j`; the generating function is entire.
    QuicklyDiverging,
    Undetermined,
}

/// A weight family together with an accumulated linear shift `c`:
/// `log θ_j = log θ_j^{family} - c·j`.
#[derive(Debug, Clone)]
pub struct WeightSequence {
    family: Family,
    shift: f64,
}

impl PartialEq for WeightSequence {
    fn eq(&self, other: &Self) -> bool {
        self.descriptor() == other.descriptor()
    }
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::Config(format!(
            "{name} must be a positive finite number, got {x}"
        )))
    }
}

impl WeightSequence {
    pub fn ewens(theta: f64) -> Result<Self> {
        Ok(Self::from_family(Family::Ewens {
            theta: positive("theta", theta)?,
        }))
    }

    /// Uniform random permutations, `θ_j ≡ 1`.
    pub fn uniform() -> Self {
        Self::from_family(Family::Ewens { theta: 1.0 })
    }

    pub fn perturbed_ewens(theta: f64, perturbation: Perturbation) -> Result<Self> {
        let theta = positive("theta", theta)?;
        perturbation.validate(theta)?;
        Ok(Self::from_family(Family::PerturbedEwens {
            theta,
            perturbation,
        }))
    }

    pub fn power_alpha(gamma: f64) -> Result<Self> {
        Ok(Self::from_family(Family::PowerAlpha {
            gamma: positive("gamma", gamma)?,
        }))
    }

    pub fn neg_power(gamma: f64) -> Result<Self> {
        Ok(Self::from_family(Family::NegPower {
            gamma: positive("gamma", gamma)?,
        }))
    }

    pub fn finite_support<I: IntoIterator<Item = (usize, f64)>>(weights: I) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (j, t) in weights {
            if j == 0 {
                return Err(Error::Config("cycle lengths start at 1".into()));
            }
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Config(format!(
                    "θ_{j} = {t} is not a nonnegative number"
                )));
            }
            if t > 0.0 {
                map.insert(j, t);
            }
        }
        if map.is_empty() {
            return Err(Error::Config(
                "finite support has no positive weight".into(),
            ));
        }
        Ok(Self::from_family(Family::FiniteSupport(map)))
    }

    /// `rule(j)` must return `log θ_j` (`-inf` for `θ_j = 0`) and be deterministic.
    pub fn custom<F>(name: &str, rule: F) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        Self::from_family(Family::Custom(CustomRule {
            name: name.to_string(),
            rule: Arc::new(rule),
        }))
    }

    fn from_family(family: Family) -> Self {
        WeightSequence { family, shift: 0.0 }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Accumulated linear shift `c` of `α_j`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `log θ_j`; `-inf` exactly when `θ_j = 0`.
    pub fn log_theta(&self, j: usize) -> f64 {
        debug_assert!(j >= 1, "cycle lengths start at 1");
        let base = match &self.family {
            Family::Ewens { theta } => theta.ln(),
            Family::PerturbedEwens {
                theta,
                perturbation,
            } => (theta + perturbation.delta(j)).max(0.0).ln(),
            Family::PowerAlpha { gamma } => -(j as f64).powf(*gamma),
            Family::NegPower { gamma } => -gamma * (j as f64).ln(),
            Family::FiniteSupport(map) => map.get(&j).map_or(f64::NEG_INFINITY, |t| t.ln()),
            Family::Custom(c) => (c.rule)(j),
        };
        if base == f64::NEG_INFINITY || self.shift == 0.0 {
            base
        } else {
            base - self.shift * j as f64
        }
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.log_theta(j).exp()
    }

    pub fn is_supported(&self, j: usize) -> bool {
        self.log_theta(j) > f64::NEG_INFINITY
    }

    /// `log θ_1 .. log θ_n`, stored at indices `1..=n` (index 0 is `-inf`).
    pub fn log_theta_vec(&self, n: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(n + 1);
        v.push(f64::NEG_INFINITY);
        v.extend((1..=n).map(|j| self.log_theta(j)));
        v
    }

    /// Largest supported index when the support is known to be finite.
    pub fn max_support(&self) -> Option<usize> {
        match &self.family {
            Family::FiniteSupport(map) => map.keys().next_back().copied(),
            _ => None,
        }
    }

    pub fn regime(&self) -> Regime {
        match &self.family {
            Family::Ewens { theta } | Family::PerturbedEwens { theta, .. } => {
                Regime::EwensLike { theta: *theta }
            }
            Family::PowerAlpha { gamma } if *gamma < 1.0 => Regime::SlowlyDiverging,
            // α_j = j is the uniform model up to the symmetry
            Family::PowerAlpha { gamma } if *gamma == 1.0 => Regime::EwensLike { theta: 1.0 },
            Family::PowerAlpha { .. } => Regime::QuicklyDiverging,
            Family::NegPower { .. } => Regime::SlowlyDiverging,
            Family::FiniteSupport(_) => Regime::QuicklyDiverging,
            Family::Custom(_) => Regime::Undetermined,
        }
    }

    /// Upper bound on `Σ_{j>n} θ_j / j`, when a closed form is available.
    pub fn theta_over_j_tail(&self, n: usize) -> Option<f64> {
        if self.shift < 0.0 {
            return None;
        }
        // a nonnegative shift only shrinks θ_j
        let nf = n as f64;
        match &self.family {
            Family::NegPower { gamma } if n >= 1 => Some(nf.powf(-gamma) / gamma),
            Family::PowerAlpha { gamma } if n >= 1 => {
                let x = nf.powf(*gamma);
                Some((-x).exp() / (gamma * x))
            }
            Family::FiniteSupport(map) => {
                Some(map.range(n + 1..).map(|(j, t)| t / *j as f64).sum())
            }
            _ => None,
        }
    }

    /// Canonical config string; parses back to an equal sequence (except for
    /// custom rules, which cannot be serialized).
    pub fn descriptor(&self) -> String {
        let mut s = match &self.family {
            Family::Ewens { theta } => format!("family=ewens theta={theta}"),
            Family::PerturbedEwens {
                theta,
                perturbation,
            } => match perturbation {
                Perturbation::Geometric { amplitude, ratio } => {
                    format!("family=perturbed theta={theta} amp={amplitude} ratio={ratio}")
                }
                Perturbation::Power {
                    amplitude,
                    exponent,
                } => {
                    format!("family=perturbed theta={theta} amp={amplitude} exponent={exponent}")
                }
            },
            Family::PowerAlpha { gamma } => format!("family=power gamma={gamma}"),
            Family::NegPower { gamma } => format!("family=negpower gamma={gamma}"),
            Family::FiniteSupport(map) => {
                let parts: Vec<String> = map.iter().map(|(j, t)| format!("{j}:{t}")).collect();
                format!("family=finite support={}", parts.join(","))
            }
            Family::Custom(c) => format!("family=custom name={}", c.name),
        };
        if self.shift != 0.0 {
            s.push_str(&format!(" shift={}", self.shift));
        }
        s
    }

    /// Parses `family=<name> key=value ...`. Recognized families:
    /// `ewens theta=`, `perturbed theta= amp= (ratio=|exponent=)`,
    /// `power gamma=`, `negpower gamma=`, `finite support=j:θ,j:θ`.
    /// Any family accepts an optional `shift=c`.
    pub fn parse(cfg: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for tok in cfg.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{tok}`")))?;
            if kv.insert(k, v).is_some() {
                return Err(Error::Config(format!("duplicate key `{k}`")));
            }
        }
        let family = kv
            .remove("family")
            .ok_or_else(|| Error::Config("missing `family=`".into()))?;
        let num = |kv: &mut BTreeMap<&str, &str>, key: &str| -> Result<f64> {
            let v = kv
                .remove(key)
                .ok_or_else(|| Error::Config(format!("family={family} needs `{key}=`")))?;
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}={v}` is not a number")))
        };
        let shift = if kv.contains_key("shift") {
            num(&mut kv, "shift")?
        } else {
            0.0
        };
        let mut w = match family {
            "ewens" => WeightSequence::ewens(num(&mut kv, "theta")?)?,
            "power" => WeightSequence::power_alpha(num(&mut kv, "gamma")?)?,
            "negpower" => WeightSequence::neg_power(num(&mut kv, "gamma")?)?,
            "perturbed" => {
                let theta = num(&mut kv, "theta")?;
                let amplitude = num(&mut kv, "amp")?;
                let p = if kv.contains_key("ratio") {
                    Perturbation::Geometric {
                        amplitude,
                        ratio: num(&mut kv, "ratio")?,
                    }
                } else {
                    Perturbation::Power {
                        amplitude,
                        exponent: num(&mut kv, "exponent")?,
                    }
                };
                WeightSequence::perturbed_ewens(theta, p)?
            }
            "finite" => {
                let spec = kv
                    .remove("support")
                    .ok_or_else(|| Error::Config("family=finite needs `support=`".into()))?;
                let mut pairs = Vec::new();
                for item in spec.split(',').filter(|s| !s.is_empty()) {
                    let (j, t) = item.split_once(':').ok_or_else(|| {
                        Error::Config(format!("support entry `{item}` is not j:θ"))
                    })?;
                    let j = j
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad cycle length `{j}`")))?;
                    let t = t
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad weight `{t}`")))?;
                    pairs.push((j, t));
                }
                WeightSequence::finite_support(pairs)?
            }
            other => return Err(Error::Config(format!("unknown family `{other}`"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!(
                "unexpected key `{k}` for family={family}"
            )));
        }
        if !shift.is_finite() {
            return Err(Error::Config("shift must be finite".into()));
        }
        w.shift = shift;
        Ok(w)
    }
}

impl FromStr for WeightSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightSequence::parse(s)
    }
}

impl fmt::Display for WeightSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

/// `α_j ↦ α_j + c·j`. The permutation law is unchanged and
/// `h_n ↦ e^{-cn} h_n`.
pub fn shift_weights(w: &WeightSequence, c: f64) -> WeightSequence {
    let mut out = w.clone();
    out.shift += c;
    out
}

/// `log θ_j` (free-function form).
pub fn log_theta(w: &WeightSequence, j: usize) -> f64 {
    w.log_theta(j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    /// The family cannot be classified; the caller must assert the regime.
    Undetermined,
}

/// Witness for `θ_{n-j} θ_j / θ_n ≤ c_j` (`j ≤ n/2`) with `Σ c_j / j < ∞`.
#[derive(Debug, Clone)]
pub struct GiantCycleWitness {
    pub rule: String,
    /// `c_1 .. c_depth` at indices `0..depth`.
    pub c: Vec<f64>,
    /// Running `Σ_{i≤j} c_i / i`.
    pub partial_sums: Vec<f64>,
    /// Largest `log(θ_{n-j}θ_j/θ_n) - log c_j` observed over the probe grid.
    pub max_probe_excess: f64,
}

/// Witness for `Σ |θ_j - θ| / j < ∞` (`θ ≥ 1`) or `Σ |θ_j - θ| < ∞` (`θ < 1`).
#[derive(Debug, Clone)]
pub struct EwensWitness {
    pub theta: f64,
    pub over_j: bool,
    pub partial_sum: f64,
    pub tail_bound: f64,
}

/// Witness for `θ_k ≤ e^{Mk}/k!` and two coprime supported indices `≥ 4`.
#[derive(Debug, Clone)]
pub struct QuickWitness {
    pub m: f64,
    pub pair: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub giant_cycle: Verdict,
    pub giant_witness: Option<GiantCycleWitness>,
    pub ewens: Verdict,
    pub ewens_witness: Option<EwensWitness>,
    pub quick: Verdict,
    pub quick_witness: Option<QuickWitness>,
    pub support_gcd: usize,
}

impl HypothesisReport {
    pub fn giant_cycle_ok(&self) -> bool {
        self.giant_cycle == Verdict::Holds
    }
    pub fn ewens_ok(&self) -> bool {
        self.ewens == Verdict::Holds
    }
    pub fn quick_ok(&self) -> bool {
        self.quick == Verdict::Holds
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn giant_witness(w: &WeightSequence, depth: usize) -> Option<GiantCycleWitness> {
    let (rule, log_c): (String, Box<dyn Fn(usize) -> f64>) = match w.family() {
        // (n-j)^γ + j^γ - n^γ ≥ (1-γ) j^γ for j ≤ n/2 by concavity
        Family::PowerAlpha { gamma } if *gamma < 1.0 => {
            let g = *gamma;
            (
                format!("c_j = exp(-(1-{g}) j^{g})"),
                Box::new(move |j| -(1.0 - g) * (j as f64).powf(g)),
            )
        }
        // n / (n-j) ≤ 2 for j ≤ n/2
        Family::NegPower { gamma } => {
            let g = *gamma;
            (
                format!("c_j = 2^{g} j^-{g}"),
                Box::new(move |j| g * 2f64.ln() - g * (j as f64).ln()),
            )
        }
        _ => return None,
    };
    let c: Vec<f64> = (1..=depth).map(|j| log_c(j).exp()).collect();
    let mut acc = 0.0;
    let partial_sums = c
        .iter()
        .enumerate()
        .map(|(i, cj)| {
            acc += cj / (i + 1) as f64;
            acc
        })
        .collect();
    let lt = w.log_theta_vec(depth);
    let mut excess = f64::NEG_INFINITY;
    for n in 2..=depth {
        for j in 1..=n / 2 {
            let r = lt[n - j] + lt[j] - lt[n];
            excess = excess.max(r - log_c(j));
        }
    }
    Some(GiantCycleWitness {
        rule,
        c,
        partial_sums,
        max_probe_excess: excess,
    })
}

fn quick_witness(w: &WeightSequence, depth: usize) -> Option<QuickWitness> {
    let m = match w.family() {
        Family::PowerAlpha { gamma } if *gamma > 1.0 => {
            // sup_k (ln k - k^{γ-1}) bounds ln k! / k - k^{γ-1}
            let inv = 1.0 / (gamma - 1.0);
            let m0 = (inv * inv.ln() - inv).max(0.0);
            m0 - w.shift()
        }
        Family::FiniteSupport(map) => map
            .keys()
            .map(|&k| (w.log_theta(k) + ln_factorial(k)) / k as f64)
            .fold(f64::NEG_INFINITY, f64::max),
        _ => return None,
    };
    let m = if m > 0.0 { m } else { f64::MIN_POSITIVE.sqrt() };
    let limit = w.max_support().unwrap_or(depth).min(depth.max(5));
    let supported: Vec<usize> = (4..=limit).filter(|&j| w.is_supported(j)).collect();
    let pair = supported.iter().enumerate().find_map(|(i, &a)| {
        supported[i + 1..]
            .iter()
            .find(|&&b| gcd(a, b) == 1)
            .map(|&b| (a, b))
    })?;
    Some(QuickWitness { m, pair })
}

fn ewens_witness(w: &WeightSequence, depth: usize) -> Option<EwensWitness> {
    if w.shift() != 0.0 {
        return None;
    }
    match w.family() {
        Family::Ewens { theta } => Some(EwensWitness {
            theta: *theta,
            over_j: *theta >= 1.0,
            partial_sum: 0.0,
            tail_bound: 0.0,
        }),
        Family::PerturbedEwens {
            theta,
            perturbation,
        } => {
            let over_j = *theta >= 1.0;
            let partial_sum = (1..=depth)
                .map(|j| {
                    let d = perturbation.delta(j).abs();
                    if over_j {
                        d / j as f64
                    } else {
                        d
                    }
                })
                .sum();
            Some(EwensWitness {
                theta: *theta,
                over_j,
                partial_sum,
                tail_bound: perturbation.abs_tail(depth, over_j),
            })
        }
        _ => None,
    }
}

/// Classifies `w` against each theorem's hypotheses. Known families are
/// classified from their closed forms and cross-checked numerically up to
/// `probe_depth`; custom rules are reported as undetermined.
pub fn check_hypotheses(w: &WeightSequence, probe_depth: usize) -> Result<HypothesisReport> {
    if probe_depth < 10 {
        return Err(Error::Config(format!("probe depth {probe_depth} < 10")));
    }
    let support_gcd = (1..=w.max_support().unwrap_or(probe_depth))
        .filter(|&j| w.is_supported(j))
        .fold(0, gcd);

    if let Family::Custom(_) = w.family() {
        return Ok(HypothesisReport {
            giant_cycle: Verdict::Undetermined,
            giant_witness: None,
            ewens: Verdict::Undetermined,
            ewens_witness: None,
            quick: Verdict::Undetermined,
            quick_witness: None,
            support_gcd,
        });
    }

    let giant_witness = giant_witness(w, probe_depth);
    let giant_cycle = match &giant_witness {
        Some(gw) if gw.max_probe_excess <= 1e-12 => Verdict::Holds,
        _ => Verdict::Fails,
    };
    let ewens_witness = ewens_witness(w, probe_depth);
    let ewens = if ewens_witness.is_some() {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    let quick_witness = quick_witness(w, probe_depth).filter(|qw| {
        (1..=probe_depth).all(|k| w.log_theta(k) <= qw.m * k as f64 - ln_factorial(k) + 1e-9)
    });
    let quick = if quick_witness.is_some() {
        Verdict::Holds
    } else {
        Verdict::Fails
    };

    Ok(HypothesisReport {
        giant_cycle,
        giant_witness,
        ewens,
        ewens_witness,
        quick,
        quick_witness,
        support_gcd,
    })
}
