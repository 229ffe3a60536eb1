//! Command-line front end. [`run`] parses arguments, writes the report to the
//! given writer and returns the process exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::asymptotics::{
    ewens_limits, gamma_prediction, giant_cycle_limit, h_ratio_bound_check, macroscopic_tail,
    small_cycle_threshold, solve_rn, DEFAULT_RN_TOL,
};
use crate::error::{Error, Result};
use crate::exact_dist::{ell1_pmf, joint_pmf, joint_tail, tail_prob, JOINT_DENSE_MAX};
use crate::normalization::{load_or_build, NormTable, TruncationPolicy, DEFAULT_DROP_NATS};
use crate::oracle::{
    oracle_ell1_pmf, oracle_erk, oracle_hn, oracle_joint, oracle_permutation_check, MAX_JOINT_N,
    MAX_PARTITION_N, MAX_PERMUTATION_N,
};
use crate::sampler::{realize_permutation, sample_many, RandomSource};
use crate::weights::{check_hypotheses, Family, Regime, WeightSequence};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_UNDEFINED: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

pub const CACHE_ENV: &str = "CYCLEWEIGHTS_CACHE";

/// Tables beyond this length use adaptive truncation when the weights allow.
const ADAPTIVE_FROM: usize = 4000;

#[derive(Debug, Parser)]
#[command(
    name = "cycleweights",
    version,
    about = "Random permutations with cycle weights"
)]
struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Tsv, global = true)]
    format: Format,
    /// Norm-table cache directory (default: $CYCLEWEIGHTS_CACHE; none if unset).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Args)]
struct FamilyArg {
    /// Weight configuration, e.g. "family=ewens theta=2".
    #[arg(long)]
    family: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// log h_0 ..= log h_N.
    Norm {
        #[command(flatten)]
        family: FamilyArg,
        #[arg(long)]
        n: usize,
        /// `full`, `adaptive` or `adaptive:<nats>` (default: adaptive beyond 4000 when allowed).
        #[arg(long)]
        policy: Option<String>,
    },
    /// Law of ℓ_1 at size n.
    Dist {
        #[command(flatten)]
        family: FamilyArg,
        #[arg(long)]
        n: usize,
    },
    /// Law of (ℓ_1, ℓ_2) at size n.
    Joint {
        #[command(flatten)]
        family: FamilyArg,
        #[arg(long)]
        n: usize,
    },
    /// Exact samples of cycle types (or permutations).
    Sample {
        #[command(flatten)]
        family: FamilyArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also print a permutation realizing each cycle type.
        #[arg(long)]
        permutations: bool,
    },
    /// Saddle radius, power series and estimate of log h_n.
    Saddle {
        #[command(flatten)]
        family: FamilyArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_RN_TOL)]
        tol: f64,
    },
    /// Exact finite-n values against a limit prediction over an n-grid.
    Validate {
        #[arg(long, value_enum)]
        theorem: Theorem,
        #[command(flatten)]
        family: FamilyArg,
        /// Comma-separated sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        /// First threshold (fraction of n); default depends on the theorem.
        #[arg(long)]
        s: Option<f64>,
        /// Second threshold for the pair law.
        #[arg(long)]
        t: Option<f64>,
        /// Residual size for the giant-cycle law.
        #[arg(long, default_value_t = 0)]
        m: usize,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Compares the recursion pipeline with brute-force enumeration.
    OracleCheck {
        #[command(flatten)]
        family: FamilyArg,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Theorem {
    EwensTail,
    EwensJoint,
    Giant,
    LengthGamma,
    NoMacro,
    NoSmall,
    SaddleHn,
    RatioBound,
}

/// One value in a report row.
#[derive(Debug, Clone)]
enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn tsv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt17(*x),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Float(x) if x.is_finite() => json!(fmt17(*x).parse::<f64>().expect("round trip")),
            Cell::Float(x) => json!(fmt17(*x)),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$(Cell::from($x)),*] };
}

struct Report {
    meta: Vec<(String, String)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
    status: i32,
}

impl Report {
    fn new(columns: &[&'static str]) -> Self {
        Report {
            meta: Vec::new(),
            columns: columns.to_vec(),
            rows: Vec::new(),
            status: EXIT_OK,
        }
    }

    fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    fn write(&self, format: Format, out: &mut dyn Write) -> std::io::Result<()> {
        match format {
            Format::Tsv => {
                for (k, v) in &self.meta {
                    writeln!(out, "# {k}: {v}")?;
                }
                writeln!(out, "{}", self.columns.join("\t"))?;
                for r in &self.rows {
                    let cells: Vec<String> = r.iter().map(Cell::tsv).collect();
                    writeln!(out, "{}", cells.join("\t"))?;
                }
            }
            Format::Json => {
                let meta: serde_json::Map<String, Value> = self
                    .meta
                    .iter()
                    .map(|(k, v)| (k.clone(), json!(v)))
                    .collect();
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
                    .collect();
                let doc = json!({ "meta": meta, "columns": self.columns, "rows": rows });
                serde_json::to_writer_pretty(&mut *out, &doc)?;
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::UndefinedModel { .. } => EXIT_UNDEFINED,
        Error::Hypothesis(_) => EXIT_HYPOTHESIS,
        Error::Config(_) | Error::CapExceeded { .. } | Error::OutOfTable { .. } => EXIT_USAGE,
        Error::Uncertified(_) | Error::Cache(_) | Error::Io(_) => EXIT_FAILURE,
    }
}

/// Runs the command line `args` (program name first). The report goes to
/// `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let cache = cli
        .cache
        .clone()
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from));
    let ctx = Ctx { cache };
    let command_line: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match ctx.dispatch(&cli.command) {
        Ok(mut report) => {
            let mut meta = vec![
                (
                    "program".to_string(),
                    format!("cycleweights {}", env!("CARGO_PKG_VERSION")),
                ),
                ("args".to_string(), command_line.join(" ")),
            ];
            meta.append(&mut report.meta);
            report.meta = meta;
            if let Err(e) = report.write(cli.format, out) {
                let _ = writeln!(err, "error: {e}");
                return EXIT_FAILURE;
            }
            report.status
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

struct Ctx {
    cache: Option<PathBuf>,
}

fn parse_family(f: &FamilyArg) -> Result<WeightSequence> {
    WeightSequence::parse(&f.family)
}

fn parse_policy(s: &str) -> Result<TruncationPolicy> {
    match s {
        "full" => Ok(TruncationPolicy::Full),
        "adaptive" => Ok(TruncationPolicy::Adaptive {
            drop_threshold: DEFAULT_DROP_NATS,
        }),
        _ => s
            .strip_prefix("adaptive:")
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| *v > 0.0)
            .map(|drop_threshold| TruncationPolicy::Adaptive { drop_threshold })
            .ok_or_else(|| Error::Config(format!("unknown truncation policy `{s}`"))),
    }
}

fn default_policy(w: &WeightSequence, n: usize) -> TruncationPolicy {
    if n > ADAPTIVE_FROM && w.regime() == Regime::QuicklyDiverging {
        TruncationPolicy::Adaptive {
            drop_threshold: DEFAULT_DROP_NATS,
        }
    } else {
        TruncationPolicy::Full
    }
}

impl Ctx {
    fn table(
        &self,
        w: &WeightSequence,
        n: usize,
        policy: Option<TruncationPolicy>,
    ) -> Result<NormTable> {
        let policy = policy.unwrap_or_else(|| default_policy(w, n));
        load_or_build(w, n, policy, self.cache.as_deref())
    }

    fn dispatch(&self, cmd: &Command) -> Result<Report> {
        match cmd {
            Command::Norm { family, n, policy } => {
                let w = parse_family(family)?;
                let policy = policy.as_deref().map(parse_policy).transpose()?;
                let t = self.table(&w, *n, policy)?;
                let mut r = Report::new(&["n", "log_h"]);
                r.meta("family", w.descriptor());
                r.meta("policy", t.policy());
                for m in 0..=*n {
                    r.rows.push(row![m, t.log_h(m)]);
                }
                Ok(r)
            }
            Command::Dist { family, n } => {
                let w = parse_family(family)?;
                let t = self.table(&w, *n, None)?;
                let pmf = ell1_pmf(&t, &w, *n)?;
                let mut r = Report::new(&["j", "p", "log_p"]);
                r.meta("family", w.descriptor());
                r.meta("n", n);
                for j in 1..=*n {
                    r.rows.push(row![j, pmf.p(j), pmf.log_p(j)]);
                }
                Ok(r)
            }
            Command::Joint { family, n } => {
                let w = parse_family(family)?;
                if *n > JOINT_DENSE_MAX {
                    return Err(Error::CapExceeded {
                        what: "dense pair law",
                        n: *n,
                        cap: JOINT_DENSE_MAX,
                    });
                }
                let t = self.table(&w, *n, None)?;
                let joint = joint_pmf(&t, &w, *n)?;
                let mut r = Report::new(&["j", "k", "p_same", "p_diff", "p"]);
                r.meta("family", w.descriptor());
                r.meta("n", n);
                for j in 1..=*n {
                    for k in 1..=*n {
                        let p = joint.p(j, k);
                        if p > 0.0 {
                            let same = if j == k { joint.same_cycle(j) } else { 0.0 };
                            r.rows.push(row![j, k, same, joint.diff_cycle(j, k), p]);
                        }
                    }
                }
                Ok(r)
            }
            Command::Sample {
                family,
                n,
                count,
                seed,
                permutations,
            } => {
                let w = parse_family(family)?;
                let t = self.table(&w, *n, None)?;
                let draws = sample_many(&t, &w, *n, *count, *seed)?;
                let cols: &[&'static str] = if *permutations {
                    &["index", "ell1", "cycle_type", "permutation"]
                } else {
                    &["index", "ell1", "cycle_type"]
                };
                let mut r = Report::new(cols);
                r.meta("family", w.descriptor());
                r.meta("n", n);
                r.meta("seed", seed);
                let mut rng = RandomSource::new(*seed, u64::MAX).rng();
                for (i, (ct, first)) in draws.iter().enumerate() {
                    let mut cells = row![i, *first, ct.to_string()];
                    if *permutations {
                        let p = realize_permutation(ct, &mut rng);
                        let s: Vec<String> = p.iter().map(|x| (x + 1).to_string()).collect();
                        cells.push(Cell::Text(s.join(",")));
                    }
                    r.rows.push(cells);
                }
                Ok(r)
            }
            Command::Saddle { family, n, tol } => {
                let w = parse_family(family)?;
                let sd = solve_rn(&w, *n, *tol)?;
                let t = self.table(&w, *n, None)?;
                let exact = t.log_h(*n);
                let mut r = Report::new(&["quantity", "value"]);
                r.meta("family", w.descriptor());
                r.meta("n", n);
                r.meta("tol", fmt17(*tol));
                r.rows.push(row!["r_n", sd.r_n]);
                r.rows.push(row!["log_r_n", sd.log_rn]);
                r.rows.push(row!["log_I0", sd.log_i0]);
                r.rows.push(row!["log_I1", sd.log_i1]);
                r.rows.push(row!["log_I2", sd.log_i2]);
                r.rows.push(row!["phi", sd.phi]);
                r.rows.push(row!["residual", sd.residual]);
                r.rows.push(row!["log_h_estimate", sd.log_hn_estimate]);
                r.rows.push(row!["log_h_exact", exact]);
                r.rows
                    .push(row!["abs_error", (sd.log_hn_estimate - exact).abs()]);
                Ok(r)
            }
            Command::Validate {
                theorem,
                family,
                grid,
                s,
                t,
                m,
                delta,
            } => {
                let w = parse_family(family)?;
                self.validate(*theorem, &w, grid, *s, *t, *m, *delta)
            }
            Command::OracleCheck { family, n, tol } => {
                let w = parse_family(family)?;
                oracle_check(&w, *n, *tol)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn validate(
        &self,
        theorem: Theorem,
        w: &WeightSequence,
        grid: &[usize],
        s: Option<f64>,
        t: Option<f64>,
        m: usize,
        delta: Option<f64>,
    ) -> Result<Report> {
        let big_n = grid.iter().copied().max().unwrap_or(0);
        if big_n == 0 {
            return Err(Error::Config("grid must contain a positive size".into()));
        }
        let hyp = check_hypotheses(w, 64)?;
        let mut r = Report::new(&["n", "point", "exact", "predicted", "error"]);
        r.meta("family", w.descriptor());
        r.meta("theorem", format!("{theorem:?}"));
        match theorem {
            Theorem::EwensTail | Theorem::EwensJoint => {
                if !hyp.ewens_ok() {
                    return Err(Error::Hypothesis(format!(
                        "`{w}` is not certified Ewens-like"
                    )));
                }
                let Regime::EwensLike { theta } = w.regime() else {
                    return Err(Error::Hypothesis(format!("`{w}` is not Ewens-like")));
                };
                let table = self.table(w, big_n, None)?;
                for &n in grid {
                    let nf = n as f64;
                    if theorem == Theorem::EwensTail {
                        let pmf = ell1_pmf(&table, w, n)?;
                        let points: Vec<f64> = match s {
                            Some(s) => vec![s],
                            None => (1..=9).map(|i| i as f64 / 10.0).collect(),
                        };
                        let mut worst = (f64::NEG_INFINITY, 0.0, 0.0, 0.0);
                        for s in points {
                            let exact = tail_prob(&pmf, (s * nf).floor() + 1.0, nf);
                            let pred = ewens_limits(theta, s, 0.0)?.0;
                            let e = (exact - pred).abs();
                            if e > worst.0 {
                                worst = (e, s, exact, pred);
                            }
                        }
                        r.rows
                            .push(row![n, format!("s={}", worst.1), worst.2, worst.3, worst.0]);
                    } else {
                        let (s, t) = (s.unwrap_or(0.5), t.unwrap_or(0.25));
                        let exact = joint_tail(&table, w, n, s, t)?;
                        let pred = ewens_limits(theta, s, t)?.1;
                        r.rows.push(row![
                            n,
                            format!("s={s},t={t}"),
                            exact,
                            pred,
                            (exact - pred).abs()
                        ]);
                    }
                }
            }
            Theorem::Giant => {
                if !hyp.giant_cycle_ok() {
                    return Err(Error::Hypothesis(format!(
                        "`{w}` is not certified for a giant cycle"
                    )));
                }
                let table = self.table(w, big_n, None)?;
                let lim = giant_cycle_limit(w, &table, m)?;
                r.meta("normalizer", format!("{:?}", lim.convention));
                r.meta("b_empirical", fmt17(lim.b_empirical));
                r.meta("tail_bound", fmt17(lim.tail_bound));
                for &n in grid {
                    if m >= n {
                        continue;
                    }
                    let exact = ell1_pmf(&table, w, n)?.p(n - m);
                    let pred = lim.value();
                    r.rows
                        .push(row![n, format!("m={m}"), exact, pred, (exact - pred).abs()]);
                }
            }
            Theorem::LengthGamma
            | Theorem::NoSmall
            | Theorem::NoMacro
            | Theorem::SaddleHn
            | Theorem::RatioBound => {
                if !hyp.quick_ok() {
                    return Err(Error::Hypothesis(format!(
                        "`{w}` is not certified quickly diverging"
                    )));
                }
                let table = self.table(w, big_n, None)?;
                if theorem == Theorem::RatioBound {
                    let delta = delta.unwrap_or(0.5);
                    let rep = h_ratio_bound_check(&table, w, delta, grid)?;
                    let mut running = f64::NEG_INFINITY;
                    for row in &rep.rows {
                        running = running.max(row.log_c);
                        r.rows.push(row![
                            row.n,
                            format!("delta={delta},j={}", row.argmax),
                            row.log_c,
                            running,
                            row.log_c - running
                        ]);
                    }
                    return Ok(r);
                }
                for &n in grid {
                    if !table.is_positive(n) {
                        continue;
                    }
                    let nf = n as f64;
                    match theorem {
                        Theorem::LengthGamma => {
                            let Family::PowerAlpha { gamma } = w.family() else {
                                return Err(Error::Hypothesis(format!(
                                    "typical-length law needs α_j = j^γ with γ > 1, got `{w}`"
                                )));
                            };
                            let g = gamma_prediction(*gamma, n, None)?;
                            let eps = delta.unwrap_or(0.5);
                            let (a, b) = (
                                (1.0 - eps) * g.typical_length,
                                (1.0 + eps) * g.typical_length,
                            );
                            let exact = tail_prob(&ell1_pmf(&table, w, n)?, a, b);
                            r.rows
                                .push(row![n, format!("[{a},{b}]"), exact, 1.0, 1.0 - exact]);
                        }
                        Theorem::NoSmall => {
                            let sd = solve_rn(w, n, DEFAULT_RN_TOL)?;
                            let thr = small_cycle_threshold(n, sd.log_rn);
                            let exact = tail_prob(&ell1_pmf(&table, w, n)?, 1.0, thr);
                            r.rows
                                .push(row![n, format!("ell1<={thr}"), exact, 0.0, exact]);
                        }
                        Theorem::NoMacro => {
                            let d = delta.unwrap_or(0.1);
                            let exact = macroscopic_tail(&table, w, n, d)?;
                            let _ = nf;
                            r.rows
                                .push(row![n, format!("delta={d}"), exact, 0.0, exact]);
                        }
                        Theorem::SaddleHn => {
                            let sd = solve_rn(w, n, DEFAULT_RN_TOL)?;
                            let exact = table.log_h(n);
                            let pred = sd.log_hn_estimate;
                            r.rows
                                .push(row![n, "log_h", exact, pred, (exact - pred).abs()]);
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
        Ok(r)
    }
}

fn oracle_check(w: &WeightSequence, n: usize, tol: f64) -> Result<Report> {
    if n == 0 || n > MAX_PARTITION_N {
        return Err(Error::CapExceeded {
            what: "oracle check",
            n,
            cap: MAX_PARTITION_N,
        });
    }
    let t = crate::normalization::build_norm_table(w, n, TruncationPolicy::Full)?;
    let mut r = Report::new(&["n", "quantity", "pipeline", "oracle", "error"]);
    r.meta("family", w.descriptor());
    r.meta("tol", fmt17(tol));
    let mut worst: f64 = 0.0;
    for m in 1..=n {
        let olh = oracle_hn(w, m)?;
        let plh = t.log_h(m);
        let e = if olh == f64::NEG_INFINITY && plh == f64::NEG_INFINITY {
            0.0
        } else {
            (olh - plh).abs()
        };
        worst = worst.max(e);
        r.rows.push(row![m, "log_h_n", plh, olh, e]);
        if olh == f64::NEG_INFINITY {
            continue;
        }
        let pp = ell1_pmf(&t, w, m)?;
        let op = oracle_ell1_pmf(w, m)?;
        let e = (1..=m)
            .map(|j| (pp.p(j) - op.p(j)).abs())
            .fold(0.0, f64::max);
        worst = worst.max(e);
        r.rows
            .push(row![m, "ell1_pmf(max)", pp.total(), op.total(), e]);
        let e = (1..=m)
            .map(|k| {
                let a = crate::exact_dist::expected_rk(&t, w, m, k)?;
                Ok((a - oracle_erk(w, m, k)?).abs())
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        worst = worst.max(e);
        r.rows.push(row![m, "E_r_k(max)", f64::NAN, f64::NAN, e]);
        if (2..=MAX_JOINT_N).contains(&m) {
            let pj = joint_pmf(&t, w, m)?;
            let oj = oracle_joint(w, m)?;
            let mut e: f64 = 0.0;
            for j in 1..=m {
                for k in 1..=m {
                    e = e.max((pj.p(j, k) - oj.p(j, k)).abs());
                }
            }
            worst = worst.max(e);
            r.rows
                .push(row![m, "joint_pmf(max)", pj.total(), oj.total(), e]);
        }
        if m <= MAX_PERMUTATION_N {
            let pc = oracle_permutation_check(w, m)?;
            worst = worst.max(pc.max_rel_error);
            r.rows.push(row![
                m,
                "permutations(rel)",
                plh.exp(),
                pc.hn_from_permutations,
                pc.max_rel_error
            ]);
        }
    }
    r.meta("max_error", fmt17(worst));
    if !(worst <= tol) {
        r.status = EXIT_FAILURE;
    }
    Ok(r)
}
