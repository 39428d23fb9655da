//! Numerical checkers for the inequalities behind the LININT error bound.
//!
//! Every `gap_*` function returns left-hand side minus right-hand side of one
//! inequality, so a correct inequality never produces a value below
//! `-GAP_TOL`. [`search_near_violation`] hunts for counterexamples with a mix
//! of uniform, corner-biased and locally refined samples.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolant::{ActionExponent, FeasibleInterval, Location, SamplePoint, SampleSet};

/// Gaps above `-GAP_TOL` count as satisfied.
pub const GAP_TOL: f64 = 1e-9;

fn bad(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

fn check_q_open(q: f64) -> Result<()> {
    if !(q > 1.0 && q < 2.0) {
        return Err(bad(format!("q must lie in (1, 2), got {q}")));
    }
    Ok(())
}

/// `(1 + t)^q - 1 - q t`, accurate for small `t`.
fn binom_remainder(t: f64, q: f64) -> f64 {
    (q * t.ln_1p()).exp_m1() - q * t
}

/// `a|x/a + 1|^q + b|x/b - 1|^q - (a + b) - (q - 1)|x|^q / 3` on
/// `0 < a <= b < 1`, `a + b <= 1`, `q in (1, 2)`, `|x| >= a`.
pub fn gap_out(a: f64, b: f64, q: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && a <= b && b < 1.0 && a + b <= 1.0) {
        return Err(bad(format!(
            "need 0 < a <= b < 1 and a + b <= 1, got a = {a}, b = {b}"
        )));
    }
    check_q_open(q)?;
    if !x.is_finite() || x.abs() < a {
        return Err(bad(format!("need |x| >= a, got x = {x}, a = {a}")));
    }
    Ok(
        a * (x / a + 1.0).abs().powf(q) + b * (x / b - 1.0).abs().powf(q)
            - (a + b)
            - (q - 1.0) * x.abs().powf(q) / 3.0,
    )
}

/// `a(1 + x/a)^q + b(1 - x/b)^q - (a + b) - q(q - 1)x^2 / (3a)` on
/// `0 < a <= b`, `q in (1, 2)`, `x in (-a, a)`.
pub fn gap_in(a: f64, b: f64, q: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && a <= b && b.is_finite()) {
        return Err(bad(format!("need 0 < a <= b, got a = {a}, b = {b}")));
    }
    check_q_open(q)?;
    if !(x > -a && x < a) {
        return Err(bad(format!("need x in (-a, a), got x = {x}, a = {a}")));
    }
    Ok(
        a * binom_remainder(x / a, q) + b * binom_remainder(-x / b, q)
            - q * (q - 1.0) * x * x / (3.0 * a),
    )
}

/// `x^p - (x - 1)^(p - 1) x - (p - 1)` on `p > 1`, `x >= 2`.
pub fn gap_twovariable(p: f64, x: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(bad(format!("need p > 1, got {p}")));
    }
    if !(x >= 2.0) || !x.is_finite() {
        return Err(bad(format!("need x >= 2, got {x}")));
    }
    let d = p - 1.0;
    // x (x^d - (x-1)^d) - d, with the difference taken without cancellation
    let diff = (d * (x - 1.0).ln()).exp() * (d * (x / (x - 1.0)).ln()).exp_m1();
    Ok(x * diff - d)
}

/// Both sides of the increment dichotomy for a fresh point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dichotomy {
    pub delta_j: f64,
    /// `y - f_S(x)`.
    pub c: f64,
    pub slope: f64,
    pub d: f64,
    pub rhs1: f64,
    pub rhs2: f64,
    pub branch1: bool,
    pub branch2: bool,
}

impl Dichotomy {
    pub fn holds(&self) -> bool {
        self.branch1 || self.branch2
    }

    /// The better of the two margins.
    pub fn gap(&self) -> f64 {
        (self.delta_j - self.rhs1).max(self.delta_j - self.rhs2)
    }
}

/// Checks that adding `pt` raises the q-action by at least one of
/// `(q-1)/3 |c|^q` and `(q-1) c^2 / (3 |m|^(2-q) d)`.
pub fn check_dichotomy(s: &SampleSet, pt: SamplePoint, q: f64) -> Result<Dichotomy> {
    check_q_open(q)?;
    if s.is_empty() {
        return Err(Error::EmptySet);
    }
    let x = pt.u;
    if let Location::Knot(_) = s.locate(x) {
        return Err(Error::DuplicateU(x));
    }
    let delta_j = s.action_increment(x, pt.v, q)?;
    let c = pt.v - s.eval(x)?;
    let slope = s.slope_at(x)?;
    let d = s.nearest_gap(x)?;
    let rhs1 = (q - 1.0) / 3.0 * c.abs().powf(q);
    let rhs2 = if slope == 0.0 {
        if c == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (q - 1.0) / (3.0 * slope.abs().powf(2.0 - q) * d) * c * c
    };
    Ok(Dichotomy {
        delta_j,
        c,
        slope,
        d,
        rhs1,
        rhs2,
        branch1: delta_j >= rhs1 - GAP_TOL,
        branch2: rhs2.is_finite() && delta_j >= rhs2 - GAP_TOL,
    })
}

/// `(H_{p, S ∪ pt} - H_{p, S}) - (p - 1)|m| d^p`.
pub fn gap_h_increment(s: &SampleSet, pt: SamplePoint, p: f64) -> Result<f64> {
    if s.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: s.len(),
        });
    }
    if !(p > 1.0) || !p.is_finite() {
        return Err(bad(format!("need p > 1, got {p}")));
    }
    let dh = s.h_increment(pt.u, pt.v, p)?;
    let m = s.slope_at(pt.u)?;
    let d = s.nearest_gap(pt.u)?;
    Ok(dh - (p - 1.0) * m.abs() * d.powf(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cumulative {
    pub sum: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Sums `|m_i| d_i^p` along a sequence whose every prefix has total
/// variation at most 1 and compares with `1/(p-1)`.
pub fn check_cumulative(seq: &[SamplePoint], p: f64) -> Result<Cumulative> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(bad(format!("need p > 1, got {p}")));
    }
    let mut prefix = SampleSet::new();
    let mut sum = 0.0;
    for (i, &pt) in seq.iter().enumerate() {
        if i >= 1 {
            let m = prefix.slope_at(pt.u).map_err(|e| match e {
                Error::AtKnot(u) => Error::DuplicateU(u),
                other => other,
            })?;
            let d = prefix.nearest_gap(pt.u)?;
            sum += m.abs() * d.powf(p);
        }
        prefix.insert_mut(pt)?;
        let j1 = prefix.q_action(1.0);
        if j1 > 1.0 + GAP_TOL {
            return Err(bad(format!(
                "prefix of length {} has total variation {j1} > 1",
                i + 1
            )));
        }
    }
    let bound = 1.0 / (p - 1.0);
    Ok(Cumulative {
        sum,
        bound,
        holds: sum <= bound + GAP_TOL,
    })
}

/// `sum_{k=0}^{K} C(q, k) z^k` for `|z| < 1`.
pub fn binomial_partial(q: f64, z: f64, k_max: usize) -> Result<f64> {
    if !(z.abs() < 1.0) {
        return Err(bad(format!("need |z| < 1, got {z}")));
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..k_max {
        term *= (q - k as f64) / (k as f64 + 1.0) * z;
        sum += term;
    }
    Ok(sum)
}

/// Inequalities known to the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapId {
    Out,
    In,
    TwoVariable,
    Dichotomy,
    HIncrement,
    Cumulative,
}

impl GapId {
    pub const ALL: [GapId; 6] = [
        GapId::Out,
        GapId::In,
        GapId::TwoVariable,
        GapId::Dichotomy,
        GapId::HIncrement,
        GapId::Cumulative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GapId::Out => "out",
            GapId::In => "in",
            GapId::TwoVariable => "two-variable",
            GapId::Dichotomy => "dichotomy",
            GapId::HIncrement => "h-increment",
            GapId::Cumulative => "cumulative",
        }
    }
}

impl fmt::Display for GapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GapId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GapId::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| bad(format!("unknown gap {s:?}")))
    }
}

/// Result of a falsification search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gap: GapId,
    pub seed: u64,
    pub samples: usize,
    pub min_gap: f64,
    pub argmin: BTreeMap<String, f64>,
    pub violations: usize,
    pub tolerance: f64,
    pub flagged: bool,
}

/// Optional overrides for the sampled parameter ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// Smallest interval length sampled for `a`, `b` and gaps `d`.
    pub min_length: f64,
    /// Error exponents for the set-based inequalities are drawn from `(1, p_max]`.
    pub p_max: f64,
    /// Points per sequence for the cumulative bound.
    pub sequence_len: usize,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            min_length: 1e-6,
            p_max: 3.0,
            sequence_len: 50,
        }
    }
}

const SHARDS: u64 = 8;

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// `q - 1` spread over `(0, 1)` with both ends stressed.
fn sample_q(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..3) {
        0 => 1.0 + log_uniform(rng, 1e-6, 1.0),
        1 => 2.0 - log_uniform(rng, 1e-6, 1.0),
        _ => rng.random_range(1.0..2.0),
    }
    .clamp(1.0 + 1e-9, 2.0 - 1e-9)
}

fn sample_p(rng: &mut ChaCha8Rng, p_max: f64) -> f64 {
    if rng.random_bool(0.5) {
        1.0 + log_uniform(rng, 1e-6, p_max - 1.0)
    } else {
        rng.random_range(1.0..p_max).max(1.0 + 1e-9)
    }
}

fn sample_length(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if rng.random_bool(0.5) {
        log_uniform(rng, lo, hi)
    } else {
        rng.random_range(lo..hi)
    }
}

type Params = Vec<f64>;

struct ScalarGap {
    names: &'static [&'static str],
    sample: fn(&mut ChaCha8Rng, &DomainSpec) -> Params,
    eval: fn(&Params) -> Result<f64>,
}

fn out_sample(rng: &mut ChaCha8Rng, dom: &DomainSpec) -> Params {
    let a = sample_length(rng, dom.min_length, 0.5);
    let b = match rng.random_range(0..3) {
        0 => a,
        1 => 1.0 - a,
        _ => sample_length(rng, a, (1.0 - a).max(a * (1.0 + 1e-12))).min(1.0 - a),
    }
    .max(a);
    let q = sample_q(rng);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mag = match rng.random_range(0..4) {
        0 => a,
        1 => rng.random_range(a..b.max(a * (1.0 + 1e-12))),
        2 => b,
        _ => a * (1.0 + log_uniform(rng, 1e-9, 2.0 / a)),
    };
    vec![a, b, q, sign * mag]
}

fn in_sample(rng: &mut ChaCha8Rng, dom: &DomainSpec) -> Params {
    let a = sample_length(rng, dom.min_length, 1.0);
    let b = if rng.random_bool(0.3) {
        a
    } else {
        a * (1.0 + log_uniform(rng, 1e-9, 1e3))
    };
    let q = sample_q(rng);
    let t = match rng.random_range(0..4) {
        0 => 0.0,
        1 => 1.0 - log_uniform(rng, 1e-12, 1.0),
        2 => -(1.0 - log_uniform(rng, 1e-12, 1.0)),
        _ => rng.random_range(-1.0..1.0),
    };
    vec![a, b, q, t * a]
}

fn two_sample(rng: &mut ChaCha8Rng, dom: &DomainSpec) -> Params {
    let p = sample_p(rng, dom.p_max.max(4.0));
    let x = match rng.random_range(0..3) {
        0 => 2.0,
        1 => 2.0 + log_uniform(rng, 1e-9, 1.0),
        _ => 2.0 + log_uniform(rng, 1e-3, 1e4),
    };
    vec![p, x]
}

fn scalar_gap(id: GapId) -> Option<ScalarGap> {
    Some(match id {
        GapId::Out => ScalarGap {
            names: &["a", "b", "q", "x"],
            sample: out_sample,
            eval: |v| gap_out(v[0], v[1], v[2], v[3]),
        },
        GapId::In => ScalarGap {
            names: &["a", "b", "q", "x"],
            sample: in_sample,
            eval: |v| gap_in(v[0], v[1], v[2], v[3]),
        },
        GapId::TwoVariable => ScalarGap {
            names: &["p", "x"],
            sample: two_sample,
            eval: |v| gap_twovariable(v[0], v[1]),
        },
        _ => return None,
    })
}

#[derive(Debug, Clone)]
struct ShardResult {
    samples: usize,
    violations: usize,
    min_gap: f64,
    argmin: BTreeMap<String, f64>,
}

impl ShardResult {
    fn new() -> Self {
        ShardResult {
            samples: 0,
            violations: 0,
            min_gap: f64::INFINITY,
            argmin: BTreeMap::new(),
        }
    }

    fn record(&mut self, gap: f64, args: impl FnOnce() -> BTreeMap<String, f64>) -> bool {
        self.samples += 1;
        if gap < -GAP_TOL {
            self.violations += 1;
        }
        if gap < self.min_gap {
            self.min_gap = gap;
            self.argmin = args();
            true
        } else {
            false
        }
    }
}

fn named(names: &[&str], v: &[f64]) -> BTreeMap<String, f64> {
    names
        .iter()
        .map(|n| n.to_string())
        .zip(v.iter().copied())
        .collect()
}

fn run_scalar(g: &ScalarGap, budget: usize, rng: &mut ChaCha8Rng, dom: &DomainSpec) -> ShardResult {
    let mut res = ShardResult::new();
    let global = budget - budget / 5;
    let max_draws = 20 * budget.max(1);
    let mut draws = 0;
    let mut best: Option<Params> = None;
    while res.samples < global && draws < max_draws {
        draws += 1;
        let v = (g.sample)(rng, dom);
        if let Ok(gap) = (g.eval)(&v) {
            if res.record(gap, || named(g.names, &v)) {
                best = Some(v);
            }
        }
    }
    // local refinement: shrinking multiplicative jitter around the incumbent
    let mut scale = 0.1;
    let mut k = 0usize;
    while res.samples < budget && draws < max_draws {
        draws += 1;
        let Some(center) = best.clone() else { break };
        let v: Params = center
            .iter()
            .map(|&c| c * (1.0 + scale * rng.random_range(-1.0..1.0)))
            .collect();
        if let Ok(gap) = (g.eval)(&v) {
            if res.record(gap, || named(g.names, &v)) {
                best = Some(v);
            }
        }
        k += 1;
        if k % 64 == 0 {
            scale = (scale * 0.5).max(1e-9);
        }
    }
    res
}

/// A random set with distinct knots, at least `min_len` points, and total
/// variation at most `tv` when `tv` is finite.
fn random_set(rng: &mut ChaCha8Rng, min_len: usize, dom: &DomainSpec, tv: f64) -> SampleSet {
    let k = rng.random_range(min_len..=8);
    let mut us: Vec<f64> = Vec::with_capacity(k);
    while us.len() < k {
        let u = match rng.random_range(0..4) {
            0 if !us.is_empty() => {
                let base = us[rng.random_range(0..us.len())];
                (base
                    + sample_length(rng, dom.min_length, 0.1)
                        * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .clamp(0.0, 1.0)
            }
            1 => {
                if rng.random_bool(0.5) {
                    0.0
                } else {
                    1.0
                }
            }
            _ => rng.random_range(0.0..=1.0),
        };
        if !us.contains(&u) {
            us.push(u);
        }
    }
    us.sort_by(f64::total_cmp);
    let mut vs: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    if tv.is_finite() {
        let total: f64 = vs.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let target = tv * rng.random_range(0.0..=1.0);
        if total > 0.0 {
            let s = target / total;
            vs.iter_mut().for_each(|v| *v *= s);
        }
    }
    SampleSet::from_pairs(us.into_iter().zip(vs)).expect("distinct knots in [0, 1]")
}

fn fresh_x(rng: &mut ChaCha8Rng, s: &SampleSet, dom: &DomainSpec) -> f64 {
    loop {
        let x = match rng.random_range(0..3) {
            0 => {
                let pts = s.points();
                let base = pts[rng.random_range(0..pts.len())].u;
                let off = sample_length(rng, dom.min_length, 0.2);
                (base + if rng.random_bool(0.5) { off } else { -off }).clamp(0.0, 1.0)
            }
            _ => rng.random_range(0.0..=1.0),
        };
        if !matches!(s.locate(x), Location::Knot(_)) {
            return x;
        }
    }
}

/// Offset from the interpolant spanning many scales relative to `|m| d`.
fn offset(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    match rng.random_range(0..5) {
        0 => 0.0,
        1 => sign * scale * log_uniform(rng, 1e-6, 1.0),
        2 => sign * scale * rng.random_range(0.5..2.0),
        _ => sign * log_uniform(rng, 1e-6, 2.0),
    }
}

fn run_dichotomy(budget: usize, rng: &mut ChaCha8Rng, dom: &DomainSpec) -> ShardResult {
    let mut res = ShardResult::new();
    for _ in 0..budget {
        let s = random_set(rng, 1, dom, f64::INFINITY);
        let q = sample_q(rng);
        let x = fresh_x(rng, &s, dom);
        let m = s.slope_at(x).unwrap_or(0.0);
        let d = s.nearest_gap(x).unwrap_or(1.0);
        let y = s.eval_unchecked(x) + offset(rng, m.abs() * d);
        let Ok(pt) = SamplePoint::new(x, y) else {
            continue;
        };
        if let Ok(r) = check_dichotomy(&s, pt, q) {
            res.record(r.gap(), || {
                named(
                    &["x", "y", "q", "slope", "d", "c", "delta_j", "points"],
                    &[x, y, q, r.slope, r.d, r.c, r.delta_j, s.len() as f64],
                )
            });
        }
    }
    res
}

fn run_h_increment(budget: usize, rng: &mut ChaCha8Rng, dom: &DomainSpec) -> ShardResult {
    let mut res = ShardResult::new();
    for _ in 0..budget {
        let s = random_set(rng, 2, dom, 1.0);
        let p = sample_p(rng, dom.p_max);
        let x = fresh_x(rng, &s, dom);
        let m = s.slope_at(x).unwrap_or(0.0);
        let d = s.nearest_gap(x).unwrap_or(1.0);
        let y = s.eval_unchecked(x) + offset(rng, m.abs() * d);
        let Ok(pt) = SamplePoint::new(x, y) else {
            continue;
        };
        if let Ok(gap) = gap_h_increment(&s, pt, p) {
            res.record(gap, || {
                named(&["x", "y", "p", "slope", "d"], &[x, y, p, m, d])
            });
        }
    }
    res
}

/// A sequence whose every prefix has total variation at most 1.
pub fn random_tv_sequence(rng: &mut ChaCha8Rng, len: usize) -> Vec<SamplePoint> {
    let mut set = SampleSet::new();
    let mut seq = Vec::with_capacity(len);
    let v0 = rng.random_range(-0.5..0.5);
    while seq.len() < len {
        let x: f64 = if set.is_empty() || rng.random_bool(0.7) {
            rng.random_range(0.0..=1.0)
        } else {
            let pts = set.points();
            let base = pts[rng.random_range(0..pts.len())].u;
            (base + log_uniform(rng, 1e-6, 0.1) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .clamp(0.0, 1.0)
        };
        if matches!(set.locate(x), Location::Knot(_)) {
            continue;
        }
        let y = match set.feasible_reply_interval(x, ActionExponent::Finite(1.0), 1.0) {
            Ok(FeasibleInterval::Unbounded) => v0,
            Ok(FeasibleInterval::Bounded { lo, hi }) => match rng.random_range(0..3) {
                0 => lo,
                1 => hi,
                _ => rng.random_range(lo..=hi),
            },
            Err(_) => set.eval_unchecked(x),
        };
        let pt = SamplePoint { u: x, v: y };
        set.insert_mut(pt).expect("fresh knot");
        seq.push(pt);
    }
    seq
}

fn run_cumulative(budget: usize, rng: &mut ChaCha8Rng, dom: &DomainSpec) -> ShardResult {
    let mut res = ShardResult::new();
    for _ in 0..budget {
        let p = sample_p(rng, dom.p_max);
        let seq = random_tv_sequence(rng, dom.sequence_len);
        if let Ok(c) = check_cumulative(&seq, p) {
            res.record(c.bound - c.sum, || {
                named(&["p", "sum", "bound"], &[p, c.sum, c.bound])
            });
        }
    }
    res
}

/// Searches `budget` instances of one inequality for values below `-GAP_TOL`.
pub fn search_near_violation(id: GapId, budget: usize, seed: u64) -> GapReport {
    search_near_violation_in(id, &DomainSpec::default(), budget, seed)
}

pub fn search_near_violation_in(
    id: GapId,
    dom: &DomainSpec,
    budget: usize,
    seed: u64,
) -> GapReport {
    let shards: Vec<ShardResult> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let share =
                budget / SHARDS as usize + usize::from((shard as usize) < budget % SHARDS as usize);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(SHARDS).wrapping_add(shard));
            match scalar_gap(id) {
                Some(g) => run_scalar(&g, share, &mut rng, dom),
                None => match id {
                    GapId::Dichotomy => run_dichotomy(share, &mut rng, dom),
                    GapId::HIncrement => run_h_increment(share, &mut rng, dom),
                    GapId::Cumulative => run_cumulative(share, &mut rng, dom),
                    _ => unreachable!(),
                },
            }
        })
        .collect();
    let mut total = ShardResult::new();
    for s in shards {
        total.samples += s.samples;
        total.violations += s.violations;
        if s.min_gap < total.min_gap {
            total.min_gap = s.min_gap;
            total.argmin = s.argmin;
        }
    }
    GapReport {
        gap: id,
        seed,
        samples: total.samples,
        min_gap: total.min_gap,
        argmin: total.argmin,
        violations: total.violations,
        tolerance: GAP_TOL,
        flagged: total.violations > 0,
    }
}
