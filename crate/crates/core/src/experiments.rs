//! Batch experiments: parameter sweeps, the initial-round band check, the
//! lemma suite and report aggregation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversaries::{AdversarySpec, QueryPolicy};
use crate::engine::{run_game, GameConfig, Summary, Transcript};
use crate::error::{Error, Result};
use crate::interpolant::{ActionExponent, FeasibleInterval, Location, SamplePoint, SampleSet};
use crate::learners::{median_center, LearnerSpec, ResetScope};
use crate::lemma_oracle::{
    check_cumulative, random_tv_sequence, search_near_violation, GapId, GapReport, GAP_TOL,
};

pub fn all_policies() -> Vec<QueryPolicy> {
    vec![
        QueryPolicy::WidestGapMidpoint,
        QueryPolicy::UniformRandom,
        QueryPolicy::FixedSequence { inputs: Vec::new() },
    ]
}

fn staged() -> LearnerSpec {
    LearnerSpec::Staged {
        threshold: None,
        reset_scope: ResetScope::Full,
    }
}

fn write_comment(out: &mut impl Write, lines: &[&str]) -> Result<()> {
    for l in lines {
        writeln!(out, "# {l}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSweepSpec {
    #[serde(default = "default_eps_grid")]
    pub eps: Vec<f64>,
    #[serde(default = "default_eps_rounds")]
    pub rounds: usize,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "all_policies")]
    pub policies: Vec<QueryPolicy>,
    /// Exponent used to replay each transcript's errors.
    #[serde(default = "default_replay_p")]
    pub replay_p: f64,
}

fn default_eps_grid() -> Vec<f64> {
    vec![0.1, 0.25, 0.5]
}
fn default_eps_rounds() -> usize {
    5000
}
fn default_seeds() -> usize {
    5
}
fn default_replay_p() -> f64 {
    2.0
}

impl Default for EpsilonSweepSpec {
    fn default() -> Self {
        EpsilonSweepSpec {
            eps: default_eps_grid(),
            rounds: default_eps_rounds(),
            seeds: default_seeds(),
            policies: all_policies(),
            replay_p: default_replay_p(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub eps: f64,
    pub policy: String,
    pub seed: u64,
    pub observed: f64,
    pub bound: f64,
    pub ratio: f64,
    pub replay_p: f64,
    pub replay_total: f64,
    pub holds: bool,
}

/// LININT against the greedy adversary at `p = q = 1 + eps`.
pub fn sweep_epsilon(spec: &EpsilonSweepSpec, seed: u64) -> Result<Vec<EpsilonRow>> {
    for &e in &spec.eps {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps must lie in (0, 1), got {e}"
            )));
        }
    }
    let cells: Vec<(f64, QueryPolicy, u64)> = spec
        .eps
        .iter()
        .flat_map(|&e| {
            spec.policies.iter().flat_map(move |pol| {
                (0..spec.seeds as u64).map(move |s| (e, pol.clone(), seed.wrapping_add(s)))
            })
        })
        .collect();
    cells
        .par_iter()
        .map(|(e, pol, s)| {
            let q = 1.0 + e;
            let cfg = GameConfig::standard(
                q,
                q,
                spec.rounds,
                LearnerSpec::Linint,
                AdversarySpec::Greedy {
                    query_policy: pol.clone(),
                    budget: 1.0,
                },
                *s,
            );
            let t = run_game(&cfg)?;
            let bound = 6.0 / e;
            let replay_total = replay(&t, spec.replay_p);
            Ok(EpsilonRow {
                eps: *e,
                policy: pol.id().to_string(),
                seed: *s,
                observed: t.counted_total,
                bound,
                ratio: t.counted_total / bound,
                replay_p: spec.replay_p,
                replay_total,
                holds: t.counted_total <= bound + 1e-6,
            })
        })
        .collect()
}

/// Counted errors of a transcript raised to another exponent.
pub fn replay(t: &Transcript, p: f64) -> f64 {
    t.trials
        .iter()
        .filter(|r| r.counted)
        .map(|r| r.raw_error.powf(p))
        .sum()
}

pub fn write_epsilon_csv(rows: &[EpsilonRow], mut out: impl Write) -> Result<()> {
    write_comment(
        &mut out,
        &[
            "LININT vs greedy at p = q = 1 + eps",
            "plot: eps (col 1) against observed (col 4) and bound (col 5)",
        ],
    )?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSweepSpec {
    #[serde(default = "default_etas")]
    pub etas: Vec<usize>,
    #[serde(default = "default_two")]
    pub p: f64,
    #[serde(default = "default_two_q")]
    pub q: ActionExponent,
    #[serde(default = "default_eta_rounds")]
    pub rounds: usize,
    /// Random-liar games per eta.
    #[serde(default = "default_liars")]
    pub liar_seeds: usize,
    #[serde(default = "default_magnitude")]
    pub lie_magnitude: f64,
    #[serde(default = "all_policies")]
    pub policies: Vec<QueryPolicy>,
}

fn default_etas() -> Vec<usize> {
    vec![0, 1, 2, 3]
}
fn default_two() -> f64 {
    2.0
}
fn default_two_q() -> ActionExponent {
    ActionExponent::Finite(2.0)
}
fn default_eta_rounds() -> usize {
    2000
}
fn default_liars() -> usize {
    30
}
fn default_magnitude() -> f64 {
    1.0
}

impl Default for EtaSweepSpec {
    fn default() -> Self {
        EtaSweepSpec {
            etas: default_etas(),
            p: 2.0,
            q: default_two_q(),
            rounds: default_eta_rounds(),
            liar_seeds: default_liars(),
            lie_magnitude: default_magnitude(),
            policies: all_policies(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaRow {
    pub eta: usize,
    pub lb_linint: f64,
    pub lb_staged: f64,
    pub lb_bound: f64,
    pub ub_observed: f64,
    pub ub_bound: f64,
    pub max_resets: usize,
    pub games: usize,
    pub holds: bool,
}

/// Scripted lower bound against both learners and the staged learner
/// against liar ensembles. At `eta = 0` the standard game is played instead.
pub fn sweep_eta(spec: &EtaSweepSpec, seed: u64) -> Result<Vec<EtaRow>> {
    if !(spec.p >= 2.0 && spec.q.is_at_least(2.0)) {
        return Err(Error::InvalidParameter("eta sweep needs p, q >= 2".into()));
    }
    spec.etas
        .iter()
        .map(|&eta| eta_row(spec, eta, seed))
        .collect()
}

fn eta_row(spec: &EtaSweepSpec, eta: usize, seed: u64) -> Result<EtaRow> {
    let mk = |learner: LearnerSpec, adversary: AdversarySpec, s: u64| {
        GameConfig::noisy(spec.p, spec.q, eta, spec.rounds, learner, adversary, s)
    };
    if eta == 0 {
        let totals: Vec<f64> = spec
            .policies
            .par_iter()
            .map(|pol| {
                let cfg = mk(
                    LearnerSpec::Linint,
                    AdversarySpec::Greedy {
                        query_policy: pol.clone(),
                        budget: 1.0,
                    },
                    seed,
                );
                run_game(&cfg).map(|t| t.counted_total)
            })
            .collect::<Result<_>>()?;
        let worst = totals.iter().copied().fold(0.0, f64::max);
        return Ok(EtaRow {
            eta,
            lb_linint: worst,
            lb_staged: f64::NAN,
            lb_bound: 1.0,
            ub_observed: worst,
            ub_bound: 1.0,
            max_resets: 0,
            games: totals.len(),
            holds: worst <= 1.0 + 1e-9,
        });
    }
    let lb_linint = run_game(&mk(LearnerSpec::Linint, AdversarySpec::NoisyLb, seed))?.counted_total;
    let scripted = run_game(&mk(staged(), AdversarySpec::NoisyLb, seed))?;
    let mut cells = Vec::new();
    for pol in &spec.policies {
        for s in 0..spec.liar_seeds as u64 {
            cells.push(mk(
                staged(),
                AdversarySpec::RandomLiar {
                    query_policy: pol.clone(),
                    lie_magnitude: spec.lie_magnitude,
                },
                seed.wrapping_add(s),
            ));
        }
    }
    let runs: Vec<(f64, usize)> = cells
        .par_iter()
        .map(|cfg| {
            let t = run_game(cfg)?;
            Ok((
                t.counted_total,
                t.stage_count.unwrap_or(1).saturating_sub(1),
            ))
        })
        .collect::<Result<_>>()?;
    let resets_scripted = scripted.stage_count.unwrap_or(1).saturating_sub(1);
    let ub_observed = runs
        .iter()
        .map(|r| r.0)
        .fold(scripted.counted_total, f64::max);
    let max_resets = runs.iter().map(|r| r.1).fold(resets_scripted, usize::max);
    let lb_bound = 2.0 * eta as f64 + 1.0;
    let ub_bound = 12.0 * eta as f64 + 6.0;
    let holds = lb_linint >= lb_bound - 1e-9
        && scripted.counted_total >= lb_bound - 1e-9
        && ub_observed <= ub_bound
        && max_resets <= eta;
    Ok(EtaRow {
        eta,
        lb_linint,
        lb_staged: scripted.counted_total,
        lb_bound,
        ub_observed,
        ub_bound,
        max_resets,
        games: runs.len() + 1,
        holds,
    })
}

pub fn write_eta_csv(rows: &[EtaRow], mut out: impl Write) -> Result<()> {
    write_comment(
        &mut out,
        &[
            "noisy model: forced lower bound and observed upper bound per eta",
            "plot: eta (col 1) against lb_linint, lb_staged, lb_bound (cols 2-4) and ub_observed, ub_bound (cols 5-6)",
        ],
    )?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One randomized check that every true value lies within 1 of the median
/// of the first `2 eta + 1` revelations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandTrial {
    pub eta: usize,
    pub seed: u64,
    pub center: f64,
    pub lies: usize,
    pub truth_action: f64,
    /// Largest `|f(x) - center|` over the truth.
    pub max_offset: f64,
    pub holds: bool,
}

/// Draws a truth with q-action at most 1, reveals `2 eta + 1` of its values
/// with up to `eta` arbitrary lies, and checks the band around the median.
pub fn band_trial(eta: usize, q: f64, extra: usize, seed: u64) -> Result<BandTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = 2 * eta + 1;
    let mut truth = SampleSet::new();
    let mut order = Vec::with_capacity(init + extra);
    let base = rng.random_range(-10.0..10.0);
    while order.len() < init + extra {
        let x: f64 = rng.random_range(0.0..=1.0);
        if matches!(truth.locate(x), Location::Knot(_)) {
            continue;
        }
        let y = match truth.feasible_reply_interval(x, ActionExponent::Finite(q), 1.0)? {
            FeasibleInterval::Unbounded => base,
            FeasibleInterval::Bounded { lo, hi } => match rng.random_range(0..3) {
                0 => lo,
                1 => hi,
                _ => rng.random_range(lo..=hi),
            },
        };
        truth.insert_mut(SamplePoint { u: x, v: y })?;
        order.push((x, y));
    }
    let lies = rng.random_range(0..=eta);
    let liars = rand::seq::index::sample(&mut rng, init, lies).into_vec();
    let revealed: Vec<f64> = order[..init]
        .iter()
        .enumerate()
        .map(|(i, &(_, y))| {
            if liars.contains(&i) {
                let mag = (rng.random_range(-3.0f64..6.0)).exp();
                y + if rng.random_bool(0.5) { mag } else { -mag }
            } else {
                y
            }
        })
        .collect();
    let center = median_center(&revealed, eta)?;
    let max_offset = truth
        .iter()
        .map(|p| (p.v - center).abs())
        .fold(0.0, f64::max);
    let truth_action = truth.q_action(q);
    Ok(BandTrial {
        eta,
        seed,
        center,
        lies,
        truth_action,
        max_offset,
        holds: truth_action <= 1.0 + 1e-9 && max_offset <= 1.0 + 1e-9,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSuiteSpec {
    /// Samples per inequality; missing entries use `default_budget`.
    #[serde(default)]
    pub budgets: BTreeMap<GapId, usize>,
    #[serde(default = "default_lemma_budget")]
    pub default_budget: usize,
    #[serde(default = "default_cumulative_ps")]
    pub cumulative_ps: Vec<f64>,
    #[serde(default = "default_sequences")]
    pub sequences: usize,
    #[serde(default = "default_sequence_len")]
    pub sequence_len: usize,
}

fn default_lemma_budget() -> usize {
    100_000
}
fn default_cumulative_ps() -> Vec<f64> {
    vec![1.1, 1.5, 2.0]
}
fn default_sequences() -> usize {
    1000
}
fn default_sequence_len() -> usize {
    50
}

impl Default for LemmaSuiteSpec {
    fn default() -> Self {
        LemmaSuiteSpec {
            budgets: BTreeMap::new(),
            default_budget: default_lemma_budget(),
            cumulative_ps: default_cumulative_ps(),
            sequences: default_sequences(),
            sequence_len: default_sequence_len(),
        }
    }
}

/// Cumulative bound on `count` random sequences at a fixed exponent.
pub fn cumulative_report(p: f64, count: usize, len: usize, seed: u64) -> Result<GapReport> {
    let results: Vec<(f64, f64)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i));
            let seq = random_tv_sequence(&mut rng, len);
            let c = check_cumulative(&seq, p)?;
            Ok((c.bound - c.sum, c.sum))
        })
        .collect::<Result<_>>()?;
    let (min_gap, sum) =
        results.iter().copied().fold(
            (f64::INFINITY, f64::NAN),
            |a, b| if b.0 < a.0 { b } else { a },
        );
    let violations = results.iter().filter(|r| r.0 < -GAP_TOL).count();
    Ok(GapReport {
        gap: GapId::Cumulative,
        seed,
        samples: results.len(),
        min_gap,
        argmin: BTreeMap::from([
            ("p".to_string(), p),
            ("sum".to_string(), sum),
            ("bound".to_string(), 1.0 / (p - 1.0)),
        ]),
        violations,
        tolerance: GAP_TOL,
        flagged: violations > 0,
    })
}

/// Falsification search over every inequality, plus the cumulative bound
/// at each requested exponent.
pub fn verify_lemmas(spec: &LemmaSuiteSpec, seed: u64) -> Result<Vec<GapReport>> {
    let mut out = Vec::new();
    for id in GapId::ALL {
        if id == GapId::Cumulative {
            continue;
        }
        let budget = spec
            .budgets
            .get(&id)
            .copied()
            .unwrap_or(spec.default_budget);
        out.push(search_near_violation(id, budget, seed));
    }
    for &p in &spec.cumulative_ps {
        if !(p > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cumulative exponent must exceed 1, got {p}"
            )));
        }
        let count = spec
            .budgets
            .get(&GapId::Cumulative)
            .copied()
            .unwrap_or(spec.sequences);
        out.push(cumulative_report(p, count, spec.sequence_len, seed)?);
    }
    Ok(out)
}

/// Aggregate of every result file in a directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub entries: Vec<ReportEntry>,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub file: String,
    pub kind: String,
    pub checks: usize,
    pub violations: usize,
}

fn json_entry(file: &str, text: &str) -> Option<ReportEntry> {
    let entry = |kind: &str, checks: usize, violations: usize| ReportEntry {
        file: file.to_string(),
        kind: kind.to_string(),
        checks,
        violations,
    };
    if let Ok(s) = serde_json::from_str::<Summary>(text) {
        return Some(entry("game", s.bound_checks.len(), s.violations()));
    }
    if let Ok(r) = serde_json::from_str::<Vec<GapReport>>(text) {
        return Some(entry(
            "lemmas",
            r.len(),
            r.iter().filter(|g| g.flagged).count(),
        ));
    }
    if let Ok(r) = serde_json::from_str::<GapReport>(text) {
        return Some(entry("lemma", 1, usize::from(r.flagged)));
    }
    None
}

fn csv_entry(file: &str, text: &str) -> Result<Option<ReportEntry>> {
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let headers = r.headers()?.clone();
    let Some(col) = headers.iter().position(|h| h == "holds") else {
        return Ok(None);
    };
    let mut checks = 0;
    let mut violations = 0;
    for rec in r.records() {
        let rec = rec?;
        checks += 1;
        if rec.get(col) != Some("true") {
            violations += 1;
        }
    }
    Ok(Some(ReportEntry {
        file: file.to_string(),
        kind: "sweep".to_string(),
        checks,
        violations,
    }))
}

/// Reads every summary, lemma report and sweep CSV in `dir`.
pub fn build_report(dir: &Path) -> Result<Report> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut entries = Vec::new();
    for path in names {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let entry = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => json_entry(&name, &fs::read_to_string(&path)?),
            Some("csv") => csv_entry(&name, &fs::read_to_string(&path)?)?,
            _ => None,
        };
        entries.extend(entry);
    }
    if entries.is_empty() {
        return Err(Error::Io(format!("no result files in {}", dir.display())));
    }
    let violations = entries.iter().map(|e| e.violations).sum();
    Ok(Report {
        entries,
        violations,
    })
}

impl Report {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| file | kind | checks | violations |\n|---|---|---|---|\n");
        for e in &self.entries {
            s.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                e.file, e.kind, e.checks, e.violations
            ));
        }
        s.push_str(&format!("\nviolations: {}\n", self.violations));
        s
    }
}
