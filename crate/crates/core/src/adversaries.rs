//! Adversaries for the learning game.
//!
//! Every adversary answers queries one at a time and, when the game ends,
//! discloses which answers were lies together with a truthful point set that
//! witnesses membership of the hidden function in the action class.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolant::{
    check_unit, ActionExponent, FeasibleInterval, Location, SamplePoint, SampleSet,
};

/// What an adversary reveals once the game is over.
#[derive(Debug, Clone, PartialEq)]
pub struct Disclosure {
    /// One flag per trial.
    pub lies: Vec<bool>,
    /// Ground truth: its interpolant is the hidden function.
    pub ground_truth: SampleSet,
}

pub trait Adversary {
    fn name(&self) -> &'static str;

    /// Next input, given the points revealed so far as `(x, revealed)`.
    fn next_query(&mut self, history: &[(f64, f64)]) -> Result<f64>;

    /// Value revealed at `x` after seeing the prediction.
    fn reveal(&mut self, x: f64, prediction: f64) -> Result<f64>;

    fn done(&self) -> bool {
        false
    }

    fn finalize(&mut self) -> Disclosure;
}

/// How the greedy adversary chooses inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QueryPolicy {
    WidestGapMidpoint,
    UniformRandom,
    FixedSequence {
        #[serde(default)]
        inputs: Vec<f64>,
    },
}

impl QueryPolicy {
    pub fn id(&self) -> &'static str {
        match self {
            QueryPolicy::WidestGapMidpoint => "widest-gap-midpoint",
            QueryPolicy::UniformRandom => "uniform-random",
            QueryPolicy::FixedSequence { .. } => "fixed-sequence",
        }
    }
}

/// Fractional parts of `k / phi`, a low-discrepancy sequence of distinct inputs.
pub fn golden_sequence(n: usize) -> Vec<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    (1..=n).map(|k| (k as f64 * inv_phi).fract()).collect()
}

/// Endpoint of `interval` farthest from `prediction`; ties go to the lower one.
pub fn farthest_endpoint(interval: FeasibleInterval, prediction: f64) -> f64 {
    match interval {
        FeasibleInterval::Unbounded => 0.0,
        FeasibleInterval::Bounded { lo, hi } => {
            if (hi - prediction).abs() > (lo - prediction).abs() {
                hi
            } else {
                lo
            }
        }
    }
}

/// The greedy reply: the feasible value farthest from the prediction. The
/// first reply on an empty set is 0.
pub fn greedy_reveal(
    truthful: &SampleSet,
    x: f64,
    prediction: f64,
    q: ActionExponent,
    budget: f64,
) -> Result<f64> {
    let interval = truthful.feasible_reply_interval(x, q, budget)?;
    Ok(farthest_endpoint(interval, prediction))
}

#[derive(Debug, Clone)]
struct QuerySource {
    policy: QueryPolicy,
    rng: ChaCha8Rng,
    cursor: usize,
}

impl QuerySource {
    fn new(policy: QueryPolicy, seed: u64) -> Self {
        QuerySource {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cursor: 0,
        }
    }

    fn next(&mut self, known: &SampleSet) -> Result<f64> {
        match &self.policy {
            QueryPolicy::WidestGapMidpoint => Ok(widest_gap_midpoint(known)),
            QueryPolicy::UniformRandom => {
                for _ in 0..1000 {
                    let x: f64 = self.rng.random();
                    if !matches!(known.locate(x), Location::Knot(_)) {
                        return Ok(x);
                    }
                }
                Err(Error::Numerical("could not draw a fresh input".into()))
            }
            QueryPolicy::FixedSequence { inputs } => {
                let x = if inputs.is_empty() {
                    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
                    ((self.cursor + 1) as f64 * inv_phi).fract()
                } else {
                    *inputs.get(self.cursor).ok_or_else(|| {
                        Error::InvalidParameter("fixed query sequence exhausted".into())
                    })?
                };
                self.cursor += 1;
                check_unit(x)?;
                Ok(x)
            }
        }
    }
}

/// Midpoint of the widest gap among `{0} ∪ U ∪ {1}`, leftmost on ties; 0.5
/// when nothing is known.
pub fn widest_gap_midpoint(known: &SampleSet) -> f64 {
    if known.is_empty() {
        return 0.5;
    }
    let mut edges = Vec::with_capacity(known.len() + 2);
    edges.push(0.0);
    edges.extend(known.iter().map(|p| p.u));
    edges.push(1.0);
    edges.dedup();
    let mut best = (0.0, 0.5);
    for w in edges.windows(2) {
        let width = w[1] - w[0];
        if width > best.0 {
            best = (width, 0.5 * (w[0] + w[1]));
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyConfig {
    pub query_policy: QueryPolicy,
    #[serde(default = "default_budget")]
    pub budget: f64,
}

fn default_budget() -> f64 {
    1.0
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            query_policy: QueryPolicy::WidestGapMidpoint,
            budget: 1.0,
        }
    }
}

/// Truthful adversary maximising each error subject to the action budget.
#[derive(Debug, Clone)]
pub struct Greedy {
    q: ActionExponent,
    budget: f64,
    queries: QuerySource,
    truthful: SampleSet,
    trials: usize,
}

impl Greedy {
    pub fn new(cfg: GreedyConfig, q: ActionExponent, seed: u64) -> Result<Self> {
        if !(cfg.budget >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "budget must be non-negative, got {}",
                cfg.budget
            )));
        }
        Ok(Greedy {
            q: q.validate()?,
            budget: cfg.budget,
            queries: QuerySource::new(cfg.query_policy, seed),
            truthful: SampleSet::new(),
            trials: 0,
        })
    }

    pub fn truthful(&self) -> &SampleSet {
        &self.truthful
    }
}

impl Adversary for Greedy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn next_query(&mut self, _history: &[(f64, f64)]) -> Result<f64> {
        self.queries.next(&self.truthful)
    }

    fn reveal(&mut self, x: f64, prediction: f64) -> Result<f64> {
        if let Some(v) = self.truthful.value_at_knot(x) {
            self.trials += 1;
            return Ok(v);
        }
        let y = greedy_reveal(&self.truthful, x, prediction, self.q, self.budget)?;
        self.truthful.insert_mut(SamplePoint::new(x, y)?)?;
        self.trials += 1;
        Ok(y)
    }

    fn finalize(&mut self) -> Disclosure {
        Disclosure {
            lies: vec![false; self.trials],
            ground_truth: self.truthful.clone(),
        }
    }
}

/// Queries 0 then 1, each `2 eta + 1` times, splitting its lies between the
/// two candidate values at 1 and committing to whichever hurts more.
#[derive(Debug, Clone)]
pub struct NoisyLowerBound {
    eta: usize,
    p: f64,
    t: usize,
    predictions_at_one: Vec<f64>,
    revealed: Vec<f64>,
    truth: Option<f64>,
}

impl NoisyLowerBound {
    pub fn new(eta: usize, p: f64) -> Result<Self> {
        if eta == 0 {
            return Err(Error::InvalidParameter("eta must be at least 1".into()));
        }
        Ok(NoisyLowerBound {
            eta,
            p,
            t: 0,
            predictions_at_one: Vec::new(),
            revealed: Vec::new(),
            truth: None,
        })
    }

    fn block(&self) -> usize {
        2 * self.eta + 1
    }
}

impl Adversary for NoisyLowerBound {
    fn name(&self) -> &'static str {
        "noisy-lb"
    }

    fn next_query(&mut self, _history: &[(f64, f64)]) -> Result<f64> {
        Ok(if self.t < self.block() { 0.0 } else { 1.0 })
    }

    fn reveal(&mut self, _x: f64, prediction: f64) -> Result<f64> {
        let block = self.block();
        let y = if self.t < block {
            0.0
        } else {
            let k = self.t - block;
            self.predictions_at_one.push(prediction);
            if k < self.eta {
                -1.0
            } else if k < 2 * self.eta {
                1.0
            } else {
                let cost = |s: f64| -> f64 {
                    self.predictions_at_one
                        .iter()
                        .map(|yh| (yh - s).abs().powf(self.p))
                        .sum()
                };
                let s = if cost(1.0) > cost(-1.0) { 1.0 } else { -1.0 };
                self.truth = Some(s);
                s
            }
        };
        self.revealed.push(y);
        self.t += 1;
        Ok(y)
    }

    fn done(&self) -> bool {
        self.t >= 2 * self.block()
    }

    fn finalize(&mut self) -> Disclosure {
        let s = self.truth.unwrap_or(1.0);
        let block = self.block();
        let lies = self
            .revealed
            .iter()
            .enumerate()
            .map(|(t, &y)| t >= block && y != s)
            .collect();
        let mut ground_truth = SampleSet::new();
        ground_truth
            .insert_mut(SamplePoint { u: 0.0, v: 0.0 })
            .expect("fresh set");
        if self.t > block {
            ground_truth
                .insert_mut(SamplePoint { u: 1.0, v: s })
                .expect("distinct knots");
        }
        Disclosure { lies, ground_truth }
    }
}

/// Reveals 0 and `c` `eta` times each at distinct inputs, then commits to a
/// constant function far from the next prediction.
#[derive(Debug, Clone)]
pub struct InsufficientInit {
    eta: usize,
    c: f64,
    t: usize,
    revealed: Vec<f64>,
    committed: Option<f64>,
}

impl InsufficientInit {
    pub fn new(eta: usize, c: f64) -> Result<Self> {
        if eta == 0 {
            return Err(Error::InvalidParameter("eta must be at least 1".into()));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "C must be positive, got {c}"
            )));
        }
        Ok(InsufficientInit {
            eta,
            c,
            t: 0,
            revealed: Vec::new(),
            committed: None,
        })
    }

    /// The constant committed at the decisive trial.
    pub fn committed(&self) -> Option<f64> {
        self.committed
    }
}

impl Adversary for InsufficientInit {
    fn name(&self) -> &'static str {
        "insufficient-init"
    }

    fn next_query(&mut self, _history: &[(f64, f64)]) -> Result<f64> {
        let n = 2 * self.eta + 1;
        Ok((self.t as f64 / n as f64).min(1.0))
    }

    fn reveal(&mut self, _x: f64, prediction: f64) -> Result<f64> {
        let y = if self.t < self.eta {
            0.0
        } else if self.t < 2 * self.eta {
            self.c
        } else {
            let f = *self.committed.get_or_insert(if prediction >= self.c / 2.0 {
                0.0
            } else {
                self.c
            });
            f
        };
        self.revealed.push(y);
        self.t += 1;
        Ok(y)
    }

    fn done(&self) -> bool {
        self.t > 2 * self.eta
    }

    fn finalize(&mut self) -> Disclosure {
        let f = self.committed.unwrap_or(0.0);
        let lies = self.revealed.iter().map(|&y| y != f).collect();
        let ground_truth = SampleSet::from_pairs([(0.0, f)]).expect("valid point");
        Disclosure { lies, ground_truth }
    }
}

/// Greedy adversary on a hidden truth that lies at up to `eta` random trials.
#[derive(Debug, Clone)]
pub struct RandomLiar {
    inner: Greedy,
    lie_trials: Vec<usize>,
    magnitude: f64,
    rng: ChaCha8Rng,
    t: usize,
    lies: Vec<bool>,
}

impl RandomLiar {
    /// Lies are placed uniformly among the first `horizon` trials.
    pub fn new(
        eta: usize,
        q: ActionExponent,
        seed: u64,
        lie_magnitude: f64,
        horizon: usize,
        greedy: GreedyConfig,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&lie_magnitude) {
            return Err(Error::InvalidParameter(format!(
                "lie magnitude must be in [0, 1], got {lie_magnitude}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let count = eta.min(horizon);
        let mut lie_trials = sample(&mut rng, horizon, count).into_vec();
        lie_trials.sort_unstable();
        Ok(RandomLiar {
            inner: Greedy::new(greedy, q, seed)?,
            lie_trials,
            magnitude: lie_magnitude,
            rng,
            t: 0,
            lies: Vec::new(),
        })
    }

    pub fn lie_trials(&self) -> &[usize] {
        &self.lie_trials
    }
}

impl Adversary for RandomLiar {
    fn name(&self) -> &'static str {
        "random-liar"
    }

    fn next_query(&mut self, history: &[(f64, f64)]) -> Result<f64> {
        self.inner.next_query(history)
    }

    fn reveal(&mut self, x: f64, prediction: f64) -> Result<f64> {
        let truth = self.inner.reveal(x, prediction)?;
        let lie = self.lie_trials.binary_search(&self.t).is_ok();
        let y = if lie {
            let sign = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
            truth + sign * self.magnitude
        } else {
            truth
        };
        self.lies.push(lie && y != truth);
        self.t += 1;
        Ok(y)
    }

    fn finalize(&mut self) -> Disclosure {
        Disclosure {
            lies: self.lies.clone(),
            ground_truth: self.inner.truthful.clone(),
        }
    }
}

/// Truthful scripted adversary answering fixed queries with fixed values.
#[derive(Debug, Clone)]
pub struct Script {
    steps: Vec<(f64, f64)>,
    t: usize,
}

impl Script {
    pub fn new(steps: Vec<(f64, f64)>) -> Result<Self> {
        for &(x, y) in &steps {
            SamplePoint::new(x, y)?;
        }
        Ok(Script { steps, t: 0 })
    }
}

impl Adversary for Script {
    fn name(&self) -> &'static str {
        "script"
    }

    fn next_query(&mut self, _history: &[(f64, f64)]) -> Result<f64> {
        self.steps
            .get(self.t)
            .map(|s| s.0)
            .ok_or_else(|| Error::InvalidParameter("script exhausted".into()))
    }

    fn reveal(&mut self, _x: f64, _prediction: f64) -> Result<f64> {
        let y = self.steps[self.t].1;
        self.t += 1;
        Ok(y)
    }

    fn done(&self) -> bool {
        self.t >= self.steps.len()
    }

    fn finalize(&mut self) -> Disclosure {
        let mut truth = SampleSet::new();
        for &(x, y) in &self.steps[..self.t] {
            // repeated inputs keep the last value
            let _ = truth.upsert(SamplePoint { u: x, v: y });
        }
        Disclosure {
            lies: vec![false; self.t],
            ground_truth: truth,
        }
    }
}

/// Adversary selection for configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversarySpec {
    Greedy {
        #[serde(default = "default_policy")]
        query_policy: QueryPolicy,
        #[serde(default = "default_budget")]
        budget: f64,
    },
    NoisyLb,
    InsufficientInit {
        c: f64,
    },
    RandomLiar {
        #[serde(default = "default_policy")]
        query_policy: QueryPolicy,
        #[serde(default = "default_magnitude")]
        lie_magnitude: f64,
    },
    Script {
        steps: Vec<(f64, f64)>,
    },
}

fn default_policy() -> QueryPolicy {
    QueryPolicy::WidestGapMidpoint
}

fn default_magnitude() -> f64 {
    1.0
}

impl AdversarySpec {
    pub fn id(&self) -> &'static str {
        match self {
            AdversarySpec::Greedy { .. } => "greedy",
            AdversarySpec::NoisyLb => "noisy-lb",
            AdversarySpec::InsufficientInit { .. } => "insufficient-init",
            AdversarySpec::RandomLiar { .. } => "random-liar",
            AdversarySpec::Script { .. } => "script",
        }
    }

    pub fn build(
        &self,
        eta: usize,
        p: f64,
        q: ActionExponent,
        seed: u64,
        rounds: usize,
    ) -> Result<Box<dyn Adversary + Send>> {
        Ok(match self {
            AdversarySpec::Greedy {
                query_policy,
                budget,
            } => Box::new(Greedy::new(
                GreedyConfig {
                    query_policy: query_policy.clone(),
                    budget: *budget,
                },
                q,
                seed,
            )?),
            AdversarySpec::NoisyLb => Box::new(NoisyLowerBound::new(eta, p)?),
            AdversarySpec::InsufficientInit { c } => Box::new(InsufficientInit::new(eta, *c)?),
            AdversarySpec::RandomLiar {
                query_policy,
                lie_magnitude,
            } => Box::new(RandomLiar::new(
                eta,
                q,
                seed,
                *lie_magnitude,
                rounds,
                GreedyConfig {
                    query_policy: query_policy.clone(),
                    budget: 1.0,
                },
            )?),
            AdversarySpec::Script { steps } => Box::new(Script::new(steps.clone())?),
        })
    }
}
