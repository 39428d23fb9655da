//! Runs learner/adversary games and keeps exact error accounting.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::adversaries::{Adversary, AdversarySpec, Disclosure};
use crate::error::{Error, Result};
use crate::interpolant::{ActionExponent, SamplePoint, SampleSet, ACTION_TOL};
use crate::learners::{Learner, LearnerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicatePolicy {
    #[default]
    Reject,
    AnswerKnown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub p: f64,
    pub q: ActionExponent,
    /// Lie budget; 0 selects the standard protocol.
    #[serde(default)]
    pub eta: usize,
    pub rounds: usize,
    pub learner: LearnerSpec,
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub duplicate_policy: DuplicatePolicy,
    /// Number of leading uncounted trials. Defaults to 1 in the standard
    /// protocol and `2 eta + 1` in the noisy one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
}

impl GameConfig {
    pub fn standard(
        p: f64,
        q: impl Into<ActionExponent>,
        rounds: usize,
        learner: LearnerSpec,
        adversary: AdversarySpec,
        seed: u64,
    ) -> Self {
        GameConfig {
            p,
            q: q.into(),
            eta: 0,
            rounds,
            learner,
            adversary,
            seed,
            duplicate_policy: DuplicatePolicy::Reject,
            warmup: None,
        }
    }

    pub fn noisy(
        p: f64,
        q: impl Into<ActionExponent>,
        eta: usize,
        rounds: usize,
        learner: LearnerSpec,
        adversary: AdversarySpec,
        seed: u64,
    ) -> Self {
        GameConfig {
            eta,
            ..Self::standard(p, q, rounds, learner, adversary, seed)
        }
    }

    pub fn warmup(&self) -> usize {
        self.warmup
            .unwrap_or(if self.eta == 0 { 1 } else { 2 * self.eta + 1 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0) || !self.p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "p must be positive, got {}",
                self.p
            )));
        }
        self.q.validate()?;
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds must be at least 1".into()));
        }
        let noisy_only = matches!(self.learner, LearnerSpec::Staged { .. })
            || matches!(
                self.adversary,
                AdversarySpec::NoisyLb | AdversarySpec::InsufficientInit { .. }
            );
        if noisy_only && self.eta == 0 {
            return Err(Error::InvalidParameter(format!(
                "{} / {} need eta >= 1",
                self.learner.id(),
                self.adversary.id()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub t: usize,
    pub x: f64,
    pub prediction: f64,
    pub revealed: f64,
    pub lie: Option<bool>,
    pub true_value: Option<f64>,
    pub raw_error: f64,
    pub p_power: f64,
    pub counted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub config: GameConfig,
    pub trials: Vec<TrialRecord>,
    pub counted_total: f64,
    pub perceived_total: f64,
    pub legality: Option<bool>,
    pub stage_count: Option<usize>,
    pub finalized: bool,
}

impl Transcript {
    pub fn lie_count(&self) -> usize {
        self.trials.iter().filter(|r| r.lie == Some(true)).count()
    }

    /// Points revealed in trials not flagged as lies.
    pub fn truthful_points(&self) -> Vec<(f64, f64)> {
        self.trials
            .iter()
            .filter(|r| r.lie != Some(true))
            .map(|r| (r.x, r.revealed))
            .collect()
    }

    /// First counted trial, if any.
    pub fn first_counted(&self) -> Option<&TrialRecord> {
        self.trials.iter().find(|r| r.counted)
    }
}

/// Runs the protocol selected by `config.eta`.
pub fn run_game(config: &GameConfig) -> Result<Transcript> {
    if config.eta == 0 {
        run_standard_game(config)
    } else {
        run_noisy_game(config)
    }
}

fn build(config: &GameConfig) -> Result<(Box<dyn Learner + Send>, Box<dyn Adversary + Send>)> {
    config.validate()?;
    let learner = config.learner.build(config.eta, config.p, config.q)?;
    let adversary =
        config
            .adversary
            .build(config.eta, config.p, config.q, config.seed, config.rounds)?;
    Ok((learner, adversary))
}

/// Standard protocol: every revelation is the truth and the revealed set
/// must stay inside the action class.
pub fn run_standard_game(config: &GameConfig) -> Result<Transcript> {
    if config.eta != 0 {
        return Err(Error::InvalidParameter(
            "standard game requires eta = 0".into(),
        ));
    }
    let (learner, adversary) = build(config)?;
    play_standard(config, learner, adversary)
}

/// Standard protocol with caller-supplied players.
pub fn play_standard(
    config: &GameConfig,
    mut learner: Box<dyn Learner + Send>,
    mut adversary: Box<dyn Adversary + Send>,
) -> Result<Transcript> {
    let warmup = config.warmup();
    let mut revealed = SampleSet::new();
    let mut history = Vec::with_capacity(config.rounds);
    let mut trials = Vec::with_capacity(config.rounds);
    let mut last_action = 0.0;
    for t in 0..config.rounds {
        if adversary.done() {
            break;
        }
        let x = adversary.next_query(&history)?;
        let known = revealed.value_at_knot(x);
        if known.is_some() && config.duplicate_policy == DuplicatePolicy::Reject {
            return Err(Error::DuplicateQuery(x));
        }
        let prediction = match known {
            Some(v) => v,
            None => learner.predict(x)?,
        };
        let y = adversary.reveal(x, prediction)?;
        if !y.is_finite() {
            return Err(Error::IllegalAdversary {
                trial: t,
                reason: format!("non-finite revelation {y}"),
            });
        }
        match known {
            Some(v) if v != y => {
                return Err(Error::IllegalAdversary {
                    trial: t,
                    reason: format!("revealed {y} at x = {x}, previously {v}"),
                })
            }
            Some(_) => {}
            None => {
                revealed.insert_mut(SamplePoint::new(x, y)?)?;
                let action = revealed.q_action(config.q);
                if action > 1.0 + ACTION_TOL {
                    return Err(Error::IllegalAdversary {
                        trial: t,
                        reason: format!("q-action of revealed points is {action}"),
                    });
                }
                if action < last_action - ACTION_TOL {
                    return Err(Error::Numerical(format!(
                        "q-action decreased from {last_action} to {action}"
                    )));
                }
                last_action = action;
                learner.observe(x, y)?;
            }
        }
        history.push((x, y));
        let raw_error = (prediction - y).abs();
        trials.push(TrialRecord {
            t,
            x,
            prediction,
            revealed: y,
            lie: None,
            true_value: Some(y),
            raw_error,
            p_power: raw_error.powf(config.p),
            counted: t >= warmup,
        });
    }
    let disclosure = adversary.finalize();
    if let Some(t) = disclosure.lies.iter().position(|&l| l) {
        return Err(Error::IllegalAdversary {
            trial: t,
            reason: "lie in the standard protocol".into(),
        });
    }
    for r in &mut trials {
        r.lie = Some(false);
    }
    let counted_total = counted_sum(&trials);
    Ok(Transcript {
        config: config.clone(),
        trials,
        counted_total,
        perceived_total: counted_total,
        legality: Some(true),
        stage_count: learner.stage_count(),
        finalized: true,
    })
}

/// Noisy protocol: repeated inputs are allowed, and errors are scored
/// against the ground truth the adversary discloses at the end.
pub fn run_noisy_game(config: &GameConfig) -> Result<Transcript> {
    if config.eta == 0 {
        return Err(Error::InvalidParameter(
            "noisy game requires eta >= 1".into(),
        ));
    }
    let (learner, adversary) = build(config)?;
    play_noisy(config, learner, adversary)
}

/// Noisy protocol with caller-supplied players.
pub fn play_noisy(
    config: &GameConfig,
    mut learner: Box<dyn Learner + Send>,
    mut adversary: Box<dyn Adversary + Send>,
) -> Result<Transcript> {
    let warmup = config.warmup();
    let mut history = Vec::with_capacity(config.rounds);
    let mut trials = Vec::with_capacity(config.rounds);
    for t in 0..config.rounds {
        if adversary.done() {
            break;
        }
        let x = adversary.next_query(&history)?;
        let prediction = learner.predict(x)?;
        let y = adversary.reveal(x, prediction)?;
        if !y.is_finite() {
            return Err(Error::IllegalAdversary {
                trial: t,
                reason: format!("non-finite revelation {y}"),
            });
        }
        learner.observe(x, y)?;
        history.push((x, y));
        trials.push(TrialRecord {
            t,
            x,
            prediction,
            revealed: y,
            lie: None,
            true_value: None,
            raw_error: f64::NAN,
            p_power: f64::NAN,
            counted: t >= warmup,
        });
    }
    let disclosure = adversary.finalize();
    let mut transcript = Transcript {
        config: config.clone(),
        trials,
        counted_total: f64::NAN,
        perceived_total: f64::NAN,
        legality: None,
        stage_count: learner.stage_count(),
        finalized: false,
    };
    finalize_noisy(&mut transcript, &disclosure)?;
    Ok(transcript)
}

/// Fills in lie flags, true values and totals from the adversary's disclosure.
pub fn finalize_noisy(transcript: &mut Transcript, disclosure: &Disclosure) -> Result<()> {
    if disclosure.lies.len() != transcript.trials.len() {
        return Err(Error::WrongCount {
            expected: transcript.trials.len(),
            got: disclosure.lies.len(),
        });
    }
    let p = transcript.config.p;
    let truth = &disclosure.ground_truth;
    let mut consistent = true;
    for (r, &lie) in transcript.trials.iter_mut().zip(&disclosure.lies) {
        let f = truth.eval(r.x)?;
        r.lie = Some(lie);
        r.true_value = Some(f);
        r.raw_error = (r.prediction - f).abs();
        r.p_power = r.raw_error.powf(p);
        if !lie && (r.revealed - f).abs() > ACTION_TOL * (1.0 + f.abs()) {
            consistent = false;
        }
    }
    transcript.counted_total = counted_sum(&transcript.trials);
    transcript.perceived_total = transcript
        .trials
        .iter()
        .filter(|r| r.counted)
        .map(|r| (r.prediction - r.revealed).abs().powf(p))
        .sum();
    transcript.finalized = true;
    let eta = transcript.config.eta;
    let q = transcript.config.q;
    let within_class = truth.q_action(q) <= 1.0 + ACTION_TOL;
    transcript.legality = Some(consistent && within_class && verify_legality(transcript, eta, q)?);
    Ok(())
}

/// True iff at most `eta` trials are flagged as lies and the unflagged
/// revelations are jointly consistent with a function of action at most 1.
pub fn verify_legality(transcript: &Transcript, eta: usize, q: ActionExponent) -> Result<bool> {
    if !transcript.finalized || transcript.trials.iter().any(|r| r.lie.is_none()) {
        return Err(Error::Unfinalized);
    }
    if transcript.lie_count() > eta {
        return Ok(false);
    }
    let mut truthful = SampleSet::new();
    for (x, y) in transcript.truthful_points() {
        match truthful.value_at_knot(x) {
            Some(v) if v != y => return Ok(false),
            Some(_) => {}
            None => truthful.insert_mut(SamplePoint::new(x, y)?)?,
        }
    }
    Ok(truthful.q_action(q) <= 1.0 + ACTION_TOL)
}

fn counted_sum(trials: &[TrialRecord]) -> f64 {
    trials.iter().filter(|r| r.counted).map(|r| r.p_power).sum()
}

/// Recomputes the counted error from predictions and true values.
pub fn total_error(transcript: &Transcript, p: f64) -> Result<f64> {
    if !transcript.finalized {
        return Err(Error::Unfinalized);
    }
    transcript
        .trials
        .iter()
        .filter(|r| r.counted)
        .map(|r| {
            let actual = r.true_value.ok_or(Error::Unfinalized)?;
            Ok((r.prediction - actual).abs().powf(p))
        })
        .sum()
}

/// Multiplies every value in the transcript by `c`.
pub fn scale_transcript(transcript: &Transcript, c: f64) -> Result<Transcript> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {c}"
        )));
    }
    let p = transcript.config.p;
    let cp = c.powf(p);
    let mut out = transcript.clone();
    for r in &mut out.trials {
        r.prediction *= c;
        r.revealed *= c;
        r.true_value = r.true_value.map(|v| v * c);
        r.raw_error *= c;
        r.p_power *= cp;
    }
    if let AdversarySpec::Script { steps } = &mut out.config.adversary {
        for s in steps.iter_mut() {
            s.1 *= c;
        }
    }
    out.counted_total = counted_sum(&out.trials);
    out.perceived_total = transcript.perceived_total * cp;
    Ok(out)
}

pub const CSV_HEADER: [&str; 9] = [
    "t",
    "x",
    "prediction",
    "revealed",
    "true_value",
    "lie",
    "raw_error",
    "p_power",
    "counted",
];

pub fn write_transcript_csv<W: Write>(transcript: &Transcript, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &transcript.trials {
        w.write_record([
            r.t.to_string(),
            r.x.to_string(),
            r.prediction.to_string(),
            r.revealed.to_string(),
            r.true_value.map(|v| v.to_string()).unwrap_or_default(),
            r.lie.map(|v| v.to_string()).unwrap_or_default(),
            r.raw_error.to_string(),
            r.p_power.to_string(),
            r.counted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A bound the run is expected to respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    /// `"upper"` or `"lower"`.
    pub kind: String,
    pub bound: f64,
    pub observed: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn upper(name: &str, bound: f64, observed: f64, tol: f64) -> Self {
        BoundCheck {
            name: name.into(),
            kind: "upper".into(),
            bound,
            observed,
            holds: observed <= bound + tol,
        }
    }

    pub fn lower(name: &str, bound: f64, observed: f64, tol: f64) -> Self {
        BoundCheck {
            name: name.into(),
            kind: "lower".into(),
            bound,
            observed,
            holds: observed >= bound - tol,
        }
    }
}

/// The known bounds that apply to a completed game.
pub fn applicable_bounds(t: &Transcript) -> Vec<BoundCheck> {
    let cfg = &t.config;
    let mut out = Vec::new();
    let p = cfg.p;
    let total = t.counted_total;
    let certified = p >= 2.0 && cfg.q.is_at_least(2.0);
    if cfg.eta == 0 {
        if matches!(cfg.learner, LearnerSpec::Linint) {
            if certified {
                out.push(BoundCheck::upper("linint-opt", 1.0, total, ACTION_TOL));
            }
            if let ActionExponent::Finite(q) = cfg.q {
                let eps = q - 1.0;
                if eps > 0.0 && eps < 1.0 && (p - q).abs() < 1e-15 {
                    out.push(BoundCheck::upper(
                        "linint-six-over-eps",
                        6.0 / eps,
                        total,
                        1e-6,
                    ));
                }
            }
        }
    } else if certified && t.legality == Some(true) {
        let eta = cfg.eta as f64;
        if matches!(
            cfg.learner,
            LearnerSpec::Staged {
                threshold: None,
                ..
            }
        ) {
            out.push(BoundCheck::upper(
                "staged-upper",
                12.0 * eta + 6.0,
                total,
                0.0,
            ));
            if let Some(stages) = t.stage_count {
                out.push(BoundCheck::upper(
                    "stage-resets",
                    eta,
                    stages.saturating_sub(1) as f64,
                    0.0,
                ));
            }
        }
        if matches!(cfg.adversary, AdversarySpec::NoisyLb) {
            out.push(BoundCheck::lower(
                "noisy-lower",
                2.0 * eta + 1.0,
                total,
                ACTION_TOL,
            ));
        }
    }
    out
}

/// Machine-readable digest of a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tool_version: String,
    pub config: GameConfig,
    pub trials: usize,
    pub counted_total: f64,
    pub perceived_total: f64,
    pub legality: Option<bool>,
    pub lie_count: usize,
    pub stage_count: Option<usize>,
    pub bound_checks: Vec<BoundCheck>,
}

impl Summary {
    pub fn of(t: &Transcript) -> Self {
        Summary {
            tool_version: crate::VERSION.to_string(),
            config: t.config.clone(),
            trials: t.trials.len(),
            counted_total: t.counted_total,
            perceived_total: t.perceived_total,
            legality: t.legality,
            lie_count: t.lie_count(),
            stage_count: t.stage_count,
            bound_checks: applicable_bounds(t),
        }
    }

    pub fn violations(&self) -> usize {
        self.bound_checks.iter().filter(|b| !b.holds).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversaries::{GreedyConfig, QueryPolicy};

    fn script(steps: &[(f64, f64)]) -> AdversarySpec {
        AdversarySpec::Script {
            steps: steps.to_vec(),
        }
    }

    fn greedy() -> AdversarySpec {
        let g = GreedyConfig::default();
        AdversarySpec::Greedy {
            query_policy: g.query_policy,
            budget: g.budget,
        }
    }

    #[test]
    fn linint_script_trace() {
        let cfg = GameConfig::standard(
            2.0,
            2.0,
            2,
            LearnerSpec::Linint,
            script(&[(0.0, 0.0), (1.0, 1.0)]),
            0,
        );
        let t = run_standard_game(&cfg).unwrap();
        assert_eq!(t.counted_total, 1.0);
        assert!(!t.trials[0].counted);
        assert!(t.trials[1].counted);
    }

    #[test]
    fn linint_versus_greedy_respects_opt() {
        let cfg = GameConfig::standard(2.0, 2.0, 500, LearnerSpec::Linint, greedy(), 1);
        let t = run_standard_game(&cfg).unwrap();
        assert_eq!(t.trials.len(), 500);
        assert!(t.counted_total <= 1.0 + 1e-9, "{}", t.counted_total);
    }

    #[test]
    fn zero_revelations_sum_prediction_powers() {
        let steps: Vec<_> = (0..10).map(|i| (i as f64 / 10.0, 0.0)).collect();
        let cfg = GameConfig::standard(1.5, 2.0, 10, LearnerSpec::Linint, script(&steps), 0);
        let t = run_standard_game(&cfg).unwrap();
        let replay: f64 = t.trials[1..]
            .iter()
            .map(|r| r.prediction.abs().powf(1.5))
            .sum();
        assert_eq!(t.counted_total, replay);
    }

    #[test]
    fn illegal_script_is_rejected() {
        let cfg = GameConfig::standard(
            2.0,
            2.0,
            2,
            LearnerSpec::Linint,
            script(&[(0.0, 0.0), (0.1, 1.0)]),
            0,
        );
        assert!(matches!(
            run_standard_game(&cfg),
            Err(Error::IllegalAdversary { trial: 1, .. })
        ));
    }

    #[test]
    fn duplicate_policies() {
        let steps = [(0.5, 0.2), (0.5, 0.2)];
        let cfg = GameConfig::standard(2.0, 2.0, 2, LearnerSpec::Linint, script(&steps), 0);
        assert_eq!(
            run_standard_game(&cfg).unwrap_err(),
            Error::DuplicateQuery(0.5)
        );
        let cfg = GameConfig {
            duplicate_policy: DuplicatePolicy::AnswerKnown,
            ..cfg
        };
        let t = run_standard_game(&cfg).unwrap();
        assert_eq!(t.trials[1].raw_error, 0.0);
    }

    #[test]
    fn noisy_lower_bound_against_staged() {
        let cfg = GameConfig::noisy(
            2.0,
            2.0,
            1,
            100,
            LearnerSpec::Staged {
                threshold: None,
                reset_scope: Default::default(),
            },
            AdversarySpec::NoisyLb,
            0,
        );
        let t = run_noisy_game(&cfg).unwrap();
        assert_eq!(t.trials.len(), 6);
        assert!(t.counted_total >= 3.0 - 1e-9);
        assert_eq!(t.legality, Some(true));
        assert_eq!(t.lie_count(), 1);
        assert_eq!(t.trials.iter().filter(|r| !r.counted).count(), 3);
    }

    #[test]
    fn truthful_noisy_game_is_legal() {
        let cfg = GameConfig::noisy(
            2.0,
            2.0,
            1,
            200,
            LearnerSpec::Staged {
                threshold: None,
                reset_scope: Default::default(),
            },
            greedy(),
            5,
        );
        let t = run_noisy_game(&cfg).unwrap();
        assert_eq!(t.legality, Some(true));
        assert_eq!(t.lie_count(), 0);
        assert!(t.counted_total <= 18.0);
    }

    #[test]
    fn uncounted_predictions_do_not_matter() {
        let cfg = GameConfig::noisy(
            2.0,
            2.0,
            1,
            6,
            LearnerSpec::Linint,
            AdversarySpec::NoisyLb,
            0,
        );
        let mut t = run_noisy_game(&cfg).unwrap();
        let before = t.counted_total;
        for r in t.trials.iter_mut().filter(|r| !r.counted) {
            r.prediction += 17.0;
        }
        assert_eq!(total_error(&t, 2.0).unwrap(), before);
    }

    #[test]
    fn total_error_cases() {
        let cfg = GameConfig::standard(2.0, 2.0, 1, LearnerSpec::Linint, greedy(), 0);
        let mk = |errs: &[f64], p: f64| Transcript {
            config: cfg.clone(),
            trials: errs
                .iter()
                .enumerate()
                .map(|(t, &e)| TrialRecord {
                    t,
                    x: 0.0,
                    prediction: e,
                    revealed: 0.0,
                    lie: Some(false),
                    true_value: Some(0.0),
                    raw_error: e,
                    p_power: e.powf(p),
                    counted: true,
                })
                .collect(),
            counted_total: 0.0,
            perceived_total: 0.0,
            legality: Some(true),
            stage_count: None,
            finalized: true,
        };
        assert_eq!(total_error(&mk(&[], 2.0), 2.0).unwrap(), 0.0);
        assert_eq!(total_error(&mk(&[1.0, 1.0, 1.0], 2.0), 2.0).unwrap(), 3.0);
        let v = total_error(&mk(&[0.5, 0.25], 1.5), 1.5).unwrap();
        assert!((v - 0.478553).abs() < 1e-6);
        let mut t = mk(&[1.0], 2.0);
        t.finalized = false;
        assert_eq!(total_error(&t, 2.0).unwrap_err(), Error::Unfinalized);
    }

    #[test]
    fn verify_legality_cases() {
        let cfg = GameConfig::noisy(
            2.0,
            2.0,
            1,
            6,
            LearnerSpec::Linint,
            AdversarySpec::NoisyLb,
            0,
        );
        let mut t = run_noisy_game(&cfg).unwrap();
        assert!(verify_legality(&t, 1, ActionExponent::Finite(2.0)).unwrap());
        for r in &mut t.trials {
            r.lie = Some(true);
        }
        assert!(!verify_legality(&t, 1, ActionExponent::Finite(2.0)).unwrap());

        let cfg = GameConfig::standard(2.0, 2.0, 2, LearnerSpec::Linint, greedy(), 0);
        let mut t = run_standard_game(&cfg).unwrap();
        t.trials[0].x = 0.0;
        t.trials[0].revealed = 0.0;
        t.trials[1].x = 0.1;
        t.trials[1].revealed = 1.0;
        assert!(!verify_legality(&t, 0, ActionExponent::Finite(2.0)).unwrap());
        t.finalized = false;
        assert_eq!(
            verify_legality(&t, 0, ActionExponent::Finite(2.0)).unwrap_err(),
            Error::Unfinalized
        );
    }

    #[test]
    fn scaling() {
        let cfg = GameConfig::standard(
            2.0,
            2.0,
            3,
            LearnerSpec::Linint,
            script(&[(0.0, 0.0), (1.0, 0.8), (0.5, 0.3)]),
            0,
        );
        let t = run_standard_game(&cfg).unwrap();
        assert_eq!(scale_transcript(&t, 1.0).unwrap(), t);
        let half = scale_transcript(&t, 0.5).unwrap();
        assert!((half.counted_total - 0.25 * t.counted_total).abs() < 1e-15);
        // replaying the scaled script reproduces the scaled transcript
        let replay = run_standard_game(&half.config).unwrap();
        for (a, b) in replay.trials.iter().zip(&half.trials) {
            assert!((a.prediction - b.prediction).abs() < 1e-15);
        }
        let pts = SampleSet::from_pairs(t.trials.iter().map(|r| (r.x, r.revealed))).unwrap();
        let pts2 = SampleSet::from_pairs(
            scale_transcript(&t, 2.0)
                .unwrap()
                .trials
                .iter()
                .map(|r| (r.x, r.revealed)),
        )
        .unwrap();
        assert!((pts2.q_action(2.0) - 4.0 * pts.q_action(2.0)).abs() < 1e-12);
    }

    #[test]
    fn determinism_and_csv() {
        let cfg = GameConfig::standard(
            1.5,
            1.5,
            100,
            LearnerSpec::Linint,
            AdversarySpec::Greedy {
                query_policy: QueryPolicy::UniformRandom,
                budget: 1.0,
            },
            42,
        );
        let a = run_standard_game(&cfg).unwrap();
        let b = run_standard_game(&cfg).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_transcript_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("t,x,prediction,revealed,true_value,lie,raw_error,p_power,counted\n")
        );
        assert_eq!(text.lines().count(), 101);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok =
            r#"{"p":2,"q":2,"rounds":5,"learner":{"kind":"linint"},"adversary":{"kind":"greedy"}}"#;
        assert!(serde_json::from_str::<GameConfig>(ok).is_ok());
        let bad = r#"{"p":2,"q":2,"rounds":5,"learner":{"kind":"linint"},"adversary":{"kind":"greedy"},"extra":1}"#;
        assert!(serde_json::from_str::<GameConfig>(bad).is_err());
    }
}
