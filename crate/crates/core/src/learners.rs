//! Learners for the standard and the noisy-feedback protocol.
//!
//! [`Linint`] predicts with the interpolant of everything it has seen.
//! [`StagedLearner`] splits `[0, 1]` into quarters, runs one [`Linint`] per
//! quarter behind a plausibility band, and restarts whenever the feedback
//! proves a lie, so a bounded number of lies costs a bounded number of
//! stages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolant::{check_unit, ActionExponent, SamplePoint, SampleSet};

/// Events inside a band are tested with this slack.
pub const EVENT_TOL: f64 = 1e-9;

/// A deterministic online learner.
pub trait Learner {
    fn name(&self) -> &'static str;

    fn predict(&mut self, x: f64) -> Result<f64>;

    /// Feedback for the trial whose prediction was just made.
    fn observe(&mut self, x: f64, y: f64) -> Result<()>;

    /// Number of stages entered so far, for staged learners.
    fn stage_count(&self) -> Option<usize> {
        None
    }
}

/// Linear interpolation learner.
#[derive(Debug, Clone, Default)]
pub struct Linint {
    known: SampleSet,
}

impl Linint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn known(&self) -> &SampleSet {
        &self.known
    }

    pub fn is_fresh(&self) -> bool {
        self.known.is_empty()
    }

    pub fn reset(&mut self) {
        self.known = SampleSet::new();
    }
}

impl Learner for Linint {
    fn name(&self) -> &'static str {
        "linint"
    }

    fn predict(&mut self, x: f64) -> Result<f64> {
        self.known.eval(x)
    }

    fn observe(&mut self, x: f64, y: f64) -> Result<()> {
        self.known.upsert(SamplePoint::new(x, y)?)
    }
}

/// Index in `0..4` of the quarter interval containing `x`.
pub fn interval_of(x: f64) -> Result<usize> {
    check_unit(x)?;
    Ok(((x * 4.0) as usize).min(3))
}

/// The `(eta + 1)`-th smallest of exactly `2 eta + 1` values.
pub fn median_center(values: &[f64], eta: usize) -> Result<f64> {
    let expected = 2 * eta + 1;
    if values.len() != expected {
        return Err(Error::WrongCount {
            expected,
            got: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[eta])
}

/// What a stage reset forgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetScope {
    /// Interval stores, centers and the inner learner.
    #[default]
    Full,
    /// Only the inner learner; stores and centers survive.
    InnerOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    x: f64,
    interval: usize,
    emitted: f64,
    raw: f64,
    mimicked: bool,
    /// Whether the inner learner had history, so its error counts.
    scored: bool,
}

/// Outcome of a staged observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetEvent {
    RevealOutsideBand,
    PredictionOutsideBand,
    PerceivedErrorExceeded,
}

/// The staged learner for the noisy protocol.
#[derive(Debug, Clone)]
pub struct StagedLearner {
    eta: usize,
    p: f64,
    threshold: f64,
    scope: ResetScope,
    initial: Vec<f64>,
    global_center: Option<f64>,
    stores: [Vec<(f64, f64)>; 4],
    centers: [Option<f64>; 4],
    inner: [Linint; 4],
    stage_index: usize,
    perceived_error_sum: f64,
    pending: Option<Pending>,
    resets: Vec<(usize, ResetEvent)>,
    trial: usize,
    force_center: bool,
}

impl StagedLearner {
    /// Certified configuration: threshold 1, requires `p, q >= 2`.
    pub fn new(eta: usize, p: f64, q: impl Into<ActionExponent>) -> Result<Self> {
        let q = q.into();
        if p < 2.0 || !q.is_at_least(2.0) {
            return Err(Error::InvalidParameter(format!(
                "staged learner is certified only for p, q >= 2 (got p = {p}, q = {q}); \
                 use an explicit threshold"
            )));
        }
        Self::with_threshold(eta, p, 1.0)
    }

    /// Experimental configuration with a caller-chosen perceived-error threshold.
    pub fn with_threshold(eta: usize, p: f64, threshold: f64) -> Result<Self> {
        if eta == 0 {
            return Err(Error::InvalidParameter(
                "staged learner needs eta >= 1".into(),
            ));
        }
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "p must be positive, got {p}"
            )));
        }
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "threshold must be finite and non-negative, got {threshold}"
            )));
        }
        Ok(StagedLearner {
            eta,
            p,
            threshold,
            scope: ResetScope::Full,
            initial: Vec::with_capacity(2 * eta + 1),
            global_center: None,
            stores: Default::default(),
            centers: [None; 4],
            inner: Default::default(),
            stage_index: 1,
            perceived_error_sum: 0.0,
            pending: None,
            resets: Vec::new(),
            trial: 0,
            force_center: false,
        })
    }

    pub fn with_scope(mut self, scope: ResetScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    pub fn global_center(&self) -> Option<f64> {
        self.global_center
    }

    pub fn interval_center(&self, j: usize) -> Option<f64> {
        self.centers[j]
    }

    pub fn store_len(&self, j: usize) -> usize {
        self.stores[j].len()
    }

    pub fn stage_index(&self) -> usize {
        self.stage_index
    }

    pub fn perceived_error_sum(&self) -> f64 {
        self.perceived_error_sum
    }

    /// Trial indices and causes of every reset so far.
    pub fn resets(&self) -> &[(usize, ResetEvent)] {
        &self.resets
    }

    fn needed(&self) -> usize {
        2 * self.eta + 1
    }

    /// Prediction for a trial after the initial phase, with its mimicked flag.
    pub fn staged_predict(&mut self, x: f64) -> Result<(f64, bool)> {
        let v = self.global_center.ok_or(Error::NotInitialized)?;
        let j = interval_of(x)?;
        let mimicked = !self.force_center && self.stores[j].len() >= self.needed();
        let pending = if mimicked {
            let c = self.centers[j].expect("center is set once the store is full");
            let (raw, scored) = if self.inner[j].is_fresh() {
                (c, false)
            } else {
                (self.inner[j].predict(x)?, true)
            };
            Pending {
                x,
                interval: j,
                emitted: raw.clamp(c - 0.5, c + 0.5),
                raw,
                mimicked,
                scored,
            }
        } else {
            Pending {
                x,
                interval: j,
                emitted: v,
                raw: v,
                mimicked,
                scored: false,
            }
        };
        self.pending = Some(pending);
        Ok((pending.emitted, mimicked))
    }

    /// Feedback for the preceding [`staged_predict`](Self::staged_predict).
    /// Returns the reset cause when the trial ends the stage.
    pub fn staged_observe(&mut self, x: f64, y: f64) -> Result<Option<ResetEvent>> {
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::ProtocolViolation("observe without a prediction".into()))?;
        if pending.x != x {
            return Err(Error::ProtocolViolation(format!(
                "observed x = {x} but predicted at x = {}",
                pending.x
            )));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite(y));
        }
        self.force_center = false;
        let j = pending.interval;

        let event = if pending.mimicked {
            let c = self.centers[j].expect("mimicked trials have a center");
            if pending.scored {
                self.perceived_error_sum += (pending.emitted - y).abs().powf(self.p);
            }
            self.inner[j].observe(x, y)?;
            if (y - c).abs() > 0.5 + EVENT_TOL {
                Some(ResetEvent::RevealOutsideBand)
            } else if (pending.raw - c).abs() > 0.5 + EVENT_TOL {
                Some(ResetEvent::PredictionOutsideBand)
            } else if self.perceived_error_sum > self.threshold {
                Some(ResetEvent::PerceivedErrorExceeded)
            } else {
                None
            }
        } else {
            None
        };

        if let Some(ev) = event {
            self.reset_stage(ev)?;
        } else if !pending.mimicked {
            self.stores[j].push((x, y));
            if self.stores[j].len() == self.needed() {
                let ys: Vec<f64> = self.stores[j].iter().map(|&(_, y)| y).collect();
                self.centers[j] = Some(median_center(&ys, self.eta)?);
            }
        } else {
            self.stores[j].push((x, y));
        }
        self.trial += 1;
        Ok(event)
    }

    fn reset_stage(&mut self, ev: ResetEvent) -> Result<()> {
        if self.stage_index > self.eta {
            return Err(Error::ProtocolViolation(format!(
                "stage {} would exceed the lie budget {}",
                self.stage_index + 1,
                self.eta
            )));
        }
        self.stage_index += 1;
        self.resets.push((self.trial, ev));
        self.inner.iter_mut().for_each(Linint::reset);
        self.perceived_error_sum = 0.0;
        match self.scope {
            ResetScope::Full => {
                self.stores = Default::default();
                self.centers = [None; 4];
            }
            ResetScope::InnerOnly => self.force_center = true,
        }
        Ok(())
    }
}

impl Learner for StagedLearner {
    fn name(&self) -> &'static str {
        "staged"
    }

    fn predict(&mut self, x: f64) -> Result<f64> {
        if self.global_center.is_some() {
            return Ok(self.staged_predict(x)?.0);
        }
        check_unit(x)?;
        let pred = if self.initial.is_empty() {
            0.0
        } else {
            let mut sorted = self.initial.clone();
            sorted.sort_by(f64::total_cmp);
            sorted[(sorted.len() - 1) / 2]
        };
        self.pending = Some(Pending {
            x,
            interval: interval_of(x)?,
            emitted: pred,
            raw: pred,
            mimicked: false,
            scored: false,
        });
        Ok(pred)
    }

    fn observe(&mut self, x: f64, y: f64) -> Result<()> {
        if self.global_center.is_some() {
            return self.staged_observe(x, y).map(|_| ());
        }
        match self.pending.take() {
            Some(p) if p.x == x => {}
            _ => {
                return Err(Error::ProtocolViolation(
                    "observe without a prediction".into(),
                ))
            }
        }
        if !y.is_finite() {
            return Err(Error::NonFinite(y));
        }
        self.initial.push(y);
        if self.initial.len() == self.needed() {
            self.global_center = Some(median_center(&self.initial, self.eta)?);
        }
        self.trial += 1;
        Ok(())
    }

    fn stage_count(&self) -> Option<usize> {
        Some(self.stage_index)
    }
}

/// Learner selection for configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LearnerSpec {
    Linint,
    Staged {
        /// Perceived-error threshold; `None` means the certified value 1.
        #[serde(default)]
        threshold: Option<f64>,
        #[serde(default)]
        reset_scope: ResetScope,
    },
}

impl LearnerSpec {
    pub fn id(&self) -> &'static str {
        match self {
            LearnerSpec::Linint => "linint",
            LearnerSpec::Staged { .. } => "staged",
        }
    }

    pub fn build(&self, eta: usize, p: f64, q: ActionExponent) -> Result<Box<dyn Learner + Send>> {
        Ok(match self {
            LearnerSpec::Linint => Box::new(Linint::new()),
            LearnerSpec::Staged {
                threshold,
                reset_scope,
            } => {
                let learner = match threshold {
                    None => StagedLearner::new(eta, p, q)?,
                    Some(t) => StagedLearner::with_threshold(eta, p, *t)?,
                };
                Box::new(learner.with_scope(*reset_scope))
            }
        })
    }
}
