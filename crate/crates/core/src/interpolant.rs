//! Revealed point sets and their piecewise-linear interpolant.
//!
//! A [`SampleSet`] holds the points `(u_i, v_i)` revealed so far, ordered by
//! `u`. Its interpolant is constant left of the first knot and right of the
//! last one, and affine in between; the empty set interpolates to zero.
//! Among all absolutely continuous functions through the knots it has the
//! least q-action, which is what makes it the feasibility witness used by
//! the game engine and the adversaries.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Absolute tolerance for coordinate comparisons.
pub const COORD_TOL: f64 = 1e-12;
/// Absolute tolerance for action comparisons.
pub const ACTION_TOL: f64 = 1e-9;

/// Exponent of the action functional. `Infinite` is the sup-norm constraint
/// on the derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionExponent {
    Finite(f64),
    Infinite,
}

impl ActionExponent {
    pub fn finite(self) -> Option<f64> {
        match self {
            ActionExponent::Finite(q) => Some(q),
            ActionExponent::Infinite => None,
        }
    }

    pub fn is_at_least(self, bound: f64) -> bool {
        match self {
            ActionExponent::Finite(q) => q >= bound,
            ActionExponent::Infinite => true,
        }
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            ActionExponent::Finite(q) if !q.is_finite() || q < 1.0 => Err(Error::InvalidParameter(
                format!("action exponent must be >= 1, got {q}"),
            )),
            other => Ok(other),
        }
    }
}

impl From<f64> for ActionExponent {
    fn from(q: f64) -> Self {
        if q.is_infinite() && q > 0.0 {
            ActionExponent::Infinite
        } else {
            ActionExponent::Finite(q)
        }
    }
}

impl fmt::Display for ActionExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionExponent::Finite(q) => write!(f, "{q}"),
            ActionExponent::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for ActionExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ActionExponent::Finite(q) => s.serialize_f64(*q),
            ActionExponent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ActionExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(q) => Ok(ActionExponent::Finite(q)),
            Raw::Text(t) if t == "inf" || t == "infinity" => Ok(ActionExponent::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

/// Error exponent `p` together with the action exponent `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: ActionExponent,
}

impl Exponents {
    pub fn new(p: f64, q: impl Into<ActionExponent>) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "error exponent must be positive, got {p}"
            )));
        }
        let q = q.into().validate()?;
        Ok(Exponents { p, q })
    }

    /// `q - 1`; infinite for the sup-norm class.
    pub fn epsilon(&self) -> f64 {
        match self.q {
            ActionExponent::Finite(q) => q - 1.0,
            ActionExponent::Infinite => f64::INFINITY,
        }
    }

    /// `p - 1`.
    pub fn delta(&self) -> f64 {
        self.p - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub u: f64,
    pub v: f64,
}

impl SamplePoint {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        check_unit(u)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(v));
        }
        Ok(SamplePoint { u, v })
    }
}

pub(crate) fn check_unit(x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain(x));
    }
    Ok(())
}

/// Where a query coordinate sits relative to the knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Empty,
    LeftOf,
    RightOf,
    Knot(usize),
    /// Strictly between knots `i` and `i + 1`.
    Between(usize),
}

/// Feasible replies at a fresh input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleInterval {
    Bounded { lo: f64, hi: f64 },
    Unbounded,
}

impl FeasibleInterval {
    pub fn contains(&self, y: f64) -> bool {
        match *self {
            FeasibleInterval::Bounded { lo, hi } => lo <= y && y <= hi,
            FeasibleInterval::Unbounded => true,
        }
    }
}

/// Points with strictly increasing `u`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    points: Vec<SamplePoint>,
}

impl SampleSet {
    pub fn new() -> Self {
        SampleSet { points: Vec::new() }
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut set = SampleSet::new();
        for (u, v) in pairs {
            set.insert_mut(SamplePoint::new(u, v)?)?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SamplePoint] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &SamplePoint> {
        self.points.iter()
    }

    /// Value stored at `u`, if `u` is a knot.
    pub fn value_at_knot(&self, u: f64) -> Option<f64> {
        match self.locate(u) {
            Location::Knot(i) => Some(self.points[i].v),
            _ => None,
        }
    }

    /// Returns the enlarged set, leaving `self` untouched.
    pub fn insert(&self, pt: SamplePoint) -> Result<SampleSet> {
        let mut next = self.clone();
        next.insert_mut(pt)?;
        Ok(next)
    }

    pub fn insert_mut(&mut self, pt: SamplePoint) -> Result<()> {
        let pt = SamplePoint::new(pt.u, pt.v)?;
        let idx = self.points.partition_point(|p| p.u < pt.u);
        if idx < self.points.len() && self.points[idx].u == pt.u {
            return Err(Error::DuplicateU(pt.u));
        }
        self.points.insert(idx, pt);
        Ok(())
    }

    /// Inserts or overwrites the value at `pt.u`.
    pub fn upsert(&mut self, pt: SamplePoint) -> Result<()> {
        let pt = SamplePoint::new(pt.u, pt.v)?;
        let idx = self.points.partition_point(|p| p.u < pt.u);
        if idx < self.points.len() && self.points[idx].u == pt.u {
            self.points[idx].v = pt.v;
        } else {
            self.points.insert(idx, pt);
        }
        Ok(())
    }

    pub fn locate(&self, x: f64) -> Location {
        let n = self.points.len();
        if n == 0 {
            return Location::Empty;
        }
        let idx = self.points.partition_point(|p| p.u < x);
        if idx < n && self.points[idx].u == x {
            Location::Knot(idx)
        } else if idx == 0 {
            Location::LeftOf
        } else if idx == n {
            Location::RightOf
        } else {
            Location::Between(idx - 1)
        }
    }

    /// Evaluates the interpolant. Knots are reproduced exactly.
    pub fn eval(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        match self.locate(x) {
            Location::Empty => 0.0,
            Location::LeftOf => self.points[0].v,
            Location::RightOf => self.points[self.points.len() - 1].v,
            Location::Knot(i) => self.points[i].v,
            Location::Between(i) => {
                let a = self.points[i];
                let b = self.points[i + 1];
                let t = (x - a.u) / (b.u - a.u);
                a.v + t * (b.v - a.v)
            }
        }
    }

    /// Derivative of the interpolant away from the knots.
    pub fn slope_at(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        match self.locate(x) {
            Location::Empty | Location::LeftOf | Location::RightOf => Ok(0.0),
            Location::Knot(_) => Err(Error::AtKnot(x)),
            Location::Between(i) => Ok(self.segment_slope(i)),
        }
    }

    /// Slope of the segment joining knots `i` and `i + 1`.
    pub fn segment_slope(&self, i: usize) -> f64 {
        let a = self.points[i];
        let b = self.points[i + 1];
        (b.v - a.v) / (b.u - a.u)
    }

    /// Slopes of all interior segments in order.
    pub fn slopes(&self) -> Vec<f64> {
        (0..self.points.len().saturating_sub(1))
            .map(|i| self.segment_slope(i))
            .collect()
    }

    /// Distance from `x` to the closest knot.
    pub fn nearest_gap(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        let n = self.points.len();
        if n == 0 {
            return Err(Error::EmptySet);
        }
        let idx = self.points.partition_point(|p| p.u < x);
        let mut best = f64::INFINITY;
        if idx < n {
            best = best.min((self.points[idx].u - x).abs());
        }
        if idx > 0 {
            best = best.min((x - self.points[idx - 1].u).abs());
        }
        Ok(best)
    }

    /// Smallest distance between consecutive knots.
    pub fn min_gap(&self) -> Option<f64> {
        self.points
            .windows(2)
            .map(|w| w[1].u - w[0].u)
            .min_by(|a, b| a.total_cmp(b))
    }

    /// q-action of the interpolant: `sum |du| |dv/du|^q`, or the largest
    /// slope magnitude for the sup-norm class.
    pub fn q_action(&self, q: impl Into<ActionExponent>) -> f64 {
        match q.into() {
            ActionExponent::Finite(q) if q == 1.0 => self
                .points
                .windows(2)
                .map(|w| (w[1].v - w[0].v).abs())
                .sum(),
            ActionExponent::Finite(q) => self
                .points
                .windows(2)
                .map(|w| segment_action(w[1].u - w[0].u, w[1].v - w[0].v, q))
                .sum(),
            ActionExponent::Infinite => self
                .points
                .windows(2)
                .map(|w| ((w[1].v - w[0].v) / (w[1].u - w[0].u)).abs())
                .fold(0.0, f64::max),
        }
    }

    /// The potential `sum |dv| (1 - |du|^(p-1))`.
    pub fn h_potential(&self, p: f64) -> Result<f64> {
        if self.points.len() < 2 {
            return Err(Error::TooFewPoints {
                needed: 2,
                got: self.points.len(),
            });
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
        }
        Ok(self
            .points
            .windows(2)
            .map(|w| h_term(w[1].u - w[0].u, w[1].v - w[0].v, p))
            .sum())
    }

    /// Change in q-action from adding `(x, y)`, computed from the affected
    /// segments only. `x` must not be a knot.
    pub fn action_increment(&self, x: f64, y: f64, q: impl Into<ActionExponent>) -> Result<f64> {
        check_unit(x)?;
        let q = q.into();
        let loc = self.locate(x);
        if let Location::Knot(_) = loc {
            return Err(Error::DuplicateU(x));
        }
        let q = match q {
            ActionExponent::Finite(q) => q,
            ActionExponent::Infinite => {
                let before = self.q_action(ActionExponent::Infinite);
                let after = self
                    .insert(SamplePoint::new(x, y)?)?
                    .q_action(ActionExponent::Infinite);
                return Ok(after - before);
            }
        };
        Ok(match loc {
            Location::Empty => 0.0,
            Location::LeftOf => {
                let first = self.points[0];
                segment_action(first.u - x, first.v - y, q)
            }
            Location::RightOf => {
                let last = self.points[self.points.len() - 1];
                segment_action(x - last.u, y - last.v, q)
            }
            Location::Between(i) => {
                let a = self.points[i];
                let b = self.points[i + 1];
                segment_action(x - a.u, y - a.v, q) + segment_action(b.u - x, b.v - y, q)
                    - segment_action(b.u - a.u, b.v - a.v, q)
            }
            Location::Knot(_) => unreachable!(),
        })
    }

    /// Change in the H potential from adding `(x, y)`.
    pub fn h_increment(&self, x: f64, y: f64, p: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(match self.locate(x) {
            Location::Empty => 0.0,
            Location::Knot(_) => return Err(Error::DuplicateU(x)),
            Location::LeftOf => {
                let first = self.points[0];
                h_term(first.u - x, first.v - y, p)
            }
            Location::RightOf => {
                let last = self.points[self.points.len() - 1];
                h_term(x - last.u, y - last.v, p)
            }
            Location::Between(i) => {
                let a = self.points[i];
                let b = self.points[i + 1];
                h_term(x - a.u, y - a.v, p) + h_term(b.u - x, b.v - y, p)
                    - h_term(b.u - a.u, b.v - a.v, p)
            }
        })
    }

    /// All replies `y` at the fresh input `x` for which the enlarged set
    /// keeps q-action within `budget`.
    ///
    /// The action is convex in `y` and minimised at the current interpolant
    /// value, so the feasible set is an interval around it. Finite `q` uses
    /// bisection down to float resolution and always returns endpoints on
    /// the feasible side; the sup-norm class has a closed form.
    pub fn feasible_reply_interval(
        &self,
        x: f64,
        q: impl Into<ActionExponent>,
        budget: f64,
    ) -> Result<FeasibleInterval> {
        check_unit(x)?;
        let q = q.into().validate()?;
        if self.is_empty() {
            return Ok(FeasibleInterval::Unbounded);
        }
        if let Location::Knot(_) = self.locate(x) {
            return Err(Error::DuplicateU(x));
        }
        let action = self.q_action(q);
        if budget < action - ACTION_TOL {
            return Err(Error::InfeasibleBudget { budget, action });
        }
        match q {
            ActionExponent::Infinite => Ok(self.sup_norm_interval(x, budget.max(action))),
            ActionExponent::Finite(qf) => {
                let slack = (budget - action).max(0.0);
                let center = self.eval_unchecked(x);
                let excess = |y: f64| -> f64 {
                    // Checked above: x is not a knot and lies in [0, 1].
                    self.action_increment(x, y, qf).unwrap_or(f64::INFINITY) - slack
                };
                if excess(center) > 0.0 {
                    return Ok(FeasibleInterval::Bounded {
                        lo: center,
                        hi: center,
                    });
                }
                let hi = bisect_edge(center, 1.0, &excess)?;
                let lo = bisect_edge(center, -1.0, &excess)?;
                Ok(FeasibleInterval::Bounded { lo, hi })
            }
        }
    }

    fn sup_norm_interval(&self, x: f64, budget: f64) -> FeasibleInterval {
        let (lo, hi) = match self.locate(x) {
            Location::LeftOf => {
                let f = self.points[0];
                let r = budget * (f.u - x);
                (f.v - r, f.v + r)
            }
            Location::RightOf => {
                let l = self.points[self.points.len() - 1];
                let r = budget * (x - l.u);
                (l.v - r, l.v + r)
            }
            Location::Between(i) => {
                let a = self.points[i];
                let b = self.points[i + 1];
                let ra = budget * (x - a.u);
                let rb = budget * (b.u - x);
                ((a.v - ra).max(b.v - rb), (a.v + ra).min(b.v + rb))
            }
            Location::Empty | Location::Knot(_) => unreachable!(),
        };
        FeasibleInterval::Bounded { lo, hi }
    }

    /// Multiplies every value by `c`.
    pub fn scaled(&self, c: f64) -> SampleSet {
        SampleSet {
            points: self
                .points
                .iter()
                .map(|p| SamplePoint { u: p.u, v: c * p.v })
                .collect(),
        }
    }

    /// Largest minus smallest value.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.v), hi.max(p.v))
            });
        if self.points.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

fn segment_action(du: f64, dv: f64, q: f64) -> f64 {
    if dv == 0.0 {
        return 0.0;
    }
    du * (dv / du).abs().powf(q)
}

fn h_term(du: f64, dv: f64, p: f64) -> f64 {
    dv.abs() * (1.0 - du.abs().powf(p - 1.0))
}

/// Walks from `center` in direction `dir` to the last `y` with
/// `excess(y) <= 0`, given `excess(center) <= 0`.
fn bisect_edge(center: f64, dir: f64, excess: &impl Fn(f64) -> f64) -> Result<f64> {
    let mut step = 1.0;
    while excess(center + dir * step) <= 0.0 {
        step *= 2.0;
        if step > 1e300 {
            return Err(Error::Numerical("feasible interval is unbounded".into()));
        }
    }
    let (mut inside, mut outside) = (0.0_f64, step);
    loop {
        let mid = 0.5 * (inside + outside);
        if mid <= inside || mid >= outside || outside - inside <= COORD_TOL * 1e-4 {
            break;
        }
        if excess(center + dir * mid) <= 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(center + dir * inside)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set(pairs: &[(f64, f64)]) -> SampleSet {
        SampleSet::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn insertion_keeps_order_and_rejects_duplicates() {
        let s = SampleSet::new()
            .insert(SamplePoint::new(0.5, 0.3).unwrap())
            .unwrap();
        assert_eq!(s.points(), &[SamplePoint { u: 0.5, v: 0.3 }]);

        let s = set(&[(0.2, 0.0)]);
        let t = s.insert(SamplePoint::new(0.1, 1.0).unwrap()).unwrap();
        assert_eq!(t.points()[0].u, 0.1);
        assert_eq!(t.points()[1].u, 0.2);
        // persistent: original unchanged
        assert_eq!(s.len(), 1);

        let err = s.insert(SamplePoint::new(0.2, 5.0).unwrap()).unwrap_err();
        assert_eq!(err, Error::DuplicateU(0.2));
    }

    #[test]
    fn point_validation() {
        assert!(matches!(
            SamplePoint::new(1.5, 0.0),
            Err(Error::OutOfDomain(_))
        ));
        assert!(matches!(
            SamplePoint::new(0.5, f64::NAN),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn eval_cases() {
        assert_eq!(set(&[(0.25, 0.5), (0.75, 0.0)]).eval(0.5).unwrap(), 0.25);
        assert_eq!(set(&[(0.3, 0.7)]).eval(0.9).unwrap(), 0.7);
        assert_eq!(set(&[(0.3, 0.7)]).eval(0.1).unwrap(), 0.7);
        assert_eq!(SampleSet::new().eval(0.4).unwrap(), 0.0);
        assert!(SampleSet::new().eval(1.2).is_err());
    }

    #[test]
    fn slope_cases() {
        assert_eq!(set(&[(0.0, 0.0), (1.0, 1.0)]).slope_at(0.5).unwrap(), 1.0);
        assert_eq!(set(&[(0.3, 0.7)]).slope_at(0.1).unwrap(), 0.0);
        assert_eq!(
            set(&[(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)])
                .slope_at(0.25)
                .unwrap(),
            2.0
        );
        assert_eq!(
            set(&[(0.0, 0.0), (0.5, 1.0)]).slope_at(0.5).unwrap_err(),
            Error::AtKnot(0.5)
        );
    }

    #[test]
    fn nearest_gap_cases() {
        assert_eq!(
            set(&[(0.0, 0.0), (1.0, 1.0)]).nearest_gap(0.25).unwrap(),
            0.25
        );
        assert_eq!(set(&[(0.5, 0.0)]).nearest_gap(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(
            set(&[(0.1, 0.0), (0.9, 0.0)]).nearest_gap(0.3).unwrap(),
            0.2,
            epsilon = 1e-15
        );
        assert_eq!(
            SampleSet::new().nearest_gap(0.3).unwrap_err(),
            Error::EmptySet
        );
    }

    #[test]
    fn q_action_cases() {
        assert_eq!(set(&[(0.0, 0.0), (1.0, 1.0)]).q_action(2.0), 1.0);
        assert_eq!(
            set(&[(0.0, 0.0), (0.5, 0.5), (1.0, 0.0)]).q_action(1.0),
            1.0
        );
        assert_eq!(set(&[(0.0, 0.0), (0.5, 1.0)]).q_action(2.0), 2.0);
        assert_eq!(set(&[(0.3, 1.0)]).q_action(3.0), 0.0);
        assert_eq!(SampleSet::new().q_action(2.0), 0.0);
        assert_eq!(
            set(&[(0.0, 0.0), (0.5, 1.0), (1.0, 0.5)]).q_action(ActionExponent::Infinite),
            2.0
        );
    }

    #[test]
    fn h_potential_cases() {
        assert_eq!(
            set(&[(0.0, 0.0), (1.0, 1.0)]).h_potential(2.0).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            set(&[(0.0, 0.0), (0.5, 0.5)]).h_potential(2.0).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            set(&[(0.0, 0.0), (0.25, 0.25), (0.5, 0.5)])
                .h_potential(2.0)
                .unwrap(),
            0.375,
            epsilon = 1e-15
        );
        assert!(matches!(
            set(&[(0.0, 0.0)]).h_potential(2.0),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn feasible_interval_cases() {
        let s = set(&[(0.0, 0.0)]);
        match s.feasible_reply_interval(1.0, 2.0, 1.0).unwrap() {
            FeasibleInterval::Bounded { lo, hi } => {
                assert_abs_diff_eq!(lo, -1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
        match s.feasible_reply_interval(0.25, 2.0, 1.0).unwrap() {
            FeasibleInterval::Bounded { lo, hi } => {
                assert_abs_diff_eq!(lo, -0.5, epsilon = 1e-12);
                assert_abs_diff_eq!(hi, 0.5, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            SampleSet::new()
                .feasible_reply_interval(0.5, 2.0, 1.0)
                .unwrap(),
            FeasibleInterval::Unbounded
        );
        assert!(matches!(
            set(&[(0.0, 0.0), (0.1, 1.0)]).feasible_reply_interval(0.5, 2.0, 1.0),
            Err(Error::InfeasibleBudget { .. })
        ));
    }

    #[test]
    fn feasible_interval_sup_norm_and_q_one() {
        let s = set(&[(0.0, 0.0), (0.5, 0.25)]);
        match s
            .feasible_reply_interval(0.25, ActionExponent::Infinite, 1.0)
            .unwrap()
        {
            FeasibleInterval::Bounded { lo, hi } => {
                assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-15);
                assert_abs_diff_eq!(hi, 0.25, epsilon = 1e-15);
            }
            other => panic!("{other:?}"),
        }
        // q = 1 exterior: |y - v| <= slack
        let s = set(&[(0.5, 0.2)]);
        match s.feasible_reply_interval(1.0, 1.0, 0.3).unwrap() {
            FeasibleInterval::Bounded { lo, hi } => {
                assert_abs_diff_eq!(lo, -0.1, epsilon = 1e-12);
                assert_abs_diff_eq!(hi, 0.5, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn increment_matches_full_recompute() {
        let s = set(&[(0.1, 0.0), (0.4, 0.3), (0.8, -0.1)]);
        for &(x, y) in &[(0.0, 0.2), (0.2, -0.1), (0.6, 0.5), (0.95, 0.0)] {
            let inc = s.action_increment(x, y, 1.7).unwrap();
            let full = s
                .insert(SamplePoint::new(x, y).unwrap())
                .unwrap()
                .q_action(1.7)
                - s.q_action(1.7);
            assert_abs_diff_eq!(inc, full, epsilon = 1e-12);
            let hinc = s.h_increment(x, y, 1.3).unwrap();
            let hfull = s
                .insert(SamplePoint::new(x, y).unwrap())
                .unwrap()
                .h_potential(1.3)
                .unwrap()
                - s.h_potential(1.3).unwrap();
            assert_abs_diff_eq!(hinc, hfull, epsilon = 1e-12);
        }
    }

    #[test]
    fn exponent_serde() {
        let q: ActionExponent = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(q, ActionExponent::Infinite);
        let q: ActionExponent = serde_json::from_str("2.5").unwrap();
        assert_eq!(q, ActionExponent::Finite(2.5));
        assert_eq!(
            serde_json::to_string(&ActionExponent::Infinite).unwrap(),
            "\"inf\""
        );
        let e = Exponents::new(1.5, 1.25).unwrap();
        assert_abs_diff_eq!(e.epsilon(), 0.25);
        assert_abs_diff_eq!(e.delta(), 0.5);
        assert!(Exponents::new(2.0, 0.5).is_err());
    }
}
