//! Polynomials that interpolate a point set while keeping q-action in budget.
//!
//! Polynomials live in the Bernstein basis on `[0, 1]`. The approximate
//! pipeline builds a smoothed derivative of the linear interpolant, takes its
//! Kantorovich approximant and integrates it, which is the same as applying
//! the Bernstein operator to the smoothed interpolant. Knot values are then
//! corrected by a small linear solve so the residuals fall below the
//! requested tolerance. The exact pipeline perturbs the knot values up and
//! down, fits each perturbed set and averages the fits so that every knot is
//! hit exactly.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolant::{SamplePoint, SampleSet};

pub const DEFAULT_DEGREE_CAP: usize = 1 << 14;
pub const DEFAULT_MAX_POINTS: usize = 8;
/// Degrees up to this use de Casteljau; above it a windowed basis sum.
const CASTELJAU_MAX: usize = 64;
/// Largest degree for which monomial coefficients are produced.
pub const MONOMIAL_MAX: usize = 60;
const START_DEGREE: usize = 16;

/// Polynomial on `[0, 1]` in the Bernstein basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coef: Vec<f64>,
    deriv: Vec<f64>,
}

impl Polynomial {
    pub fn from_bernstein(coef: Vec<f64>) -> Self {
        assert!(
            !coef.is_empty(),
            "a polynomial needs at least one coefficient"
        );
        let n = coef.len() - 1;
        let deriv = coef.windows(2).map(|w| n as f64 * (w[1] - w[0])).collect();
        Polynomial { coef, deriv }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::from_bernstein(vec![c])
    }

    /// The Bernstein operator of degree `n` applied to `g`.
    pub fn bernstein_of(g: impl Fn(f64) -> f64, n: usize) -> Self {
        if n == 0 {
            return Polynomial::constant(g(0.0));
        }
        Polynomial::from_bernstein((0..=n).map(|k| g(k as f64 / n as f64)).collect())
    }

    pub fn degree(&self) -> usize {
        self.coef.len() - 1
    }

    pub fn bernstein(&self) -> &[f64] {
        &self.coef
    }

    pub fn derivative(&self) -> Polynomial {
        if self.deriv.is_empty() {
            Polynomial::constant(0.0)
        } else {
            Polynomial::from_bernstein(self.deriv.clone())
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_bernstein(&self.coef, x)
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        if self.deriv.is_empty() {
            0.0
        } else {
            eval_bernstein(&self.deriv, x)
        }
    }

    /// Power-basis coefficients `a_0 + a_1 x + ...`, computed exactly and
    /// rounded once. `None` above [`MONOMIAL_MAX`].
    pub fn to_monomial(&self) -> Option<Vec<f64>> {
        let n = self.degree();
        if n > MONOMIAL_MAX {
            return None;
        }
        let b: Vec<BigRational> = self.coef.iter().map(|&c| rational(c)).collect();
        let binom = binomial_table(n);
        let out = (0..=n)
            .map(|j| {
                let mut acc = BigRational::zero();
                for (k, bk) in b.iter().enumerate().take(j + 1) {
                    let t = bk * BigRational::from_integer(&binom[n][j] * &binom[j][k]);
                    if (j - k) % 2 == 0 {
                        acc += t;
                    } else {
                        acc -= t;
                    }
                }
                acc.to_f64().unwrap_or(f64::NAN)
            })
            .collect();
        Some(out)
    }

    pub fn from_monomial(a: &[f64]) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidParameter("no monomial coefficients".into()));
        }
        let n = a.len() - 1;
        if n > MONOMIAL_MAX {
            return Err(Error::DegreeCap {
                cap: MONOMIAL_MAX,
                detail: format!("monomial input of degree {n}"),
            });
        }
        let a: Vec<BigRational> = a.iter().map(|&c| rational(c)).collect();
        let binom = binomial_table(n);
        let coef = (0..=n)
            .map(|k| {
                let mut acc = BigRational::zero();
                for (j, aj) in a.iter().enumerate().take(k + 1) {
                    acc += aj * BigRational::new(binom[k][j].clone(), binom[n][j].clone());
                }
                acc.to_f64().unwrap_or(f64::NAN)
            })
            .collect();
        Ok(Polynomial::from_bernstein(coef))
    }

    /// Coefficients with all finite values, as produced for output.
    pub fn is_finite(&self) -> bool {
        self.coef.iter().all(|c| c.is_finite())
    }
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(BigRational::zero)
}

fn binomial_table(n: usize) -> Vec<Vec<BigInt>> {
    let mut t: Vec<Vec<BigInt>> = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut row = vec![BigInt::one(); i + 1];
        for j in 1..i {
            row[j] = &t[i - 1][j - 1] + &t[i - 1][j];
        }
        t.push(row);
    }
    t
}

fn eval_bernstein(c: &[f64], x: f64) -> f64 {
    let n = c.len() - 1;
    if n == 0 || x <= 0.0 {
        return c[0];
    }
    if x >= 1.0 {
        return c[n];
    }
    if n <= CASTELJAU_MAX {
        let mut b = c.to_vec();
        for r in 1..=n {
            for k in 0..=n - r {
                b[k] = (1.0 - x) * b[k] + x * b[k + 1];
            }
        }
        return b[0];
    }
    let (start, w) = basis_window(n, x);
    w.iter().zip(&c[start..]).map(|(w, c)| w * c).sum()
}

/// Bernstein basis values `B_{n,k}(x)` for the `k` where they are not
/// negligible. Returns the first index and the values.
fn basis_window(n: usize, x: f64) -> (usize, Vec<f64>) {
    const CUTOFF: f64 = 1e-18;
    if x <= 0.0 {
        return (0, vec![1.0]);
    }
    if x >= 1.0 {
        return (n, vec![1.0]);
    }
    let rho = x / (1.0 - x);
    let mode = (((n + 1) as f64 * x).floor() as usize).min(n);
    let mut up = Vec::new();
    let mut r = 1.0;
    let mut k = mode;
    while k < n {
        r *= (n - k) as f64 / (k + 1) as f64 * rho;
        k += 1;
        if r < CUTOFF {
            break;
        }
        up.push(r);
    }
    let mut down = Vec::new();
    r = 1.0;
    k = mode;
    while k > 0 {
        r *= k as f64 / ((n - k + 1) as f64 * rho);
        k -= 1;
        if r < CUTOFF {
            break;
        }
        down.push(r);
    }
    let start = mode - down.len();
    let mut w: Vec<f64> = down.into_iter().rev().collect();
    w.push(1.0);
    w.extend(up);
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    (start, w)
}

/// `P(x) = v1 + ∫_0^x Q`.
pub fn integrate_from(q: &Polynomial, v1: f64) -> Polynomial {
    let n = q.degree() + 1;
    let mut coef = Vec::with_capacity(n + 1);
    let mut acc = v1;
    coef.push(acc);
    for &c in q.bernstein() {
        acc += c / n as f64;
        coef.push(acc);
    }
    Polynomial::from_bernstein(coef)
}

/// Continuous piecewise-linear function on `[0, 1]` given by breakpoints,
/// constant outside them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothedDerivative {
    breaks: Vec<(f64, f64)>,
    ramp: f64,
    /// Antiderivative value at each breakpoint.
    cumulative: Vec<f64>,
    anchor: f64,
}

impl SmoothedDerivative {
    pub fn ramp_width(&self) -> f64 {
        self.ramp
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breaks
    }

    pub fn eval(&self, x: f64) -> f64 {
        let b = &self.breaks;
        if x <= b[0].0 {
            return b[0].1;
        }
        if x >= b[b.len() - 1].0 {
            return b[b.len() - 1].1;
        }
        let i = b.partition_point(|p| p.0 <= x) - 1;
        let (x0, y0) = b[i];
        let (x1, y1) = b[i + 1];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Largest slope magnitude, a Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        self.breaks
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max)
    }

    /// `anchor + ∫_{u_1}^x g`, the smoothed interpolant.
    pub fn antiderivative(&self, x: f64) -> f64 {
        self.anchor + self.integral_to(x)
    }

    fn integral_to(&self, x: f64) -> f64 {
        let b = &self.breaks;
        if x <= b[0].0 {
            return self.cumulative[0] - (b[0].0 - x) * b[0].1;
        }
        let last = b.len() - 1;
        if x >= b[last].0 {
            return self.cumulative[last] + (x - b[last].0) * b[last].1;
        }
        let i = b.partition_point(|p| p.0 <= x) - 1;
        let gx = self.eval(x);
        self.cumulative[i] + (x - b[i].0) * (b[i].1 + gx) / 2.0
    }

    /// `∫_0^1 |g|^q`, in closed form.
    pub fn power_integral(&self, q: f64) -> f64 {
        let b = &self.breaks;
        let last = b.len() - 1;
        let mut total = b[0].0 * b[0].1.abs().powf(q) + (1.0 - b[last].0) * b[last].1.abs().powf(q);
        for w in b.windows(2) {
            total += linear_power_integral(w[1].0 - w[0].0, w[0].1, w[1].1, q);
        }
        total
    }
}

/// `∫_0^len |a + (b - a) t / len|^q dt`.
fn linear_power_integral(len: f64, a: f64, b: f64, q: f64) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    if (b - a).abs() <= 1e-14 * a.abs().max(b.abs()) {
        return len * a.abs().max(b.abs()).powf(q);
    }
    let prim = |t: f64| t.signum() * t.abs().powf(q + 1.0) / (q + 1.0);
    len * (prim(b) - prim(a)) / (b - a)
}

/// Slopes `d_0 = 0, d_1, ..., d_{m-1}, d_m = 0` of the interpolant.
fn extended_slopes(s: &SampleSet) -> Vec<f64> {
    let mut d = vec![0.0];
    d.extend(s.slopes());
    d.push(0.0);
    d
}

/// Derivative of the interpolant with each jump replaced by a linear ramp of
/// width `eps2` ending at the knot.
pub fn smoothed_derivative(s: &SampleSet, eps2: f64) -> Result<SmoothedDerivative> {
    if s.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: s.len(),
        });
    }
    let gap = s.min_gap().unwrap_or(1.0);
    let u1 = s.points()[0].u;
    if !(eps2 > 0.0 && eps2 < gap && (u1 == 0.0 || eps2 < u1)) {
        return Err(Error::InvalidParameter(format!(
            "ramp width {eps2} must be positive, below the smallest gap {gap} and below u1 = {u1}"
        )));
    }
    let d = extended_slopes(s);
    let mut breaks = Vec::with_capacity(2 * s.len());
    for (i, p) in s.points().iter().enumerate() {
        if !(i == 0 && p.u == 0.0) {
            breaks.push((p.u - eps2, d[i]));
        }
        breaks.push((p.u, d[i + 1]));
    }
    let mut cumulative = vec![0.0; breaks.len()];
    for i in 1..breaks.len() {
        let (x0, y0) = breaks[i - 1];
        let (x1, y1) = breaks[i];
        cumulative[i] = cumulative[i - 1] + (x1 - x0) * (y0 + y1) / 2.0;
    }
    let mut g = SmoothedDerivative {
        breaks,
        ramp: eps2,
        cumulative,
        anchor: 0.0,
    };
    // anchor so that the antiderivative passes through the first point
    g.anchor = s.points()[0].v - g.integral_to(u1);
    Ok(g)
}

/// Bernstein approximant of a Lipschitz function with sup error below
/// `eps3`, certified on a grid with a Lipschitz margin.
pub fn bernstein_approximate(
    g: impl Fn(f64) -> f64 + Sync,
    lipschitz: f64,
    eps3: f64,
) -> Result<Polynomial> {
    bernstein_approximate_capped(g, lipschitz, eps3, DEFAULT_DEGREE_CAP)
}

pub fn bernstein_approximate_capped(
    g: impl Fn(f64) -> f64 + Sync,
    lipschitz: f64,
    eps3: f64,
    cap: usize,
) -> Result<Polynomial> {
    if !(eps3 > 0.0) || !(lipschitz >= 0.0) || !lipschitz.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need eps3 > 0 and a finite Lipschitz constant, got {eps3}, {lipschitz}"
        )));
    }
    if lipschitz == 0.0 {
        return Ok(Polynomial::constant(g(0.0)));
    }
    let grid = 4096usize.max((4.0 * lipschitz / eps3).ceil() as usize);
    let h = 1.0 / (grid - 1) as f64;
    let slack = lipschitz * h;
    let mut n = ((lipschitz / (4.0 * eps3)).powi(2).ceil() as usize).clamp(1, cap);
    loop {
        let p = Polynomial::bernstein_of(&g, n);
        let err = (0..grid)
            .into_par_iter()
            .map(|i| {
                let x = i as f64 * h;
                (p.eval(x) - g(x)).abs()
            })
            .reduce(|| 0.0, f64::max);
        if err + slack < eps3 {
            return Ok(p);
        }
        if n >= cap {
            return Err(Error::DegreeCap {
                cap,
                detail: format!(
                    "grid error {err:.3e} plus margin {slack:.3e} at degree {n}, target {eps3:.3e}"
                ),
            });
        }
        n = (2 * n).min(cap);
    }
}

/// `∫_0^1 |P'|^q` by Gauss-Kronrod on the pieces between roots of `P'`.
pub fn q_action_poly(p: &Polynomial, q: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need finite q >= 1, got {q}"
        )));
    }
    if p.degree() == 0 {
        return Ok(0.0);
    }
    let roots = derivative_roots(p);
    let mut cuts = vec![0.0];
    cuts.extend(roots.into_iter().filter(|&r| r > 0.0 && r < 1.0));
    cuts.push(1.0);
    let f = |x: f64| p.eval_derivative(x).abs().powf(q);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            total += adaptive_gk(&f, w[0], w[1], 1e-11, 0);
        }
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Numerical(
            "q-action quadrature produced a non-finite value".into(),
        ))
    }
}

/// Composite Simpson rule with `intervals` subintervals.
pub fn q_action_poly_composite(p: &Polynomial, q: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) & !1;
    let h = 1.0 / n as f64;
    let f = |i: usize| p.eval_derivative(i as f64 * h).abs().powf(q);
    let inner: f64 = (1..n)
        .into_par_iter()
        .map(|i| if i % 2 == 1 { 4.0 * f(i) } else { 2.0 * f(i) })
        .sum();
    (f(0) + f(n) + inner) * h / 3.0
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WEIGHTS[7] * fc;
    let mut g = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let s = f(c - h * GK_NODES[i]) + f(c + h * GK_NODES[i]);
        k += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

fn adaptive_gk(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (val, err) = gk15(f, a, b);
    if err <= tol.max(1e-15 * val.abs()) || depth >= 40 || b - a < 1e-13 {
        return val;
    }
    let c = 0.5 * (a + b);
    adaptive_gk(f, a, c, tol / 2.0, depth + 1) + adaptive_gk(f, c, b, tol / 2.0, depth + 1)
}

/// Roots of `P'` in `(0, 1)`: Bernstein subdivision for modest degrees, a
/// sign scan at resolution finer than the basis width otherwise.
fn derivative_roots(p: &Polynomial) -> Vec<f64> {
    let c = &p.deriv;
    let mut roots = Vec::new();
    if sign_changes(c) == 0 {
        return roots;
    }
    let n = c.len() - 1;
    if n <= 256 {
        isolate(c, 0.0, 1.0, &|x| eval_bernstein(c, x), &mut roots);
    } else {
        let grid = (4 * n).min(1 << 16);
        let h = 1.0 / grid as f64;
        let mut prev = eval_bernstein(c, 0.0);
        for i in 1..=grid {
            let x = i as f64 * h;
            let cur = eval_bernstein(c, x);
            if cur == 0.0 {
                roots.push(x);
            } else if prev != 0.0 && prev.signum() != cur.signum() {
                roots.push(bisect_root(&|t| eval_bernstein(c, t), x - h, x));
            }
            prev = cur;
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    roots
}

fn sign_changes(c: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in c {
        if v != 0.0 {
            if last != 0.0 && v.signum() != last.signum() {
                count += 1;
            }
            last = v;
        }
    }
    count
}

fn isolate(c: &[f64], a: f64, b: f64, f: &dyn Fn(f64) -> f64, out: &mut Vec<f64>) {
    let v = sign_changes(c);
    if v == 0 {
        return;
    }
    let (fa, fb) = (c[0], c[c.len() - 1]);
    if v == 1 && fa != 0.0 && fb != 0.0 {
        out.push(bisect_root(f, a, b));
        return;
    }
    if b - a < 1e-12 {
        out.push(0.5 * (a + b));
        return;
    }
    let (left, right) = split_half(c);
    let m = 0.5 * (a + b);
    if f(m) == 0.0 {
        out.push(m);
    }
    isolate(&left, a, m, f, out);
    isolate(&right, m, b, f, out);
}

fn split_half(c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = c.len() - 1;
    let mut b = c.to_vec();
    let mut left = Vec::with_capacity(n + 1);
    let mut right = vec![0.0; n + 1];
    left.push(b[0]);
    right[n] = b[n];
    for r in 1..=n {
        for k in 0..=n - r {
            b[k] = 0.5 * (b[k] + b[k + 1]);
        }
        left.push(b[0]);
        right[n - r] = b[n - r];
    }
    (left, right)
}

fn bisect_root(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Tolerances for the approximate pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub eps: f64,
    /// Knot perturbation for the exact pipeline, when the action is below 1.
    pub eps1: Option<f64>,
    pub eps2: f64,
    pub eps3: f64,
    pub big_c: f64,
    pub c1: f64,
    /// `c1^q`, the bound on the spread of `|d_i|^q`.
    pub c: f64,
    pub degree: usize,
    /// Upper bound on the q-action of the fitted polynomial.
    pub action_bound: f64,
    pub max_residual: f64,
}

impl BudgetPlan {
    pub fn new(s: &SampleSet, q: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!("need eps > 0, got {eps}")));
        }
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need finite q >= 1, got {q}"
            )));
        }
        if s.len() < 2 {
            return Err(Error::TooFewPoints {
                needed: 2,
                got: s.len(),
            });
        }
        let m = s.len() as f64;
        let gap = s.min_gap().unwrap_or(1.0);
        let u1 = s.points()[0].u;
        let slopes = s.slopes();
        let c1 = slopes.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        let c = c1.powf(q);
        let mut eps2 = gap / 2.0;
        if u1 > 0.0 {
            eps2 = eps2.min(u1 / 2.0);
        }
        if c > 0.0 {
            eps2 = eps2.min(eps / (4.0 * m * c));
        }
        let eps3 = (eps / 4.0).min(((c + eps / 2.0).powf(1.0 / q) - c1) / 2.0);
        let big_c = 2.0 / gap;
        let action = s.q_action(q);
        let eps1 = (action < 1.0).then(|| {
            let slack = (1.0 - action) / m;
            slopes
                .iter()
                .map(|d| ((d.abs().powf(q) + slack).powf(1.0 / q) - d.abs()) / big_c)
                .fold(f64::INFINITY, f64::min)
                .min(1.0 / big_c)
                / 2.0
        });
        Ok(BudgetPlan {
            eps,
            eps1,
            eps2,
            eps3,
            big_c,
            c1,
            c,
            degree: 0,
            action_bound: f64::NAN,
            max_residual: f64::NAN,
        })
    }
}

/// Bernstein fits of degree `n` on fixed knots. The fitted polynomial is the
/// Bernstein operator applied to the smoothed interpolant of adjusted knot
/// values; since that interpolant is linear in the values, everything is
/// assembled from one grid per unit vector.
struct Fitter<'a> {
    s: &'a SampleSet,
    q: f64,
    eps2: f64,
    n: usize,
    windows: Vec<(usize, Vec<f64>)>,
    unit_grids: Vec<Vec<f64>>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

struct Fit {
    poly: Polynomial,
    /// Upper bound on the q-action of `poly`.
    action_bound: f64,
    max_residual: f64,
}

fn with_values(s: &SampleSet, w: &[f64]) -> Result<SampleSet> {
    SampleSet::from_pairs(s.points().iter().zip(w).map(|(p, &v)| (p.u, v)))
}

impl<'a> Fitter<'a> {
    fn new(s: &'a SampleSet, q: f64, eps2: f64, n: usize) -> Result<Self> {
        let m = s.len();
        let windows: Vec<(usize, Vec<f64>)> =
            s.points().iter().map(|p| basis_window(n, p.u)).collect();
        let unit_grids = (0..m)
            .map(|j| {
                let unit: Vec<f64> = (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
                let g = smoothed_derivative(&with_values(s, &unit)?, eps2)?;
                Ok((0..=n)
                    .map(|k| g.antiderivative(k as f64 / n as f64))
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mut fitter = Fitter {
            s,
            q,
            eps2,
            n,
            windows,
            unit_grids,
            lu: DMatrix::<f64>::zeros(0, 0).lu(),
        };
        let mut mat = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            let col = fitter.at_knots(&fitter.unit_grids[j]);
            for i in 0..m {
                mat[(i, j)] = col[i];
            }
        }
        fitter.lu = mat.lu();
        Ok(fitter)
    }

    fn grid(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n + 1];
        for (wj, g) in w.iter().zip(&self.unit_grids) {
            for (o, v) in out.iter_mut().zip(g) {
                *o += wj * v;
            }
        }
        out
    }

    fn at_knots(&self, grid: &[f64]) -> Vec<f64> {
        self.windows
            .iter()
            .map(|(start, w)| w.iter().zip(&grid[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Fit whose knot residuals against `targets` are below `tol`. The knot
    /// correction is scaled down to leave residuals near `0.8 tol`, which
    /// spends as little action as possible.
    fn fit(&self, targets: &[f64], tol: f64) -> Result<Fit> {
        let r0: Vec<f64> = self
            .at_knots(&self.grid(targets))
            .iter()
            .zip(targets)
            .map(|(a, b)| a - b)
            .collect();
        let r0_max = r0.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        let mut w = targets.to_vec();
        if r0_max >= 0.9 * tol {
            // a singular system leaves the values alone; the caller sees the
            // residual and raises the degree
            if let Some(delta) = self.lu.solve(&DVector::from_vec(r0)) {
                let t = 1.0 - 0.8 * tol / r0_max;
                for (wi, d) in w.iter_mut().zip(delta.iter()) {
                    *wi -= t * d;
                }
            }
        }
        let grid = self.grid(&w);
        let kantorovich = Polynomial::from_bernstein(
            grid.windows(2)
                .map(|p| self.n as f64 * (p[1] - p[0]))
                .collect(),
        );
        let poly = integrate_from(&kantorovich, grid[0]);
        let max_residual = self
            .s
            .points()
            .iter()
            .zip(targets)
            .map(|(p, t)| (poly.eval(p.u) - t).abs())
            .fold(0.0, f64::max);
        let action_bound =
            smoothed_derivative(&with_values(self.s, &w)?, self.eps2)?.power_integral(self.q);
        Ok(Fit {
            poly,
            action_bound,
            max_residual,
        })
    }
}

fn next_degree(n: usize, cap: usize, detail: impl FnOnce() -> String) -> Result<usize> {
    if n >= cap {
        return Err(Error::DegreeCap {
            cap,
            detail: detail(),
        });
    }
    Ok((2 * n).min(cap))
}

/// Polynomial within `eps` of every knot value with q-action below
/// `J_q[f_S] + eps`.
pub fn approx_interpolant_poly(
    s: &SampleSet,
    q: f64,
    eps: f64,
) -> Result<(Polynomial, BudgetPlan)> {
    approx_interpolant_poly_with(s, q, eps, eps, DEFAULT_DEGREE_CAP)
}

/// As [`approx_interpolant_poly`] with separate residual and action slack.
/// The degree doubles until both hold; the action is certified by the
/// smoothed interpolant's action or, failing that, by quadrature.
pub fn approx_interpolant_poly_with(
    s: &SampleSet,
    q: f64,
    residual_tol: f64,
    action_slack: f64,
    cap: usize,
) -> Result<(Polynomial, BudgetPlan)> {
    let mut plan = BudgetPlan::new(s, q, residual_tol.min(action_slack))?;
    if plan.c1 == 0.0 {
        plan.action_bound = 0.0;
        plan.max_residual = 0.0;
        return Ok((Polynomial::constant(s.points()[0].v), plan));
    }
    let targets: Vec<f64> = s.iter().map(|p| p.v).collect();
    let limit = s.q_action(q) + action_slack;
    let mut n = START_DEGREE.min(cap);
    loop {
        let mut fit = Fitter::new(s, q, plan.eps2, n)?.fit(&targets, residual_tol)?;
        if fit.max_residual < residual_tol {
            if fit.action_bound >= limit {
                let measured = q_action_poly(&fit.poly, q)? + 1e-9;
                fit.action_bound = fit.action_bound.min(measured);
            }
            if fit.action_bound < limit {
                plan.degree = n;
                plan.action_bound = fit.action_bound;
                plan.max_residual = fit.max_residual;
                return Ok((fit.poly, plan));
            }
        }
        n = next_degree(n, cap, || {
            format!(
                "residual {:.3e} (tolerance {residual_tol:.3e}), action {:.6} (limit {limit:.6})",
                fit.max_residual, fit.action_bound
            )
        })?;
    }
}

/// Weights over `2^k` functions reproducing the target values, together with
/// the functions they apply to.
pub struct Combined<'a, F> {
    pub weights: Vec<f64>,
    fns: &'a [F],
}

impl<F: Fn(f64) -> f64> Combined<'_, F> {
    pub fn eval(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.fns)
            .map(|(w, f)| w * f(x))
            .sum()
    }
}

/// Averages functions indexed by subsets (bit `i` of the index set means
/// the function lies above target `i`) into one that hits every target.
pub fn weighted_combine<'a, F: Fn(f64) -> f64>(
    fns: &'a [F],
    targets: &[SamplePoint],
) -> Result<Combined<'a, F>> {
    let values: Vec<Vec<f64>> = fns
        .iter()
        .map(|f| targets.iter().map(|t| f(t.u)).collect())
        .collect();
    let weights = combine_weights(&values, targets)?;
    Ok(Combined { weights, fns })
}

/// Weights from the values of each function at the targets.
pub fn combine_weights(values: &[Vec<f64>], targets: &[SamplePoint]) -> Result<Vec<f64>> {
    let k = targets.len();
    let count = 1usize << k;
    if values.len() != count {
        return Err(Error::WrongCount {
            expected: count,
            got: values.len(),
        });
    }
    for (x, vals) in values.iter().enumerate() {
        for (i, t) in targets.iter().enumerate() {
            let inside = x >> i & 1 == 1;
            if (vals[i] > t.v) != inside {
                return Err(Error::SignPattern {
                    subset: (0..k).filter(|i| x >> i & 1 == 1).collect(),
                    index: i,
                });
            }
        }
    }
    // each handle: (weights over the original functions, values at targets)
    let mut handles: Vec<(Vec<f64>, Vec<f64>)> = values
        .iter()
        .enumerate()
        .map(|(x, v)| {
            let mut w = vec![0.0; count];
            w[x] = 1.0;
            (w, v.clone())
        })
        .collect();
    for level in (0..k).rev() {
        let half = 1usize << level;
        let target = targets[level].v;
        handles = (0..half)
            .map(|y| {
                let (lo_w, lo_v) = &handles[y];
                let (hi_w, hi_v) = &handles[y | half];
                let w = (target - lo_v[level]) / (hi_v[level] - lo_v[level]);
                let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
                    a.iter()
                        .zip(b)
                        .map(|(l, h)| w * h + (1.0 - w) * l)
                        .collect()
                };
                let mut vals = mix(lo_v, hi_v);
                vals[level] = target;
                (mix(lo_w, hi_w), vals)
            })
            .collect();
    }
    Ok(handles.swap_remove(0).0)
}

/// Output of the exact pipeline.
#[derive(Debug, Clone)]
pub struct ExactFit {
    pub poly: Polynomial,
    pub plan: Option<BudgetPlan>,
    pub weights: Vec<f64>,
    /// Largest certified action over the perturbed fits.
    pub component_action: f64,
    pub max_residual: f64,
}

/// Polynomial through every point of `s` with q-action below 1.
pub fn exact_interpolant_poly(s: &SampleSet, q: f64) -> Result<ExactFit> {
    exact_interpolant_poly_with(s, q, DEFAULT_MAX_POINTS, DEFAULT_DEGREE_CAP)
}

/// Largest `|D'|` over `[0, 1]` for `D = a - b`, from its derivative
/// coefficients.
fn derivative_gap(a: &Polynomial, b: &Polynomial) -> f64 {
    a.deriv
        .iter()
        .zip(&b.deriv)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn exact_interpolant_poly_with(
    s: &SampleSet,
    q: f64,
    max_points: usize,
    cap: usize,
) -> Result<ExactFit> {
    if s.is_empty() {
        return Err(Error::EmptySet);
    }
    if s.len() > max_points {
        return Err(Error::TooManyPoints {
            got: s.len(),
            max: max_points,
        });
    }
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need finite q >= 1, got {q}"
        )));
    }
    let action = s.q_action(q);
    if !(action < 1.0) {
        return Err(Error::ActionNotBelowOne(action));
    }
    if s.len() == 1 || s.slopes().iter().all(|&d| d == 0.0) {
        return Ok(ExactFit {
            poly: Polynomial::constant(s.points()[0].v),
            plan: None,
            weights: vec![1.0],
            component_action: 0.0,
            max_residual: 0.0,
        });
    }
    let mut plan = BudgetPlan::new(s, q, (1.0 - action) / 2.0)?;
    let eps1 = plan.eps1.expect("action below one");
    let m = s.len();
    let base: Vec<f64> = s.iter().map(|p| p.v).collect();
    let perturbed: Vec<(Vec<f64>, f64)> = (0..1usize << m)
        .map(|x| {
            let t: Vec<f64> = base
                .iter()
                .enumerate()
                .map(|(i, v)| if x >> i & 1 == 1 { v + eps1 } else { v - eps1 })
                .collect();
            let jx = with_values(s, &t)?.q_action(q);
            Ok((t, 1.0 - (1.0 - jx) * 1e-3))
        })
        .collect::<Result<_>>()?;
    let tol = eps1 / 2.0;
    let mut n = START_DEGREE.min(cap);
    loop {
        let fitter = Fitter::new(s, q, plan.eps2, n)?;
        let centre = fitter.fit(&base, tol / 4.0)?;
        let fits: Vec<Fit> = perturbed
            .par_iter()
            .map(|(t, _)| fitter.fit(t, tol))
            .collect::<Result<_>>()?;
        // each perturbed fit is the centre fit plus a small change, so
        // Minkowski gives J(P_X)^(1/q) <= J(centre)^(1/q) + max|D'|
        let mut centre_action: Option<f64> = None;
        let mut ok = centre.max_residual < tol / 4.0;
        let mut worst = 0.0f64;
        for (fit, (_, limit)) in fits.iter().zip(&perturbed) {
            let mut bound = fit.action_bound;
            if ok && bound >= *limit {
                let jc = match centre_action {
                    Some(j) => j,
                    None => {
                        let j = q_action_poly(&centre.poly, q)? + 1e-9;
                        centre_action = Some(j);
                        j
                    }
                };
                bound =
                    bound.min((jc.powf(1.0 / q) + derivative_gap(&fit.poly, &centre.poly)).powf(q));
            }
            worst = worst.max(bound);
            ok &= fit.max_residual < tol && bound < *limit;
        }
        if ok {
            let values: Vec<Vec<f64>> = fits
                .iter()
                .map(|f| s.iter().map(|p| f.poly.eval(p.u)).collect())
                .collect();
            let weights = combine_weights(&values, s.points())?;
            let mut coef = vec![0.0; n + 1];
            for (f, w) in fits.iter().zip(&weights) {
                for (c, b) in coef.iter_mut().zip(&f.poly.coef) {
                    *c += w * b;
                }
            }
            let poly = Polynomial::from_bernstein(coef);
            let max_residual = s
                .iter()
                .map(|p| (poly.eval(p.u) - p.v).abs())
                .fold(0.0, f64::max);
            plan.degree = n;
            plan.action_bound = worst;
            plan.max_residual = max_residual;
            return Ok(ExactFit {
                poly,
                plan: Some(plan),
                weights,
                component_action: worst,
                max_residual,
            });
        }
        n = next_degree(n, cap, || {
            format!("perturbed fits not certified; worst action bound {worst:.6}")
        })?;
    }
}

/// JSON-friendly description of a polynomial and its fit quality.
#[derive(Debug, Clone, Serialize)]
pub struct PolyCertificate {
    pub degree: usize,
    pub bernstein: Vec<f64>,
    pub monomial: Option<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub q: f64,
    pub q_action: f64,
    pub action_bound: f64,
}

impl PolyCertificate {
    pub fn new(p: &Polynomial, s: &SampleSet, q: f64, action_bound: f64) -> Result<Self> {
        Ok(PolyCertificate {
            degree: p.degree(),
            bernstein: p.bernstein().to_vec(),
            monomial: p.to_monomial(),
            residuals: s.iter().map(|pt| p.eval(pt.u) - pt.v).collect(),
            q,
            q_action: q_action_poly(p, q)?,
            action_bound,
        })
    }
}
