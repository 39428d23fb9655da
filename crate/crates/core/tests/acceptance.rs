//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use smooth_learn::adversaries::{AdversarySpec, QueryPolicy};
use smooth_learn::engine::{
    run_game, scale_transcript, total_error, verify_legality, GameConfig, Transcript,
};
use smooth_learn::experiments::{self, all_policies, EpsilonSweepSpec, LemmaSuiteSpec};
use smooth_learn::learners::{LearnerSpec, ResetScope};
use smooth_learn::lemma_oracle::GapId;
use smooth_learn::poly_approx::{
    approx_interpolant_poly, exact_interpolant_poly, q_action_poly, q_action_poly_composite,
};
use smooth_learn::{ActionExponent, SampleSet};

struct Outcome {
    pass: bool,
    detail: String,
}

fn staged() -> LearnerSpec {
    LearnerSpec::Staged {
        threshold: None,
        reset_scope: ResetScope::Full,
    }
}

fn greedy(policy: QueryPolicy) -> AdversarySpec {
    AdversarySpec::Greedy {
        query_policy: policy,
        budget: 1.0,
    }
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn linint_six_over_eps() -> Outcome {
    let start = Instant::now();
    let rows = experiments::sweep_epsilon(&EpsilonSweepSpec::default(), 0).expect("sweep");
    let bad = rows
        .iter()
        .filter(|r| r.observed > 6.0 / r.eps + 1e-6)
        .count();
    let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let t = start.elapsed();
    Outcome {
        pass: rows.len() == 45 && bad == 0 && within(t, 120),
        detail: format!(
            "{} games, {bad} over 6/eps, max ratio {worst:.4}, {:.1}s (limit 120s)",
            rows.len(),
            t.as_secs_f64()
        ),
    }
}

fn standard_opt_one() -> Outcome {
    let mut cells = Vec::new();
    for (p, q) in [(2.0, 2.0), (3.0, 2.0), (2.0, 3.0)] {
        for pol in all_policies() {
            for seed in 0..5 {
                cells.push(GameConfig::standard(
                    p,
                    q,
                    2000,
                    LearnerSpec::Linint,
                    greedy(pol.clone()),
                    seed,
                ));
            }
        }
    }
    let totals: Vec<f64> = cells
        .par_iter()
        .map(|c| run_game(c).expect("game").counted_total)
        .collect();
    let worst = totals.iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: worst <= 1.0 + 1e-9,
        detail: format!(
            "{} games, max counted_total {worst:.9} (bound 1 + 1e-9)",
            totals.len()
        ),
    }
}

fn lemma_suites() -> Outcome {
    let start = Instant::now();
    let reports = experiments::verify_lemmas(&LemmaSuiteSpec::default(), 2024).expect("lemmas");
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &reports {
        let needed = if r.gap == GapId::Cumulative {
            1000
        } else {
            100_000
        };
        let ok = !r.flagged && r.samples >= needed && r.min_gap >= -1e-9;
        pass &= ok;
        let label = match r.argmin.get("p") {
            Some(p) if r.gap == GapId::Cumulative => format!("{}(p={p})", r.gap),
            _ => r.gap.to_string(),
        };
        parts.push(format!("{label} {} min {:+.1e}", r.samples, r.min_gap));
    }
    let t = start.elapsed();
    Outcome {
        pass: pass && reports.len() == 8 && within(t, 180),
        detail: format!("{}; {:.1}s (limit 180s)", parts.join(", "), t.as_secs_f64()),
    }
}

fn noisy_lower_bound() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for eta in 1..=3 {
        for learner in [LearnerSpec::Linint, staged()] {
            let cfg = GameConfig::noisy(
                2.0,
                2.0,
                eta,
                2000,
                learner.clone(),
                AdversarySpec::NoisyLb,
                0,
            );
            let t = run_game(&cfg).expect("game");
            let legal = verify_legality(&t, eta, ActionExponent::Finite(2.0)).expect("finalized");
            let bound = 2.0 * eta as f64 + 1.0;
            let ok = legal && t.lie_count() == eta && t.counted_total >= bound - 1e-9;
            pass &= ok;
            parts.push(format!(
                "eta {eta} {} {:.3}>={bound}",
                learner.id(),
                t.counted_total
            ));
        }
    }
    Outcome {
        pass,
        detail: format!("{} (legal, exactly eta lies)", parts.join(", ")),
    }
}

fn noisy_upper_bound() -> Outcome {
    let start = Instant::now();
    let policies = all_policies();
    let mut pass = true;
    let mut parts = Vec::new();
    for eta in 1..=3usize {
        let mut cells: Vec<GameConfig> = (0..1000u64)
            .map(|seed| {
                let adversary = AdversarySpec::RandomLiar {
                    query_policy: policies[seed as usize % policies.len()].clone(),
                    lie_magnitude: 1.0,
                };
                GameConfig::noisy(2.0, 2.0, eta, 2000, staged(), adversary, seed)
            })
            .collect();
        cells.push(GameConfig::noisy(
            2.0,
            2.0,
            eta,
            2000,
            staged(),
            AdversarySpec::NoisyLb,
            0,
        ));
        let runs: Vec<(f64, usize)> = cells
            .par_iter()
            .map(|c| {
                let t = run_game(c).expect("game");
                (t.counted_total, t.stage_count.unwrap_or(1) - 1)
            })
            .collect();
        let worst = runs.iter().map(|r| r.0).fold(0.0, f64::max);
        let resets = runs.iter().map(|r| r.1).max().unwrap_or(0);
        let bound = 12.0 * eta as f64 + 6.0;
        pass &= worst <= bound && resets <= eta;
        parts.push(format!(
            "eta {eta}: max {worst:.3}<={bound}, resets {resets}<={eta}"
        ));
    }
    let t = start.elapsed();
    Outcome {
        pass: pass && within(t, 300),
        detail: format!(
            "{}; 3003 games {:.1}s (limit 300s)",
            parts.join(", "),
            t.as_secs_f64()
        ),
    }
}

fn initial_rounds() -> Outcome {
    let mut pass = true;
    let mut min_first = f64::INFINITY;
    for eta in 1..=3 {
        for learner in [LearnerSpec::Linint, staged()] {
            let mut cfg = GameConfig::noisy(
                2.0,
                2.0,
                eta,
                2 * eta + 1,
                learner,
                AdversarySpec::InsufficientInit { c: 1e6 },
                0,
            );
            cfg.warmup = Some(2 * eta);
            let t = run_game(&cfg).expect("game");
            let first = t.first_counted().expect("one counted trial");
            let err = (first.prediction - first.true_value.expect("finalized")).abs();
            min_first = min_first.min(err);
            pass &= err >= 5e5 && t.lie_count() <= eta;
        }
    }
    let trials: Vec<_> = (0..1000u64)
        .into_par_iter()
        .map(|seed| experiments::band_trial(1 + seed as usize % 3, 2.0, 20, seed).expect("trial"))
        .collect();
    let bad = trials.iter().filter(|t| !t.holds).count();
    let widest = trials.iter().map(|t| t.max_offset).fold(0.0, f64::max);
    Outcome {
        pass: pass && bad == 0,
        detail: format!(
            "min first counted error {min_first:.3e} (>= 5e5); band: {bad}/1000 outside, max offset {widest:.6}"
        ),
    }
}

/// Random sets with at most 6 points, knot gaps of at least 0.02 and
/// q-action in (0.05, 0.9).
fn random_poly_set(rng: &mut ChaCha8Rng, q: f64) -> SampleSet {
    let m = rng.random_range(2..=6);
    let us = loop {
        let mut us: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        us.sort_by(f64::total_cmp);
        if us.windows(2).all(|w| w[1] - w[0] >= 0.02) {
            break us;
        }
    };
    let vs: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = SampleSet::from_pairs(us.into_iter().zip(vs)).expect("distinct knots");
    let target = rng.random_range(0.05..0.9);
    s.scaled((target / s.q_action(q)).powf(1.0 / q))
}

fn polynomial_pipeline() -> Outcome {
    let start = Instant::now();
    let qs = [1.5, 2.0, 3.0];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sets: Vec<(f64, SampleSet)> = (0..200)
        .map(|k| {
            let q = qs[k % 3];
            (q, random_poly_set(&mut rng, q))
        })
        .collect();
    let results: Vec<(bool, f64, String)> = sets
        .par_iter()
        .enumerate()
        .map(|(k, (q, s))| {
            let q = *q;
            let j = s.q_action(q);
            let mut ok = true;
            let mut note = String::new();
            let mut worst_rel = 0.0f64;
            for eps in [0.1, 0.01] {
                match approx_interpolant_poly(s, q, eps) {
                    Ok((p, _)) => {
                        let res = s
                            .iter()
                            .map(|pt| (p.eval(pt.u) - pt.v).abs())
                            .fold(0.0, f64::max);
                        let a = q_action_poly(&p, q).expect("quadrature");
                        if !(res < eps && a < j + eps) {
                            ok = false;
                            note = format!(
                                "set {k} eps {eps}: residual {res:.2e}, action {a:.4} vs {j:.4}"
                            );
                        }
                    }
                    Err(e) => {
                        ok = false;
                        note = format!("set {k} eps {eps}: {e}");
                    }
                }
            }
            match exact_interpolant_poly(s, q) {
                Ok(fit) => {
                    let res = s
                        .iter()
                        .map(|pt| (fit.poly.eval(pt.u) - pt.v).abs())
                        .fold(0.0, f64::max);
                    let a = q_action_poly(&fit.poly, q).expect("quadrature");
                    if !(res <= 1e-8 && a < 1.0) {
                        ok = false;
                        note = format!("set {k} exact: residual {res:.2e}, action {a:.4}");
                    }
                    if k % 10 == 0 {
                        let oracle = q_action_poly_composite(&fit.poly, q, 1_000_000);
                        worst_rel = (a - oracle).abs() / oracle.max(1e-300);
                        if worst_rel > 1e-6 {
                            ok = false;
                            note = format!("set {k}: quadrature {a} vs composite {oracle}");
                        }
                    }
                }
                Err(e) => {
                    ok = false;
                    note = format!("set {k} exact: {e}");
                }
            }
            (ok, worst_rel, note)
        })
        .collect();
    let failures: Vec<&String> = results.iter().filter(|r| !r.0).map(|r| &r.2).collect();
    let rel = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let t = start.elapsed();
    let mut detail = format!(
        "{} sets, {} failing, max quadrature/composite rel diff {rel:.1e} on 20 sets, {:.1}s (limit 600s)",
        sets.len(),
        failures.len(),
        t.as_secs_f64()
    );
    if let Some(first) = failures.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    Outcome {
        pass: failures.is_empty() && within(t, 600),
        detail,
    }
}

fn stored_transcripts() -> Vec<Transcript> {
    let policies = all_policies();
    (0..100u64)
        .into_par_iter()
        .map(|k| {
            let pol = policies[k as usize % 3].clone();
            let cfg = match k % 4 {
                0 => GameConfig::standard(2.0, 2.0, 200, LearnerSpec::Linint, greedy(pol), k),
                1 => GameConfig::standard(1.5, 1.5, 200, LearnerSpec::Linint, greedy(pol), k),
                2 => GameConfig::noisy(
                    2.0,
                    2.0,
                    1 + k as usize % 3,
                    200,
                    staged(),
                    AdversarySpec::RandomLiar {
                        query_policy: pol,
                        lie_magnitude: 1.0,
                    },
                    k,
                ),
                _ => GameConfig::noisy(
                    3.0,
                    2.0,
                    1 + k as usize % 3,
                    200,
                    LearnerSpec::Linint,
                    AdversarySpec::NoisyLb,
                    k,
                ),
            };
            run_game(&cfg).expect("game")
        })
        .collect()
}

fn scaling_identity() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    for (i, t) in stored_transcripts().iter().enumerate() {
        let f = std::fs::File::create(dir.path().join(format!("{i:03}.json"))).expect("create");
        serde_json::to_writer(f, t).expect("write");
    }
    let mut worst = 0.0f64;
    let mut count = 0;
    for i in 0..100 {
        let text = std::fs::read_to_string(dir.path().join(format!("{i:03}.json"))).expect("read");
        let t: Transcript = serde_json::from_str(&text).expect("parse");
        let p = t.config.p;
        for c in [0.5, 2.0] {
            let s = scale_transcript(&t, c).expect("scale");
            let want = t.counted_total * c.powf(p);
            let recomputed = total_error(&s, p).expect("finalized");
            for got in [s.counted_total, recomputed] {
                worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
            }
            count += 1;
        }
    }
    Outcome {
        pass: count == 200 && worst <= 1e-12,
        detail: format!(
            "{count} scalings of 100 stored transcripts, max rel diff {worst:.2e} (limit 1e-12)"
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("LININT 6/eps bound", linint_six_over_eps),
        ("standard opt = 1 for p, q >= 2", standard_opt_one),
        ("inequality suites", lemma_suites),
        ("noisy lower bound 2eta+1", noisy_lower_bound),
        ("noisy upper bound 12eta+6", noisy_upper_bound),
        ("initial rounds", initial_rounds),
        ("polynomial pipeline", polynomial_pipeline),
        ("scaling identity", scaling_identity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} | {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {}/8 passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
