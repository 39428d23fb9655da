use proptest::prelude::*;

use smooth_learn::adversaries::{AdversarySpec, QueryPolicy};
use smooth_learn::engine::{
    run_game, scale_transcript, total_error, write_transcript_csv, GameConfig, Summary,
};
use smooth_learn::learners::LearnerSpec;
use smooth_learn::poly_approx::{approx_interpolant_poly, exact_interpolant_poly, q_action_poly};
use smooth_learn::SampleSet;

fn greedy(seed: u64, p: f64, q: f64, rounds: usize) -> GameConfig {
    GameConfig::standard(
        p,
        q,
        rounds,
        LearnerSpec::Linint,
        AdversarySpec::Greedy {
            query_policy: QueryPolicy::UniformRandom,
            budget: 1.0,
        },
        seed,
    )
}

#[test]
fn transcript_round_trips_through_json() {
    let t = run_game(&greedy(4, 2.0, 2.0, 300)).unwrap();
    let text = serde_json::to_string(&t).unwrap();
    let back: smooth_learn::engine::Transcript = serde_json::from_str(&text).unwrap();
    assert_eq!(back, t);
    let mut csv = Vec::new();
    write_transcript_csv(&t, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 301);
}

#[test]
fn summary_checks_hold_for_standard_games() {
    for seed in 0..5 {
        let s = Summary::of(&run_game(&greedy(seed, 2.0, 3.0, 400)).unwrap());
        assert_eq!(s.violations(), 0);
        assert!(!s.bound_checks.is_empty());
    }
}

#[test]
fn exact_fit_of_game_points() {
    let t = run_game(&greedy(1, 2.0, 2.0, 5)).unwrap();
    let s = SampleSet::from_pairs(t.trials.iter().map(|r| (r.x, r.revealed * 0.9))).unwrap();
    if s.min_gap().unwrap() >= 0.02 && s.q_action(2.0) < 1.0 {
        let fit = exact_interpolant_poly(&s, 2.0).unwrap();
        assert!(fit.max_residual <= 1e-8);
        assert!(q_action_poly(&fit.poly, 2.0).unwrap() < 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaling_matches_power(seed in 0u64..1000, c in 0.1f64..5.0) {
        let t = run_game(&greedy(seed, 1.5, 1.5, 60)).unwrap();
        let s = scale_transcript(&t, c).unwrap();
        let want = t.counted_total * c.powf(1.5);
        prop_assert!((total_error(&s, 1.5).unwrap() - want).abs() <= 1e-12 * want.max(1e-300));
    }

    #[test]
    fn approx_fit_within_slack(
        a in -0.6f64..0.6, b in -0.6f64..0.6, u in 0.2f64..0.8, q in prop::sample::select(vec![1.5, 2.0, 3.0])
    ) {
        let s = SampleSet::from_pairs([(0.0, 0.0), (u, a), (1.0, b)]).unwrap();
        let j = s.q_action(q);
        prop_assume!(j < 0.9);
        let (p, _) = approx_interpolant_poly(&s, q, 0.1).unwrap();
        for pt in s.iter() {
            prop_assert!((p.eval(pt.u) - pt.v).abs() < 0.1);
        }
        prop_assert!(q_action_poly(&p, q).unwrap() < j + 0.1);
    }
}
