use gumlab::config::{parse_config, ExperimentConfig, Strategy as Play};
use gumlab::ntu::{azuma_bound, ExternalityLedger};
use gumlab::sim::{adversary_best_response, run_experiment, write_trace, Game};
use proptest::prelude::*;

const TU3: &str = include_str!("../examples/tu3.cfg");
const NTU3: &str = include_str!("../examples/ntu3.cfg");

fn cfg(text: &str, periods: u64, reps: u64) -> ExperimentConfig {
    let mut c = parse_config(text).unwrap();
    c.periods = periods;
    c.reps = reps;
    c
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let c = cfg(TU3, 20, 16);
    let a = run_experiment(&c, 9, 16).unwrap();
    for threads in [1, 2, 5] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        assert_eq!(pool.install(|| run_experiment(&c, 9, 16).unwrap()), a);
    }
    assert_ne!(run_experiment(&c, 10, 16).unwrap(), a);
}

#[test]
fn tu_welfare_is_expected_max() {
    let c = cfg(TU3, 10, 5000);
    let s = run_experiment(&c, 2, 5000).unwrap();
    assert!((s.welfare_mean - 99.375).abs() <= 4.0 * s.welfare_std_error, "{} +- {}", s.welfare_mean, s.welfare_std_error);
}

#[test]
fn tu_truthful_means_with_zero_constants() {
    let mut c = cfg(TU3, 10, 4000);
    c.balance = gumlab::tu::Balance::Constants;
    c.surplus = gumlab::config::SurplusSpec::Zero;
    let s = run_experiment(&c, 4, 4000).unwrap();
    for (p, want) in s.players.iter().zip([4.9375, 3.0, 2.0]) {
        assert!((p.mean_per_round - want).abs() <= 4.0 * p.std_error_per_round + 1e-12, "{} vs {want}", p.mean_per_round);
    }
}

#[test]
fn truthful_increments_are_centered_and_bounded() {
    let c = cfg(NTU3, 2000, 20);
    let s = run_experiment(&c, 3, 20).unwrap();
    let n = c.players.len();
    for p in &s.pairs {
        let (i, j) = {
            let mut it = p.pair.split("->").map(|x| x.parse::<usize>().unwrap() - 1);
            (it.next().unwrap(), it.next().unwrap())
        };
        assert!(i < n && j < n);
        assert!(p.increment_mean.abs() <= 4.0 * p.increment_std_error + 1e-12, "{}: {}", p.pair, p.increment_mean);
        assert!(p.max_abs_increment <= c.sour(i) * c.sens(j) + 1e-12, "{}", p.pair);
        assert_eq!(p.trajectory.len(), 100);
    }
}

#[test]
fn truthful_exclusions_respect_azuma() {
    let c = cfg(NTU3, 300, 200);
    let s = run_experiment(&c, 6, 200).unwrap();
    let n = c.players.len();
    let sens: Vec<f64> = (0..n).map(|j| c.sens(j)).collect();
    let ledger = ExternalityLedger::new(&c.weights(), &sens, c.periods, c.budgets).unwrap();
    let w = c.weights();
    for i in 0..n {
        let bound: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| azuma_bound(ledger.budget(i, j), c.periods, c.sour(i), sens[j], w[i], w[j]).simplified.min(1.0))
            .sum::<f64>()
            .min(1.0);
        let freq = s.players[i].exclusions as f64 / 200.0;
        let slack = 1.96 * (bound * (1.0 - bound) / 200.0).sqrt();
        assert!(freq <= bound + slack, "player {i}: {freq} > {bound}");
    }
}

fn arb_play() -> impl Strategy<Value = Play> {
    prop_oneof![
        Just(Play::Truthful),
        (0.0f64..20.0).prop_map(Play::Constant),
        (0.0f64..3.0).prop_map(Play::Scaled),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn realized_utilities_stay_in_payoff_range(plays in prop::collection::vec(arb_play(), 3), adversary in any::<bool>(), seed in any::<u64>()) {
        let mut c = cfg(NTU3, 400, 3);
        for (p, s) in c.players.iter_mut().zip(plays) {
            p.strategy = s;
        }
        if adversary {
            c.players[1].strategy = Play::AdversaryVs { target: 0, grid: 5 };
            c.players[2].strategy = Play::AdversaryVs { target: 0, grid: 5 };
        }
        let s = run_experiment(&c, seed, 3).unwrap();
        for (p, d) in s.players.iter().zip(c.priors()) {
            prop_assert!(p.min_round_utility >= 0.0);
            prop_assert!(p.max_round_utility <= d.support().1);
        }
    }
}

#[test]
fn point_masses_leave_nothing_to_manipulate() {
    let text = "mechanism = ntu\nrule = linear:1,1,1\nperiods = 300\nreps = 5\nseed = 3\n\
        [player]\nweight = 1/3\nprior = point:3\n\
        [player]\nweight = 1/3\nprior = point:2\n\
        [player]\nweight = 1/3\nprior = point:1\n";
    let c = parse_config(text).unwrap();
    let truthful = run_experiment(&c, 3, 5).unwrap();
    for target in 0..3 {
        let r = adversary_best_response(&c, target, 5).unwrap();
        for o in &r.outcomes {
            assert_eq!(o.mean_total, truthful.players[target].mean_total, "{}", o.label);
            assert_eq!(o.adversary_exclusions, 0);
        }
        assert!(r.passes);
    }
}

#[test]
fn tu_interim_constancy_defeats_adversaries() {
    let c = cfg(TU3, 50, 40);
    let r = adversary_best_response(&c, 2, 9).unwrap();
    for o in &r.outcomes {
        assert!((o.mean_total - r.guarantee).abs() < 1e-9, "{}: {} vs {}", o.label, o.mean_total, r.guarantee);
    }
    assert!((r.guarantee - 50.0 * 2.8125).abs() < 1e-9);
}

#[test]
fn support_max_adversaries_exclude_themselves() {
    let c = cfg(NTU3, 2000, 20);
    let r = adversary_best_response(&c, 0, 9).unwrap();
    let max = r.outcomes.iter().find(|o| o.label == "constant-max").unwrap();
    let min = r.outcomes.iter().find(|o| o.label == "constant-min").unwrap();
    assert!(max.adversary_exclusions > 0);
    assert_eq!(min.adversary_exclusions, 0);
    assert!(r.passes);
    assert!(r.worst_outcome().mean_total >= r.guarantee);
}

#[test]
fn trace_has_one_row_per_round() {
    let game = Game::new(cfg(NTU3, 25, 1)).unwrap();
    let mut buf = Vec::new();
    write_trace(&game, 1, 2, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,replication,winner,report_1,report_2,report_3,cum_1_2,cum_1_3,cum_2_1,cum_2_3,cum_3_1,cum_3_2,excluded"
    );
    assert_eq!(lines.count(), 50);
}

#[test]
fn invalid_adversary_settings_are_rejected() {
    let c = cfg(NTU3, 10, 1);
    assert!(adversary_best_response(&c, 0, 1).is_err());
    assert!(adversary_best_response(&c, 5, 9).is_err());
    let mut bad = c.clone();
    bad.players[1].strategy = Play::AdversaryVs { target: 0, grid: 9 };
    bad.players[2].strategy = Play::AdversaryVs { target: 1, grid: 9 };
    assert!(Game::new(bad).is_err());
}
