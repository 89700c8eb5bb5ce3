use gumlab::alloc::{allocate, AllocationRule, Info, RoundReport, Scorer};
use gumlab::dist::Distribution;
use gumlab::ntu::{azuma_bound, ntu_budget, BudgetMode};
use gumlab::quad::integrate_pieces;
use gumlab::tu::{tu_payments_with, GammaMatrix, Mechanism};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn example_priors() -> Vec<Distribution> {
    vec![
        Distribution::uniform(2.0, 14.0).unwrap(),
        Distribution::uniform(5.0, 11.0).unwrap(),
        Distribution::point(8.0).unwrap(),
    ]
}

fn mechanisms() -> Vec<Mechanism> {
    vec![
        Mechanism::ascending(AllocationRule::argmax(3), example_priors()).unwrap(),
        Mechanism::ascending(AllocationRule::linear_scaled(vec![0.84, 0.96, 1.0]).unwrap(), example_priors()).unwrap(),
        Mechanism::new(AllocationRule::argmax(3), example_priors(), vec![2, 0, 1]).unwrap(),
        Mechanism::ascending(AllocationRule::quantile_power(vec![0.5, 0.3, 0.2]).unwrap(), example_priors()).unwrap(),
    ]
}

fn arb_alphas() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 2..6).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.iter().map(|r| r / total).collect()
    })
}

fn reports_in_support(u: &[f64]) -> Vec<f64> {
    example_priors().iter().zip(u).map(|(d, &x)| d.quantile(x)).collect()
}

/// Mean of `gamma^{i -> j}` over `V_i ~ D_i` with the predecessors' reports fixed.
fn gamma_mean(mech: &Mechanism, reports: &[f64], i: usize, j: usize) -> f64 {
    let d = &mech.priors()[i];
    let g = |v: f64| {
        let mut r: Vec<Option<f64>> = reports.iter().copied().map(Some).collect();
        r[i] = Some(v);
        mech.externalities(&r).unwrap().get(i, j)
    };
    if d.is_atomic() {
        return d.atoms().iter().map(|&(v, m)| m * g(v)).sum();
    }
    let (lo, hi) = d.support();
    let mut breaks: Vec<f64> = reports.to_vec();
    breaks.extend([8.0 / 0.84, 10.56 / 0.84, 8.0 / 0.96, 8.0, 11.0, 5.0, 14.0]);
    breaks.extend(reports.iter().map(|r| r * 0.96 / 0.84));
    breaks.extend(reports.iter().map(|r| r * 0.84 / 0.96));
    integrate_pieces(g, lo, hi, &breaks, 1e-11)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quantile_power_has_one_winner(alphas in arb_alphas(), seed in any::<u64>()) {
        let n = alphas.len();
        let rule = AllocationRule::quantile_power(alphas).unwrap();
        let priors = vec![Distribution::uniform(0.0, 1.0).unwrap(); n];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let v: Vec<f64> = priors.iter().map(|d| d.sample(&mut rng)).collect();
            let a = allocate(&rule, &RoundReport::full(&v), &priors, &mut rng).unwrap();
            prop_assert!(a.winner().is_some());
        }
    }

    #[test]
    fn linear_rule_is_scale_invariant(u in prop::collection::vec(0.0f64..1.0, 3), tie in any::<bool>(), exp in -3i32..4) {
        let c = 2f64.powi(exp);
        let coeffs = vec![0.84, 0.96, 1.0];
        let priors = example_priors();
        let mut v = reports_in_support(&u);
        if tie {
            v[0] = 40.0 / 7.0 + u[0] * 48.0 / 7.0;
            v[1] = v[0] * 0.84 / 0.96;
        }
        let base = Scorer::new(AllocationRule::linear_scaled(coeffs.clone()).unwrap(), priors.clone()).unwrap();
        let mut scaled_coeffs = coeffs.clone();
        scaled_coeffs[0] /= c;
        let mut scaled_priors = priors.clone();
        scaled_priors[0] = priors[0].scale(c).unwrap();
        let scaled = Scorer::new(AllocationRule::linear_scaled(scaled_coeffs).unwrap(), scaled_priors).unwrap();
        let mut w = v.clone();
        w[0] *= c;
        for i in 0..3 {
            let p = base.allocation_prob(&RoundReport::full(&v), i).unwrap();
            let q = scaled.allocation_prob(&RoundReport::full(&w), i).unwrap();
            prop_assert_eq!(p, q);
        }
    }

    #[test]
    fn full_reveal_payoff_is_value_times_allocation(u in prop::collection::vec(0.0f64..1.0, 3), m in 0usize..4) {
        let mech = &mechanisms()[m];
        let v = reports_in_support(&u);
        let info: Vec<Info> = v.iter().map(|&x| Info::Revealed(x)).collect();
        for i in 0..3 {
            let payoff = mech.scorer().anticipated_payoff(&info, i).unwrap();
            let p = mech.scorer().allocation_prob(&RoundReport::full(&v), i).unwrap();
            prop_assert!((payoff - p * v[i]).abs() <= 1e-12 * (1.0 + v[i]));
        }
    }

    #[test]
    fn externalities_telescope(u in prop::collection::vec(0.0f64..1.0, 3), m in 0usize..4) {
        let mech = &mechanisms()[m];
        let v = reports_in_support(&u);
        let table = mech.anticipation_table(&v, &[false; 3]).unwrap();
        let gamma = mech.gamma_from_table(&table);
        let order = mech.order();
        for i in 0..3 {
            let pos = order.iter().position(|&x| x == i).unwrap();
            let own = table[pos + 1][i] - table[pos][i];
            let received: f64 = (0..3).filter(|&j| j != i).map(|j| gamma.get(j, i)).sum();
            let p = mech.scorer().allocation_prob(&RoundReport::full(&v), i).unwrap();
            prop_assert!((received + own - (p * v[i] - mech.baseline()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn payments_sum_to_the_constants(g in prop::collection::vec(-10.0f64..10.0, 9), kappa in prop::collection::vec(-5.0f64..5.0, 3)) {
        let mut gamma = GammaMatrix::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    gamma.set(i, j, g[3 * i + j]);
                }
            }
        }
        let y = tu_payments_with(&gamma, &kappa).y;
        let total: f64 = y.iter().sum();
        prop_assert!((total - kappa.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn azuma_raw_never_exceeds_simplified(
        ai in 0.01f64..=1.0,
        aj in 0.01f64..=1.0,
        t in 2u64..1_000_000,
        sour in 0.01f64..5.0,
        sens in 0.1f64..20.0,
    ) {
        let b = ntu_budget(ai, aj, t, sens, BudgetMode::Definition).unwrap();
        let a = azuma_bound(b, t, sour, sens, ai, aj);
        prop_assert!(a.raw <= a.simplified * (1.0 + 1e-12) + 1e-300, "{:?}", a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn externalities_have_zero_mean(u in prop::collection::vec(0.0f64..1.0, 3), m in 0usize..4) {
        let mech = &mechanisms()[m];
        let v = reports_in_support(&u);
        for i in 0..3 {
            for j in (0..3).filter(|&j| j != i) {
                let mean = gamma_mean(mech, &v, i, j);
                prop_assert!(mean.abs() < 1e-8, "mech {} gamma {}->{} mean {}", m, i + 1, j + 1, mean);
            }
        }
    }
}
