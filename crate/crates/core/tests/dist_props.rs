use gumlab::dist::{expected_max, Distribution};
use gumlab::stats::{ks_test, Running};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn families() -> Vec<Distribution> {
    [
        "uniform:0,1",
        "uniform:2,14",
        "uniform:5,11",
        "point:8",
        "binary:0.3,1",
        "binary:0.6,5,2",
        "discrete:1:0.2;2:0.5;4:0.3",
        "split:3:uniform:0,1",
        "split:2:binary:0.3,1",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect()
}

fn arb_distribution() -> impl Strategy<Value = Distribution> {
    let value = 0.0f64..100.0;
    prop_oneof![
        (value.clone(), 0.0f64..50.0).prop_map(|(lo, w)| Distribution::uniform(lo, lo + w).unwrap()),
        value.clone().prop_map(|v| Distribution::point(v).unwrap()),
        (0.0f64..=1.0, value.clone(), 0.0f64..50.0).prop_map(|(p, lo, w)| Distribution::binary(p, lo + w, lo).unwrap()),
        prop::collection::vec((value.clone(), 0.01f64..1.0), 1..6).prop_map(|raw| {
            let total: f64 = raw.iter().map(|r| r.1).sum();
            let mut pairs: Vec<(f64, f64)> = raw.iter().map(|&(v, m)| (v, m / total)).collect();
            let rest: f64 = 1.0 - pairs[1..].iter().map(|p| p.1).sum::<f64>();
            pairs[0].1 = rest.max(0.0);
            Distribution::discrete(pairs).unwrap()
        }),
        (value.clone(), 0.1f64..50.0, 2u32..6).prop_map(|(lo, w, k)| Distribution::uniform(lo, lo + w).unwrap().split(k).unwrap()),
    ]
}

proptest! {
    #[test]
    fn literal_round_trips(d in arb_distribution()) {
        let text = d.to_string();
        let back: Distribution = text.parse().unwrap();
        prop_assert_eq!(&back, &d, "{}", text);
    }

    #[test]
    fn singleton_expected_max_is_the_mean(d in arb_distribution()) {
        let m = expected_max(std::slice::from_ref(&d)).unwrap();
        prop_assert!((m - d.expectation()).abs() <= 1e-9 * (1.0 + d.support().1), "{} vs {}", m, d.expectation());
    }

    #[test]
    fn quantile_inverts_the_smoothed_cdf(d in arb_distribution(), u in 0.0f64..1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = d.quantile(u);
        let s = d.smoothed_cdf_sample(v, &mut rng).unwrap();
        let back = d.quantile(s);
        let (lo, hi) = d.support();
        prop_assert!((back - v).abs() <= 1e-9 * (1.0 + hi.abs() + lo.abs()), "{} -> {} -> {}", v, s, back);
    }
}

#[test]
fn smoothed_cdf_of_a_draw_is_uniform() {
    for (k, d) in families().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let u: Vec<f64> = (0..100_000)
            .map(|_| {
                let v = d.sample(&mut rng);
                d.smoothed_cdf_sample(v, &mut rng).unwrap()
            })
            .collect();
        let r = ks_test(&u, |x| x.clamp(0.0, 1.0));
        assert!(r.passes(0.01), "{d}: D = {}, p = {}", r.statistic, r.p_value);
    }
}

#[test]
fn max_of_split_copies_recovers_the_mean() {
    for (k_idx, d) in families().into_iter().enumerate() {
        for k in 1..=5u32 {
            let s = d.split(k).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * k_idx as u64 + k as u64);
            let mut acc = Running::default();
            for _ in 0..100_000 {
                let m = (0..k).map(|_| s.sample(&mut rng)).fold(f64::MIN, f64::max);
                acc.push(m);
            }
            let se = acc.std_error();
            assert!((acc.mean - d.expectation()).abs() <= 4.0 * se + 1e-12, "{d} k={k}: {} vs {}", acc.mean, d.expectation());
        }
    }
}

#[test]
fn split_max_matches_the_base_law() {
    for (k_idx, d) in families().into_iter().filter(|d| !d.is_atomic()).enumerate() {
        let s = d.split(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77 + k_idx as u64);
        let draws: Vec<f64> = (0..50_000).map(|_| (0..4).map(|_| s.sample(&mut rng)).fold(f64::MIN, f64::max)).collect();
        let r = ks_test(&draws, |v| d.cdf(v));
        assert!(r.passes(0.01), "{d}: p = {}", r.p_value);
    }
}
