//! Exact-rational oracles for the three-player example tables.

mod common;

use common::*;
use gumlab::alloc::AllocationRule;
use gumlab::tu::{tu_payments_with, Mechanism};

fn ntu_mechanism() -> Mechanism {
    Mechanism::ascending(AllocationRule::linear_scaled(vec![0.84, 0.96, 1.0]).unwrap(), priors()).unwrap()
}

#[test]
fn ntu_constants_are_exact() {
    let c = ntu_constants();
    assert_eq!(c.m2_empty, q(16658, 5103));
    assert_eq!(c.m3_empty, q(1580, 567));
    assert_eq!(c.m2_low_v1 - c.m2_empty, q(5266, 5103));
    assert_eq!(c.m3_low_v1 - c.m3_empty, q(940, 567));
    assert_eq!(q(8, 1) - c.m3_low_v1, q(32, 9));
    assert_eq!(c.m3_low_v1, q(40, 9));
    assert_eq!(c.p_low_v1, q(79, 126));
    assert_eq!(c.p_low_v2, q(5, 9));
    // Zero mean of the 1 -> 3 increment.
    assert_eq!(79i64 * 940, 47i64 * 1580);
    assert_eq!(c.p_low_v1 * q(940, 567), (q(1, 1) - c.p_low_v1) * q(1580, 567));
}

#[test]
fn ntu_mechanism_matches_rational_constants() {
    let c = ntu_constants();
    let mech = ntu_mechanism();
    let base = mech.baseline();
    assert!((base[1] - to_f64(c.m2_empty)).abs() < 1e-13);
    assert!((base[2] - to_f64(c.m3_empty)).abs() < 1e-13);
    for (v1, v2) in [(3.0, 6.0), (9.0, 7.0), (9.0, 10.0)] {
        let g = mech.externalities(&[Some(v1), Some(v2), Some(8.0)]).unwrap();
        assert!((g.get(0, 1) - to_f64(c.m2_low_v1 - c.m2_empty)).abs() < 1e-13);
        assert!((g.get(0, 2) - to_f64(c.m3_low_v1 - c.m3_empty)).abs() < 1e-13);
        let want = if v2 * 0.96 <= 8.0 { q(32, 9) } else { -q(40, 9) };
        assert!((g.get(1, 2) - to_f64(want)).abs() < 1e-13);
    }
    let g = mech.externalities(&[Some(13.0), Some(6.0), Some(8.0)]).unwrap();
    assert!((g.get(0, 1) + to_f64(c.m2_empty)).abs() < 1e-13);
    assert!((g.get(0, 2) + to_f64(c.m3_empty)).abs() < 1e-13);
}

#[test]
fn transfer_table_sweep_matches_exact_rows() {
    let mech = Mechanism::ascending(AllocationRule::argmax(3), priors()).unwrap();
    let mut seen = [false; 5];
    for v2 in [q(53, 10), q(71, 10), q(79, 10), q(86, 10), q(97, 10), q(109, 10)] {
        for k in 0..200 {
            let v1 = q(2, 1) + q(12 * (2 * k + 1), 400);
            if v1 == v2 {
                continue;
            }
            let want = transfer_oracle(v1, v2);
            let (f1, f2) = (to_f64(v1), to_f64(v2));
            let gamma = mech.externalities(&[Some(f1), Some(f2), Some(8.0)]).unwrap();
            let y = tu_payments_with(&gamma, &[0.0; 3]).y;
            for j in 0..3 {
                assert!((y[j] - to_f64(want[j])).abs() < 1e-12, "v1={f1} v2={f2} j={j}: {} vs {}", y[j], want[j]);
            }
            let case = match (f1 <= 8.0, f2 <= 8.0, f1 < 11.0, f1 >= f2) {
                (true, true, ..) => 0,
                (true, false, ..) => 1,
                (false, _, true, true) => 2,
                (false, _, true, false) => 3,
                _ => 4,
            };
            seen[case] = true;
        }
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn transfer_rows_sum_to_zero() {
    for (v1, v2) in [(q(3, 1), q(6, 1)), (q(5, 1), q(10, 1)), (q(19, 2), q(7, 1)), (q(19, 2), q(21, 2)), (q(13, 1), q(9, 1))] {
        let y = transfer_oracle(v1, v2);
        assert_eq!(y[0] + y[1] + y[2], q(0, 1));
    }
}
