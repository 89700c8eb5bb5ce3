#![allow(dead_code)]
//! Independent oracles shared by the integration tests.

use gumlab::alloc::RoundReport;
use gumlab::dist::Distribution;
use gumlab::tu::Mechanism;
use num_rational::Ratio;

pub type Q = Ratio<i64>;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

/// Integral of a polynomial with rational coefficients (constant first) over [a, b].
pub fn integrate_poly(coeffs: &[Q], a: Q, b: Q) -> Q {
    let mut total = q(0, 1);
    for (k, c) in coeffs.iter().enumerate() {
        let p = (k + 1) as i32;
        total += c * (b.pow(p) - a.pow(p)) / Q::from_integer(p as i64);
    }
    total
}

pub fn priors() -> Vec<Distribution> {
    vec![
        Distribution::uniform(2.0, 14.0).unwrap(),
        Distribution::uniform(5.0, 11.0).unwrap(),
        Distribution::point(8.0).unwrap(),
    ]
}

pub fn to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Baselines of the transfer-free rule `argmax(0.84 V1, 0.96 V2, V3)`, from first principles.
pub struct NtuConstants {
    pub m2_empty: Q,
    pub m3_empty: Q,
    pub m2_low_v1: Q,
    pub m3_low_v1: Q,
    pub p_low_v1: Q,
    pub p_low_v2: Q,
}

pub fn ntu_constants() -> NtuConstants {
    // Player 2 wins iff V2 > 25/3 and V1 < 8 V2 / 7; the second bound never binds above 14.
    let v2_cut = q(25, 3);
    let m2_empty = integrate_poly(&[q(0, 1), q(-2, 1), q(8, 7)], v2_cut, q(11, 1)) / q(72, 1);
    let p_low_v1 = (q(200, 21) - q(2, 1)) / q(12, 1);
    let p_low_v2 = (v2_cut - q(5, 1)) / q(6, 1);
    let m3_empty = q(8, 1) * p_low_v1 * p_low_v2;
    let m2_low_v1 = integrate_poly(&[q(0, 1), q(1, 1)], v2_cut, q(11, 1)) / q(6, 1);
    let m3_low_v1 = q(8, 1) * p_low_v2;
    NtuConstants { m2_empty, m3_empty, m2_low_v1, m3_low_v1, p_low_v1, p_low_v2 }
}

/// Transfer rows with zero constants, evaluated exactly at rational `v1`, `v2`.
pub fn transfer_oracle(v1: Q, v2: Q) -> [Q; 3] {
    let eight = q(8, 1);
    let eleven = q(11, 1);
    let t = |n: i64| q(n, 12);
    if v1 <= eight && v2 <= eight {
        [q(15, 4), q(9, 4), q(-6, 1)]
    } else if v1 <= eight {
        [q(15, 4), q(-23, 4), q(2, 1)]
    } else if v1 < eleven {
        let s = v1 * v1;
        if v1 >= v2 {
            [(s - q(22, 1) * v1) / 12 + t(61), (-s + q(22, 1) * v1) / 12 - t(85), q(2, 1)]
        } else {
            [(s - q(10, 1) * v1) / 12 + t(61), (-s + q(10, 1) * v1) / 12 - t(85), q(2, 1)]
        }
    } else {
        [q(-5, 1), q(3, 1), q(2, 1)]
    }
}


/// Composite Simpson rule on each piece between sorted breakpoints.
pub fn simpson_pieces<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, breaks: &[f64], per_piece: usize) -> f64 {
    let mut edges: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    edges.push(lo);
    edges.push(hi);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let m = per_piece + per_piece % 2;
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = (b - a) / m as f64;
        // One-sided limits at the piece ends.
        let eps = 1e-12 * (b - a);
        let mut s = f(a + eps) + f(b - eps);
        for k in 1..m {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        total += s * h / 3.0;
    }
    total
}

/// Interim utility of truthful `i` against fixed opponent reports, by direct integration
/// of allocation value plus transfer over `i`'s prior (atomic or uniform).
pub fn interim_oracle(mech: &Mechanism, kappa: &[f64], i: usize, opponents: &[f64]) -> f64 {
    let d = &mech.priors()[i];
    let h = |v: f64| {
        let mut r = opponents.to_vec();
        r[i] = v;
        let p = mech.scorer().allocation_prob(&RoundReport::full(&r), i).unwrap();
        p * v + mech.payments(&r, kappa).unwrap().y[i]
    };
    if d.is_atomic() {
        return d.atoms().iter().map(|&(v, m)| m * h(v)).sum();
    }
    let (lo, hi) = d.support();
    let mut breaks: Vec<f64> = opponents.to_vec();
    for p in mech.priors() {
        let (a, b) = p.support();
        breaks.extend([a, b]);
    }
    // Uniform density; the guard rejects any other continuous prior.
    let w = 1.0 / (hi - lo);
    assert!(d.has_linear_quantile(), "uniform priors only");
    w * simpson_pieces(h, lo, hi, &breaks, 400)
}
