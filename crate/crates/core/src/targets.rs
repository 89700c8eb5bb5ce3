//! Target functions: fair floors, `phi`, `f*`, and one-round feasibility.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::Serialize;

use crate::alloc::{AllocationRule, Info, Scorer, TieBreak};
use crate::dist::{expected_max, Distribution, Kind};
use crate::error::{Error, Result};
use crate::quad;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetQuery {
    pub alpha: f64,
    pub prior: Distribution,
    pub periods: u64,
}

impl TargetQuery {
    pub fn new(alpha: f64, prior: Distribution, periods: u64) -> Result<Self> {
        check_alpha(alpha)?;
        if periods == 0 {
            return Err(Error::InvalidParameter("T must be at least 1".into()));
        }
        Ok(Self { alpha, prior, periods })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("weight {alpha} is outside [0, 1]")));
    }
    Ok(())
}

/// `E[max of n i.i.d. copies of D] / n`, closed form where one exists.
pub fn fair_floor(d: &Distribution, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let nf = n as f64;
    match *d.kind() {
        Kind::Uniform { lo, hi } => Ok((lo + nf * hi) / (nf * (nf + 1.0))),
        Kind::PointMass { v } => Ok(v / nf),
        _ => fair_floor_quadrature(d, n),
    }
}

/// Fair floor through numerical `E[max]`, skipping closed forms.
pub fn fair_floor_quadrature(d: &Distribution, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    Ok(expected_max(&vec![d.clone(); n])? / n as f64)
}

/// `E[V * Fbar(V)^(1/alpha - 1)]`, closed form for uniform and atomic priors.
pub fn phi(alpha: f64, d: &Distribution) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(0.0);
    }
    match d.kind() {
        Kind::Uniform { lo, hi } => Ok(alpha * lo + (hi - lo) * alpha / (1.0 + alpha)),
        Kind::Split { .. } => phi_quadrature(alpha, d),
        _ => {
            let inv = 1.0 / alpha;
            let mut prev = 0.0;
            let mut sum = 0.0;
            let mut cum = 0.0;
            for &(v, m) in d.atoms() {
                cum += m;
                let next = cum.min(1.0).powf(inv);
                sum += v * alpha * (next - prev);
                prev = next;
            }
            Ok(sum)
        }
    }
}

/// `phi` by quadrature of `Q(x) x^(1/alpha - 1)` after substituting `x = t^2`.
pub fn phi_quadrature(alpha: f64, d: &Distribution) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let expo = 2.0 / alpha - 1.0;
    let breaks: Vec<f64> = d.quantile_breakpoints().into_iter().map(f64::sqrt).collect();
    Ok(quad::integrate_pieces(
        |t| 2.0 * d.quantile(t * t) * t.powf(expo),
        0.0,
        1.0,
        &breaks,
        1e-13,
    ))
}

/// `T * phi(alpha, D)` for i.i.d. rounds.
pub fn f_star(q: &TargetQuery) -> Result<f64> {
    Ok(q.periods as f64 * phi(q.alpha, &q.prior)?)
}

/// The two-goods target as stated for the top-2 rule: `f*(min(1, 2a - a^2))`.
pub fn f_star_two_goods(q: &TargetQuery) -> Result<f64> {
    let a = (2.0 * q.alpha - q.alpha * q.alpha).min(1.0);
    Ok(q.periods as f64 * phi(a, &q.prior)?)
}

/// One deterministic allocation rule in a feasible mixture: award the good to
/// the argmax of `weights[j] * V_j`, ties to the lowest `priority` rank.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureComponent {
    pub probability: f64,
    pub weights: Vec<f64>,
    pub priority: Vec<usize>,
    pub utilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Feasibility {
    /// Mixture whose expected utilities exceed every target by at least `slack`.
    Feasible { mixture: Vec<MixtureComponent>, slack: f64 },
    /// `weights . targets` exceeds the best achievable weighted welfare by `margin`.
    Infeasible { weights: Vec<f64>, margin: f64 },
    Inconclusive { slack: f64 },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible { .. })
    }
}

const FEAS_TOL: f64 = 1e-9;
const MAX_COLUMNS: usize = 400;

struct Column {
    weights: Vec<f64>,
    priority: Vec<usize>,
    utilities: Vec<f64>,
}

fn weighted_argmax_column(priors: &[Distribution], weights: &[f64]) -> Result<Column> {
    let n = priors.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut priority = vec![0; n];
    for (rank, &j) in order.iter().enumerate() {
        priority[j] = rank;
    }
    let coeffs: Vec<f64> = weights.iter().map(|&w| if w > 0.0 { w } else { 1.0 }).collect();
    let scorer = Scorer::new(AllocationRule::linear_scaled(coeffs)?, priors.to_vec())?;
    let info: Vec<Info> = weights
        .iter()
        .map(|&w| if w > 0.0 { Info::Unrevealed } else { Info::Absent })
        .collect();
    let utilities = (0..n)
        .map(|j| scorer.anticipated_payoff_with(&info, j, TieBreak::Priority(&priority)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Column { weights: weights.to_vec(), priority, utilities })
}

fn weighted_welfare(priors: &[Distribution], weights: &[f64]) -> Result<f64> {
    let scaled = priors
        .iter()
        .zip(weights)
        .map(|(d, &w)| d.scale(w.max(0.0)))
        .collect::<Result<Vec<_>>>()?;
    expected_max(&scaled)
}

fn lp_error(e: microlp::Error) -> Error {
    Error::Solver(e.to_string())
}

/// Max over mixtures of the smallest surplus `u_j - t_j`, with the mixture.
fn solve_master(columns: &[Column], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let lambdas: Vec<_> = columns.iter().map(|_| p.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let s = p.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    p.add_constraint(lambdas.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for (j, &t) in targets.iter().enumerate() {
        let mut expr: Vec<_> = lambdas.iter().zip(columns).map(|(&v, c)| (v, c.utilities[j])).collect();
        expr.push((s, -1.0));
        p.add_constraint(expr, ComparisonOp::Ge, t);
    }
    let sol = p.solve().map_err(lp_error)?.into_solution().map_err(|_| Error::Solver("interrupted".into()))?;
    Ok((sol.objective(), lambdas.iter().map(|&v| sol.var_value(v)).collect()))
}

/// Dual of the master: weights minimizing `max_k w.u_k - w.t`.
fn solve_dual(columns: &[Column], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let ws: Vec<_> = targets.iter().map(|&t| p.add_var(-t, (0.0, f64::INFINITY))).collect();
    let z = p.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    p.add_constraint(ws.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for c in columns {
        let mut expr: Vec<_> = ws.iter().zip(&c.utilities).map(|(&v, &u)| (v, -u)).collect();
        expr.push((z, 1.0));
        p.add_constraint(expr, ComparisonOp::Ge, 0.0);
    }
    let sol = p.solve().map_err(lp_error)?.into_solution().map_err(|_| Error::Solver("interrupted".into()))?;
    Ok((sol.var_value(z), ws.iter().map(|&v| sol.var_value(v).max(0.0)).collect()))
}

/// Searches for a lottery over weighted-argmax allocations meeting `targets`.
///
/// Every Pareto-efficient one-round utility vector is a mixture of weighted
/// argmax rules, so column generation over those rules decides feasibility.
/// Utilities of each rule are exact integrals, not discretized.
pub fn ntu_feasible_mixture(players: &[(f64, Distribution)], targets: &[f64]) -> Result<Feasibility> {
    if players.is_empty() {
        return Err(Error::EmptyProfile);
    }
    if targets.len() != players.len() {
        return Err(Error::DimensionMismatch { expected: players.len(), got: targets.len() });
    }
    let n = players.len();
    let priors: Vec<Distribution> = players.iter().map(|p| p.1.clone()).collect();
    let mut columns = Vec::new();
    for j in 0..n {
        let mut w = vec![0.0; n];
        w[j] = 1.0;
        columns.push(weighted_argmax_column(&priors, &w)?);
    }
    let total: f64 = players.iter().map(|p| p.0).sum();
    if total > 0.0 {
        let w: Vec<f64> = players.iter().map(|p| p.0 / total).collect();
        columns.push(weighted_argmax_column(&priors, &w)?);
    }
    let mut slack = f64::NEG_INFINITY;
    while columns.len() < MAX_COLUMNS {
        let (s, lambdas) = solve_master(&columns, targets)?;
        slack = s;
        if s >= -FEAS_TOL {
            let mixture = columns
                .iter()
                .zip(lambdas)
                .filter(|(_, l)| *l > 1e-12)
                .map(|(c, l)| MixtureComponent {
                    probability: l,
                    weights: c.weights.clone(),
                    priority: c.priority.clone(),
                    utilities: c.utilities.clone(),
                })
                .collect();
            return Ok(Feasibility::Feasible { mixture, slack: s });
        }
        let (z, w) = solve_dual(&columns, targets)?;
        let welfare = weighted_welfare(&priors, &w)?;
        let wt: f64 = w.iter().zip(targets).map(|(a, b)| a * b).sum();
        if welfare - wt < -FEAS_TOL {
            return Ok(Feasibility::Infeasible { margin: wt - welfare, weights: w });
        }
        if welfare <= z + FEAS_TOL {
            return Ok(Feasibility::Inconclusive { slack: s });
        }
        columns.push(weighted_argmax_column(&priors, &w)?);
    }
    Ok(Feasibility::Inconclusive { slack })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Distribution {
        s.parse().unwrap()
    }

    #[test]
    fn fair_floors_of_the_three_priors() {
        assert_eq!(fair_floor(&d("uniform:2,14"), 3).unwrap(), 11.0 / 3.0);
        assert_eq!(fair_floor(&d("uniform:5,11"), 3).unwrap(), 19.0 / 6.0);
        assert_eq!(fair_floor(&d("point:8"), 3).unwrap(), 8.0 / 3.0);
        for (s, v) in [("uniform:2,14", 11.0 / 3.0), ("uniform:5,11", 19.0 / 6.0), ("point:8", 8.0 / 3.0)] {
            assert!((fair_floor_quadrature(&d(s), 3).unwrap() - v).abs() < 1e-9);
        }
        assert!(fair_floor(&d("point:1"), 0).is_err());
    }

    #[test]
    fn phi_edges() {
        let u = d("uniform:2,14");
        assert_eq!(phi(0.0, &u).unwrap(), 0.0);
        assert!((phi(1.0, &u).unwrap() - 8.0).abs() < 1e-15);
        assert!((phi(1.0 / 3.0, &u).unwrap() - 11.0 / 3.0).abs() < 1e-14);
        assert!((phi(1.0 / 3.0, &d("point:8")).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert!(phi(1.5, &u).is_err());
    }

    #[test]
    fn phi_binary_carries_the_alpha_factor() {
        for &(a, p) in &[(0.5, 0.3), (0.1, 0.05), (0.9, 0.7)] {
            let b = Distribution::binary(p, 1.0, 0.0).unwrap();
            let expect = a * (1.0 - (1.0f64 - p).powf(1.0 / a));
            assert!((phi(a, &b).unwrap() - expect).abs() < 1e-14);
            assert!((phi_quadrature(a, &b).unwrap() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        for s in ["uniform:2,14", "uniform:0,1", "point:8", "binary:0.3,1", "discrete:1:0.2;4:0.5;6:0.3"] {
            for k in 1..=16 {
                let a = k as f64 / 16.0;
                let c = phi(a, &d(s)).unwrap();
                let q = phi_quadrature(a, &d(s)).unwrap();
                assert!((c - q).abs() < 1e-9, "{s} alpha={a}: {c} vs {q}");
            }
        }
    }

    #[test]
    fn f_star_is_additive() {
        let q1 = TargetQuery::new(0.3, d("uniform:2,14"), 1).unwrap();
        let q2 = TargetQuery::new(0.3, d("uniform:2,14"), 2).unwrap();
        assert!((f_star(&q2).unwrap() - 2.0 * f_star(&q1).unwrap()).abs() < 1e-14);
        assert!(TargetQuery::new(0.3, d("point:1"), 0).is_err());
    }

    #[test]
    fn coin_flip_is_feasible_for_half_half() {
        let players = vec![(0.5, d("point:1")), (0.5, d("point:1"))];
        match ntu_feasible_mixture(&players, &[0.5, 0.5]).unwrap() {
            Feasibility::Feasible { mixture, .. } => {
                let u: Vec<f64> = (0..2)
                    .map(|j| mixture.iter().map(|c| c.probability * c.utilities[j]).sum())
                    .collect();
                assert!((u[0] - 0.5).abs() < 1e-9 && (u[1] - 0.5).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn excess_targets_are_infeasible() {
        let players = vec![(0.5, d("point:1")), (0.5, d("point:1"))];
        match ntu_feasible_mixture(&players, &[0.6, 0.6]).unwrap() {
            Feasibility::Infeasible { margin, weights } => {
                assert!((margin - 0.1).abs() < 1e-9, "{margin}");
                assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn argmax_meets_the_uniform_boundary() {
        let players = vec![(0.5, d("uniform:0,1")), (0.5, d("uniform:0,1"))];
        let r = ntu_feasible_mixture(&players, &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(r.is_feasible(), "{r:?}");
        let r = ntu_feasible_mixture(&players, &[0.34, 0.34]).unwrap();
        assert!(matches!(r, Feasibility::Infeasible { .. }), "{r:?}");
    }

    #[test]
    fn mismatched_targets() {
        let players = vec![(0.5, d("point:1"))];
        assert!(matches!(
            ntu_feasible_mixture(&players, &[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
