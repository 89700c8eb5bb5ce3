//! Transferable-utility mechanism built from ordered pairwise externalities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc::{AllocationRule, Info, Scorer};
use crate::dist::{Distribution, Kind};
use crate::error::{Error, Result};
use crate::quad;
use crate::targets::fair_floor;

/// Tolerance on `sum(tau + c) = 0` under strict balance.
pub const BALANCE_TOL: f64 = 1e-9;

/// Square matrix of externalities, `get(i, j)` is `gamma^{i -> j}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaMatrix {
    n: usize,
    values: Vec<f64>,
}

impl GammaMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![0.0; n * n] }
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    /// `sum_j gamma^{i -> j}`.
    pub fn imposed_by(&self, i: usize) -> f64 {
        (0..self.n).filter(|&j| j != i).map(|j| self.get(i, j)).sum()
    }

    /// `sum_j gamma^{j -> i}`.
    pub fn received_by(&self, i: usize) -> f64 {
        (0..self.n).filter(|&j| j != i).map(|j| self.get(j, i)).sum()
    }
}

/// A rule and prior profile with a fixed reveal order and cached `M_j(empty)`.
#[derive(Debug, Clone)]
pub struct Mechanism {
    scorer: Scorer,
    order: Vec<usize>,
    position: Vec<usize>,
    baseline: Vec<f64>,
}

impl Mechanism {
    pub fn new(rule: AllocationRule, priors: Vec<Distribution>, order: Vec<usize>) -> Result<Self> {
        let n = priors.len();
        let mut position = vec![usize::MAX; n];
        if order.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: order.len() });
        }
        for (k, &j) in order.iter().enumerate() {
            if j >= n || position[j] != usize::MAX {
                return Err(Error::InvalidParameter("reveal order must be a permutation".into()));
            }
            position[j] = k;
        }
        let scorer = Scorer::new(rule, priors)?;
        let none = vec![Info::Unrevealed; n];
        let baseline = (0..n).map(|j| scorer.anticipated_payoff(&none, j)).collect::<Result<_>>()?;
        Ok(Self { scorer, order, position, baseline })
    }

    pub fn ascending(rule: AllocationRule, priors: Vec<Distribution>) -> Result<Self> {
        let n = priors.len();
        Self::new(rule, priors, (0..n).collect())
    }

    pub fn players(&self) -> usize {
        self.order.len()
    }

    pub fn scorer(&self) -> &Scorer {
        &self.scorer
    }

    pub fn rule(&self) -> &AllocationRule {
        self.scorer.rule()
    }

    pub fn priors(&self) -> &[Distribution] {
        self.scorer.priors()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `M_j(empty)` for every player.
    pub fn baseline(&self) -> &[f64] {
        &self.baseline
    }

    fn check_reports(&self, reports: &[Option<f64>]) -> Result<()> {
        if reports.len() != self.players() {
            return Err(Error::DimensionMismatch { expected: self.players(), got: reports.len() });
        }
        if let Some(j) = reports.iter().position(Option::is_none) {
            return Err(Error::MissingReport(j));
        }
        Ok(())
    }

    /// Row `k` holds `M_j` once the first `k` players in reveal order are known.
    /// Players flagged in `known` count as revealed in every row.
    pub fn anticipation_table(&self, reports: &[f64], known: &[bool]) -> Result<Vec<Vec<f64>>> {
        let n = self.players();
        let mut info: Vec<Info> = (0..n)
            .map(|j| if known[j] { Info::Revealed(reports[j]) } else { Info::Unrevealed })
            .collect();
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut fresh = !known.iter().any(|&k| k);
        for k in 0..=n {
            if k > 0 {
                let j = self.order[k - 1];
                if known[j] {
                    let prev: Vec<f64> = rows[k - 1].clone();
                    rows.push(prev);
                    continue;
                }
                info[j] = Info::Revealed(reports[j]);
            }
            let row: Vec<f64> = if fresh {
                self.baseline.clone()
            } else {
                (0..n).map(|j| self.scorer.anticipated_payoff(&info, j)).collect::<Result<_>>()?
            };
            fresh = false;
            rows.push(row);
        }
        Ok(rows)
    }

    /// Externalities from an anticipation table.
    pub fn gamma_from_table(&self, table: &[Vec<f64>]) -> GammaMatrix {
        let n = self.players();
        let mut g = GammaMatrix::zeros(n);
        for i in 0..n {
            let k = self.position[i];
            for j in 0..n {
                if j != i {
                    g.set(i, j, table[k + 1][j] - table[k][j]);
                }
            }
        }
        g
    }

    pub fn externalities(&self, reports: &[Option<f64>]) -> Result<GammaMatrix> {
        self.check_reports(reports)?;
        let r: Vec<f64> = reports.iter().map(|v| v.unwrap_or_default()).collect();
        let table = self.anticipation_table(&r, &vec![false; r.len()])?;
        Ok(self.gamma_from_table(&table))
    }
}

/// `gamma^{i->j}`: the change in `j`'s anticipated payoff caused by revealing `i`'s report.
pub fn externality_matrix(
    rule: &AllocationRule,
    priors: &[Distribution],
    order: &[usize],
    reports: &[Option<f64>],
) -> Result<GammaMatrix> {
    Mechanism::new(rule.clone(), priors.to_vec(), order.to_vec())?.externalities(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusSplit {
    pub c: Vec<f64>,
}

impl SurplusSplit {
    pub fn zero(n: usize) -> Self {
        Self { c: vec![0.0; n] }
    }

    /// Splits `surplus` in proportion to `weights`, evenly if they are all zero.
    pub fn proportional(weights: &[f64], surplus: f64) -> Self {
        let total: f64 = weights.iter().sum();
        let c = if total > 0.0 {
            weights.iter().map(|w| surplus * w / total).collect()
        } else {
            vec![surplus / weights.len() as f64; weights.len()]
        };
        Self { c }
    }

    pub fn total(&self) -> f64 {
        self.c.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Balance {
    /// Constants `tau_i + c_i` with `tau_i = f_i - M_i(empty)`, required to sum to zero.
    #[default]
    Strict,
    /// Constants `c_i` only; payments then sum to `sum c`.
    Constants,
}

/// Per-player constants added to the externality flows.
pub fn transfer_constants(
    floors: &[f64],
    baseline: &[f64],
    split: &SurplusSplit,
    balance: Balance,
) -> Result<Vec<f64>> {
    let n = baseline.len();
    for len in [floors.len(), split.c.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    match balance {
        Balance::Constants => Ok(split.c.clone()),
        Balance::Strict => {
            let targets: f64 = floors.iter().sum::<f64>() + split.total();
            let anticipated: f64 = baseline.iter().sum();
            if (targets - anticipated).abs() > BALANCE_TOL {
                return Err(Error::Imbalance { targets, anticipated });
            }
            Ok((0..n).map(|i| floors[i] - baseline[i] + split.c[i]).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferOutcome {
    pub gamma: GammaMatrix,
    pub y: Vec<f64>,
    pub kappa: Vec<f64>,
}

/// `y_i = sum_j gamma^{i->j} - sum_j gamma^{j->i} + kappa_i`.
pub fn tu_payments_with(gamma: &GammaMatrix, kappa: &[f64]) -> TransferOutcome {
    let y = (0..gamma.players())
        .map(|i| gamma.imposed_by(i) - gamma.received_by(i) + kappa[i])
        .collect();
    TransferOutcome { gamma: gamma.clone(), y, kappa: kappa.to_vec() }
}

pub fn tu_payments(
    gamma: &GammaMatrix,
    split: &SurplusSplit,
    floors: &[f64],
    baseline: &[f64],
    balance: Balance,
) -> Result<TransferOutcome> {
    let kappa = transfer_constants(floors, baseline, split, balance)?;
    Ok(tu_payments_with(gamma, &kappa))
}

/// Fair floors `f(D_i)` for the profile size.
pub fn fair_floors(priors: &[Distribution]) -> Result<Vec<f64>> {
    priors.iter().map(|d| fair_floor(d, priors.len())).collect()
}

impl Mechanism {
    /// Payments for one report profile.
    pub fn payments(&self, reports: &[f64], kappa: &[f64]) -> Result<TransferOutcome> {
        let table = self.anticipation_table(reports, &vec![false; reports.len()])?;
        Ok(tu_payments_with(&self.gamma_from_table(&table), kappa))
    }

    /// Realized utility `1{win} V_i + y_i` with tie shares, for a full report profile.
    pub fn realized_utility(&self, reports: &[f64], kappa: &[f64], i: usize) -> Result<f64> {
        let table = self.anticipation_table(reports, &vec![false; reports.len()])?;
        let gamma = self.gamma_from_table(&table);
        Ok(table[self.players()][i] + gamma.imposed_by(i) - gamma.received_by(i) + kappa[i])
    }

    /// `E_{V_i ~ D_i}[1{win} V_i + y_i]` with opponents fixed at `opponents`.
    pub fn interim_utility(&self, opponents: &[f64], kappa: &[f64], i: usize) -> Result<f64> {
        let prior = &self.priors()[i];
        let mut reports = opponents.to_vec();
        let mut eval = |v: f64| -> Result<f64> {
            reports[i] = v;
            self.realized_utility(&reports, kappa, i)
        };
        if prior.is_atomic() {
            let mut sum = 0.0;
            for &(v, m) in prior.atoms() {
                sum += m * eval(v)?;
            }
            return Ok(sum);
        }
        let mut breaks = prior.quantile_breakpoints();
        if let AllocationRule::LinearScaled { coeffs } = self.rule() {
            for (j, &r) in opponents.iter().enumerate() {
                if j != i {
                    breaks.push(prior.cdf(coeffs[j] * r / coeffs[i]));
                }
            }
            for (j, d) in self.priors().iter().enumerate() {
                if j != i {
                    let (lo, hi) = d.support();
                    breaks.push(prior.cdf(coeffs[j] * lo / coeffs[i]));
                    breaks.push(prior.cdf(coeffs[j] * hi / coeffs[i]));
                    for &(a, _) in d.atoms() {
                        breaks.push(prior.cdf(coeffs[j] * a / coeffs[i]));
                    }
                }
            }
        }
        let mut failure = None;
        let value = quad::integrate_pieces(
            |u| match eval(prior.quantile(u)) {
                Ok(x) => x,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            },
            0.0,
            1.0,
            &breaks,
            1e-10,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterimRange {
    pub min: f64,
    pub max: f64,
    pub spread: f64,
    pub points: usize,
}

/// Interim utility extremes of truthful player `i` over opponent report profiles.
pub fn interim_utility_verify(
    mech: &Mechanism,
    kappa: &[f64],
    i: usize,
    grid: &[Vec<f64>],
) -> Result<InterimRange> {
    let values: Vec<f64> = grid
        .par_iter()
        .map(|opp| mech.interim_utility(opp, kappa, i))
        .collect::<Result<Vec<f64>>>()?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(InterimRange { min, max, spread: max - min, points: values.len() })
}

/// Evenly spaced support points of `d`, or its atoms when it is atomic.
pub fn support_grid(d: &Distribution, points: usize) -> Vec<f64> {
    if d.is_atomic() {
        return d.atoms().iter().map(|a| a.0).collect();
    }
    let m = points.max(2);
    match d.kind() {
        Kind::Uniform { lo, hi } => (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect(),
        _ => (0..m).map(|k| d.quantile(k as f64 / (m - 1) as f64)).collect(),
    }
}

/// Cartesian grid of opponent reports; `i`'s own slot holds a placeholder.
pub fn opponent_grid(priors: &[Distribution], i: usize, points: usize) -> Vec<Vec<f64>> {
    let mut grid = vec![vec![0.0; priors.len()]];
    for (j, d) in priors.iter().enumerate() {
        if j == i {
            let (lo, _) = d.support();
            grid.iter_mut().for_each(|g| g[j] = lo);
            continue;
        }
        let axis = support_grid(d, points);
        grid = grid
            .into_iter()
            .flat_map(|g| {
                axis.iter().map(move |&v| {
                    let mut h = g.clone();
                    h[j] = v;
                    h
                })
            })
            .collect();
    }
    grid
}
