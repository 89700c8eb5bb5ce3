//! Allocation rules and the anticipated-payoff functional.
//!
//! The anticipated payoff of player `i` under an information state is
//! `E[1{i is allocated} * V_i]`, where revealed players are fixed at their
//! reports and unrevealed players are integrated over their priors. Players
//! are independent, so for a fixed own score the win probability factorizes
//! over opponents and only a one-dimensional integral over `i`'s own quantile
//! remains.

use rand::Rng;

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::quad::{self, GaussLegendre};
use crate::stats::{self, KsResult};

const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum AllocationRule {
    /// Award the good to the argmax of `Fbar_j(V_j)^(1/alpha_j)`.
    QuantilePower { alphas: Vec<f64> },
    /// Award the good to the argmax of `coeff_j * V_j`.
    LinearScaled { coeffs: Vec<f64> },
    /// Award `ell` goods to the `ell` largest quantile-power scores.
    TopL { ell: usize, alphas: Vec<f64> },
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::EmptyProfile);
    }
    if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::InvalidParameter("weights must be nonnegative".into()));
    }
    let total: f64 = alphas.iter().sum();
    if total > 1.0 + WEIGHT_TOL {
        return Err(Error::InvalidParameter(format!("weights sum to {total} > 1")));
    }
    Ok(())
}

impl AllocationRule {
    pub fn quantile_power(alphas: Vec<f64>) -> Result<Self> {
        check_alphas(&alphas)?;
        Ok(Self::QuantilePower { alphas })
    }

    pub fn linear_scaled(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::EmptyProfile);
        }
        if coeffs.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return Err(Error::InvalidParameter("linear coefficients must be positive".into()));
        }
        Ok(Self::LinearScaled { coeffs })
    }

    /// Plain argmax of reported values.
    pub fn argmax(n: usize) -> Self {
        Self::LinearScaled { coeffs: vec![1.0; n] }
    }

    pub fn top_l(ell: usize, alphas: Vec<f64>) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidParameter("top-l needs l >= 1".into()));
        }
        check_alphas(&alphas)?;
        Ok(Self::TopL { ell, alphas })
    }

    pub fn players(&self) -> usize {
        match self {
            Self::QuantilePower { alphas } | Self::TopL { alphas, .. } => alphas.len(),
            Self::LinearScaled { coeffs } => coeffs.len(),
        }
    }

    /// Number of goods handed out per round.
    pub fn slots(&self) -> usize {
        match self {
            Self::TopL { ell, .. } => *ell,
            _ => 1,
        }
    }

    fn alpha(&self, j: usize) -> Option<f64> {
        match self {
            Self::QuantilePower { alphas } | Self::TopL { alphas, .. } => Some(alphas[j]),
            Self::LinearScaled { .. } => None,
        }
    }

    /// Quantile-power score of a smoothed CDF level; weight 0 always scores 0.
    pub fn quantile_score(alpha: f64, u: f64) -> f64 {
        if alpha <= 0.0 {
            0.0
        } else {
            u.powf(1.0 / alpha)
        }
    }
}

/// Per-player reported values for one round; `None` marks an absent player.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub values: Vec<Option<f64>>,
}

impl RoundReport {
    pub fn full(values: &[f64]) -> Self {
        Self { values: values.iter().copied().map(Some).collect() }
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.iter().enumerate().filter_map(|(j, v)| v.map(|_| j))
    }
}

/// Winners of a round, one slot per good; `None` leaves a good unallocated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub slots: Vec<Option<usize>>,
}

impl Allocation {
    pub fn winner(&self) -> Option<usize> {
        self.slots.first().copied().flatten()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.slots.contains(&Some(j))
    }
}

/// Draws the round's scores and allocates; ties are broken uniformly at random.
pub fn allocate<R: Rng + ?Sized>(
    rule: &AllocationRule,
    reports: &RoundReport,
    priors: &[Distribution],
    rng: &mut R,
) -> Result<Allocation> {
    let n = rule.players();
    if reports.values.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: reports.values.len() });
    }
    if priors.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: priors.len() });
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(n);
    for j in reports.active() {
        let v = reports.values[j].unwrap_or_default();
        let score = match rule {
            AllocationRule::LinearScaled { coeffs } => coeffs[j] * v,
            _ => {
                let alpha = rule.alpha(j).unwrap_or_default();
                let u = priors[j].smoothed_cdf_sample(v, rng)?;
                AllocationRule::quantile_score(alpha, u)
            }
        };
        scored.push((j, score));
    }
    if scored.is_empty() {
        return Err(Error::EmptyActiveSet);
    }
    let ell = rule.slots();
    if ell == 1 {
        let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = scored.iter().filter(|s| s.1 == best).map(|s| s.0).collect();
        let pick = if tied.len() > 1 { tied[rng.gen_range(0..tied.len())] } else { tied[0] };
        return Ok(Allocation { slots: vec![Some(pick)] });
    }
    let mut keyed: Vec<(f64, f64, usize)> = scored.into_iter().map(|(j, s)| (s, rng.gen::<f64>(), j)).collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut slots: Vec<Option<usize>> = keyed.iter().take(ell).map(|k| Some(k.2)).collect();
    slots.resize(ell, None);
    Ok(Allocation { slots })
}

/// What is known about one player when computing anticipations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Info {
    Unrevealed,
    Revealed(f64),
    Absent,
}

/// How exact score ties are resolved.
#[derive(Debug, Clone, Copy)]
pub enum TieBreak<'a> {
    Uniform,
    /// `rank[j]` lower wins ties.
    Priority(&'a [usize]),
}

#[derive(Debug, Clone, Copy)]
enum Law<'a> {
    Absent,
    Point(f64),
    /// `coeff * V`, `V` from a continuous prior.
    Scaled { coeff: f64, prior: &'a Distribution },
    /// Atoms in score units.
    Atoms(&'a [(f64, f64)]),
    /// `u^(1/alpha)` with `u ~ Uniform(a, b)`, `a < b`.
    Band { a: f64, b: f64, alpha: f64 },
}

impl Law<'_> {
    /// `(P(score < s), P(score = s))`.
    fn split(&self, s: f64) -> (f64, f64) {
        match *self {
            Law::Absent => (1.0, 0.0),
            Law::Point(p) => {
                if p < s {
                    (1.0, 0.0)
                } else if p == s {
                    (0.0, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Law::Scaled { coeff, prior } => (prior.cdf(s / coeff), 0.0),
            Law::Atoms(atoms) => {
                let mut lt = 0.0;
                let mut eq = 0.0;
                for &(a, m) in atoms {
                    if a < s {
                        lt += m;
                    } else if a == s {
                        eq += m;
                    } else {
                        break;
                    }
                }
                (lt, eq)
            }
            Law::Band { a, b, alpha } => {
                let t = if s <= 0.0 { 0.0 } else { s.powf(alpha) };
                (((t - a) / (b - a)).clamp(0.0, 1.0), 0.0)
            }
        }
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        match *self {
            Law::Absent => {}
            Law::Point(p) => out.push(p),
            Law::Scaled { coeff, prior } => {
                let (lo, hi) = prior.support();
                out.push(coeff * lo);
                out.push(coeff * hi);
            }
            Law::Atoms(atoms) => out.extend(atoms.iter().map(|a| a.0)),
            Law::Band { a, b, alpha } => {
                out.push(AllocationRule::quantile_score(alpha, a));
                out.push(AllocationRule::quantile_score(alpha, b));
            }
        }
    }

    fn is_polynomial(&self) -> (bool, usize) {
        match *self {
            Law::Absent | Law::Point(_) | Law::Atoms(_) => (true, 0),
            Law::Scaled { prior, .. } => (prior.has_linear_quantile(), 1),
            Law::Band { .. } => (false, 0),
        }
    }
}

/// A rule bound to a prior profile, with per-player atoms pre-scaled to score units.
#[derive(Debug, Clone)]
pub struct Scorer {
    rule: AllocationRule,
    priors: Vec<Distribution>,
    score_atoms: Vec<Vec<(f64, f64)>>,
    rules_by_degree: Vec<GaussLegendre>,
    pub tol: f64,
}

impl Scorer {
    pub fn new(rule: AllocationRule, priors: Vec<Distribution>) -> Result<Self> {
        let n = rule.players();
        if priors.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: priors.len() });
        }
        let score_atoms = priors
            .iter()
            .enumerate()
            .map(|(j, d)| match &rule {
                AllocationRule::LinearScaled { coeffs } => {
                    d.atoms().iter().map(|&(a, m)| (coeffs[j] * a, m)).collect()
                }
                _ => Vec::new(),
            })
            .collect();
        let rules_by_degree = (1..=n.div_ceil(2) + 1).map(GaussLegendre::new).collect();
        Ok(Self { rule, priors, score_atoms, rules_by_degree, tol: quad::DEFAULT_TOL })
    }

    pub fn rule(&self) -> &AllocationRule {
        &self.rule
    }

    pub fn priors(&self) -> &[Distribution] {
        &self.priors
    }

    pub fn players(&self) -> usize {
        self.priors.len()
    }

    fn check_info(&self, info: &[Info]) -> Result<()> {
        if info.len() != self.players() {
            return Err(Error::DimensionMismatch { expected: self.players(), got: info.len() });
        }
        for (j, inf) in info.iter().enumerate() {
            if let Info::Revealed(v) = *inf {
                if !self.priors[j].in_support(v) {
                    return Err(Error::OutOfSupport { value: v, dist: self.priors[j].to_string() });
                }
            }
        }
        Ok(())
    }

    fn law(&self, j: usize, info: Info) -> Law<'_> {
        match (info, &self.rule) {
            (Info::Absent, _) => Law::Absent,
            (Info::Revealed(v), AllocationRule::LinearScaled { coeffs }) => Law::Point(coeffs[j] * v),
            (Info::Unrevealed, AllocationRule::LinearScaled { coeffs }) => {
                if self.priors[j].is_atomic() {
                    Law::Atoms(&self.score_atoms[j])
                } else {
                    Law::Scaled { coeff: coeffs[j], prior: &self.priors[j] }
                }
            }
            (_, rule) => {
                let alpha = rule.alpha(j).unwrap_or_default();
                let (a, b) = match info {
                    Info::Revealed(v) => self.priors[j].smoothed_cdf_band(v).unwrap_or((0.0, 1.0)),
                    _ => (0.0, 1.0),
                };
                if alpha <= 0.0 {
                    Law::Point(0.0)
                } else if a < b {
                    Law::Band { a, b, alpha }
                } else {
                    Law::Point(AllocationRule::quantile_score(alpha, a))
                }
            }
        }
    }

    /// Probability that `i` with score `s` receives a good against `laws`.
    fn win_prob(&self, i: usize, s: f64, laws: &[Law<'_>], tie: TieBreak<'_>, dp: &mut Vec<f64>) -> f64 {
        let ell = self.rule.slots();
        let width = laws.len() + 1;
        dp.clear();
        dp.resize(ell * width, 0.0);
        dp[0] = 1.0;
        let mut seen = 0usize;
        for (j, law) in laws.iter().enumerate() {
            if j == i || matches!(law, Law::Absent) {
                continue;
            }
            let (mut lt, mut eq) = law.split(s);
            let mut gt = (1.0 - lt - eq).max(0.0);
            if let TieBreak::Priority(rank) = tie {
                if rank[j] < rank[i] {
                    gt += eq;
                } else {
                    lt += eq;
                }
                eq = 0.0;
            }
            seen += 1;
            for a in (0..ell).rev() {
                for e in (0..=seen).rev() {
                    let idx = a * width + e;
                    let mut v = dp[idx] * lt;
                    if e > 0 {
                        v += dp[idx - 1] * eq;
                    }
                    if a > 0 {
                        v += dp[idx - width] * gt;
                    }
                    dp[idx] = v;
                }
            }
        }
        let mut p = 0.0;
        for a in 0..ell {
            for e in 0..=seen {
                let share = ((ell - a) as f64 / (e + 1) as f64).min(1.0);
                p += dp[a * width + e] * share;
            }
        }
        p
    }

    /// `E[1{i allocated} * V_i]` under `info`, with uniform tie-breaking.
    pub fn anticipated_payoff(&self, info: &[Info], i: usize) -> Result<f64> {
        self.anticipated_payoff_with(info, i, TieBreak::Uniform)
    }

    pub fn anticipated_payoff_with(&self, info: &[Info], i: usize, tie: TieBreak<'_>) -> Result<f64> {
        self.check_info(info)?;
        let laws: Vec<Law<'_>> = info.iter().enumerate().map(|(j, &inf)| self.law(j, inf)).collect();
        Ok(self.payoff_from_laws(&laws, info[i], i, tie))
    }

    fn payoff_from_laws(&self, laws: &[Law<'_>], own: Info, i: usize, tie: TieBreak<'_>) -> f64 {
        let mut dp = Vec::new();
        let prior = &self.priors[i];
        match (own, &self.rule) {
            (Info::Absent, _) => 0.0,
            (Info::Revealed(v), AllocationRule::LinearScaled { coeffs }) => {
                v * self.win_prob(i, coeffs[i] * v, laws, tie, &mut dp)
            }
            (Info::Revealed(v), _) => match laws[i] {
                Law::Point(s) => v * self.win_prob(i, s, laws, tie, &mut dp),
                Law::Band { a, b, alpha } => {
                    let mut breaks = self.foreign_breakpoints(laws, i);
                    breaks.iter_mut().for_each(|s| *s = s.powf(alpha));
                    let avg = quad::integrate_pieces(
                        |u| self.win_prob(i, u.powf(1.0 / alpha), laws, tie, &mut dp),
                        a,
                        b,
                        &breaks,
                        self.tol,
                    ) / (b - a);
                    v * avg
                }
                _ => 0.0,
            },
            (Info::Unrevealed, AllocationRule::LinearScaled { coeffs }) => {
                let c = coeffs[i];
                if prior.is_atomic() {
                    return prior
                        .atoms()
                        .iter()
                        .map(|&(a, m)| m * a * self.win_prob(i, c * a, laws, tie, &mut dp))
                        .sum();
                }
                let mut breaks: Vec<f64> = self
                    .foreign_breakpoints(laws, i)
                    .into_iter()
                    .map(|s| prior.cdf(s / c))
                    .collect();
                breaks.extend(prior.quantile_breakpoints());
                let mut f = |u: f64| {
                    let v = prior.quantile(u);
                    v * self.win_prob(i, c * v, laws, tie, &mut dp)
                };
                let (poly, degree) = laws
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, l)| l.is_polynomial())
                    .fold((prior.has_linear_quantile(), 1usize), |acc, x| (acc.0 && x.0, acc.1 + x.1));
                if poly {
                    let gl = &self.rules_by_degree[degree.div_ceil(2).min(self.rules_by_degree.len() - 1)];
                    quad::piece_edges(0.0, 1.0, &breaks)
                        .windows(2)
                        .map(|w| gl.integrate(&mut f, w[0], w[1]))
                        .sum()
                } else {
                    quad::integrate_pieces(f, 0.0, 1.0, &breaks, self.tol)
                }
            }
            (Info::Unrevealed, rule) => {
                let alpha = rule.alpha(i).unwrap_or_default();
                if alpha <= 0.0 {
                    return prior.expectation() * self.win_prob(i, 0.0, laws, tie, &mut dp);
                }
                let mut breaks: Vec<f64> = self
                    .foreign_breakpoints(laws, i)
                    .into_iter()
                    .map(|s| s.powf(alpha))
                    .collect();
                breaks.extend(prior.quantile_breakpoints());
                quad::integrate_pieces(
                    |u| prior.quantile(u) * self.win_prob(i, u.powf(1.0 / alpha), laws, tie, &mut dp),
                    0.0,
                    1.0,
                    &breaks,
                    self.tol,
                )
            }
        }
    }

    fn foreign_breakpoints(&self, laws: &[Law<'_>], i: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for (j, law) in laws.iter().enumerate() {
            if j != i {
                law.breakpoints(&mut out);
            }
        }
        out
    }

    /// Probability that `i` is allocated when every active player's report is fixed.
    pub fn allocation_prob(&self, reports: &RoundReport, i: usize) -> Result<f64> {
        let info: Vec<Info> = reports
            .values
            .iter()
            .map(|v| v.map_or(Info::Absent, Info::Revealed))
            .collect();
        self.check_info(&info)?;
        let laws: Vec<Law<'_>> = info.iter().enumerate().map(|(j, &inf)| self.law(j, inf)).collect();
        let mut dp = Vec::new();
        Ok(match laws[i] {
            Law::Absent => 0.0,
            Law::Point(s) => self.win_prob(i, s, &laws, TieBreak::Uniform, &mut dp),
            Law::Band { a, b, alpha } => {
                let mut breaks = self.foreign_breakpoints(&laws, i);
                breaks.iter_mut().for_each(|s| *s = s.powf(alpha));
                quad::integrate_pieces(
                    |u| self.win_prob(i, u.powf(1.0 / alpha), &laws, TieBreak::Uniform, &mut dp),
                    a,
                    b,
                    &breaks,
                    self.tol,
                ) / (b - a)
            }
            _ => 0.0,
        })
    }
}

/// `E[1{allocate = i} * V_i]` given `revealed` reports; unrevealed players are integrated out.
pub fn anticipated_payoff(
    rule: &AllocationRule,
    priors: &[Distribution],
    revealed: &[Option<f64>],
    i: usize,
) -> Result<f64> {
    let scorer = Scorer::new(rule.clone(), priors.to_vec())?;
    let info: Vec<Info> = revealed.iter().map(|v| v.map_or(Info::Unrevealed, Info::Revealed)).collect();
    scorer.anticipated_payoff(&info, i)
}

/// Draws `samples` of `max_{j != i} U_j^(1/alpha_j)` for i.i.d. uniform `U_j`.
pub fn max_other_scores<R: Rng + ?Sized>(alphas: &[f64], i: usize, samples: usize, rng: &mut R) -> Vec<f64> {
    (0..samples)
        .map(|_| {
            alphas
                .iter()
                .enumerate()
                .map(|(j, &a)| {
                    let u = rng.gen::<f64>();
                    if j == i {
                        0.0
                    } else {
                        AllocationRule::quantile_score(a, u)
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// KS test of the strongest opponent score against `Uniform(0,1)^(1/(1-alpha_i))`.
pub fn lemma_max_others_ks<R: Rng + ?Sized>(alphas: &[f64], i: usize, samples: usize, rng: &mut R) -> KsResult {
    let expo = 1.0 - alphas[i];
    let draws = max_other_scores(alphas, i, samples, rng);
    stats::ks_test(&draws, |x| x.clamp(0.0, 1.0).powf(expo))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BinnedWinCheck {
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    pub counts: Vec<u64>,
    pub max_abs_z: f64,
    pub chi_square: f64,
    pub p_value: f64,
}

impl BinnedWinCheck {
    pub fn passes(&self, significance: f64, z_band: f64) -> bool {
        self.p_value > significance && self.max_abs_z < z_band
    }
}

/// Binned `P(win | U_i = x)` under the quantile-power rule with uniform priors,
/// compared with the bin average of `x^(1/alpha_i - 1)`.
pub fn lemma_conditional_win<R: Rng + ?Sized>(
    alphas: &[f64],
    i: usize,
    samples: usize,
    bins: usize,
    rng: &mut R,
) -> Result<BinnedWinCheck> {
    let rule = AllocationRule::quantile_power(alphas.to_vec())?;
    let priors = vec![Distribution::uniform(0.0, 1.0)?; alphas.len()];
    let mut wins = vec![0u64; bins];
    let mut counts = vec![0u64; bins];
    let mut values = vec![0.0; alphas.len()];
    for _ in 0..samples {
        values.iter_mut().for_each(|v| *v = rng.gen::<f64>());
        let alloc = allocate(&rule, &RoundReport::full(&values), &priors, rng)?;
        let bin = ((values[i] * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
        if alloc.winner() == Some(i) {
            wins[bin] += 1;
        }
    }
    let alpha = alphas[i];
    let mut observed = Vec::with_capacity(bins);
    let mut expected = Vec::with_capacity(bins);
    let mut chi_square = 0.0;
    let mut max_abs_z: f64 = 0.0;
    let mut dof = 0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let p = alpha * (hi.powf(1.0 / alpha) - lo.powf(1.0 / alpha)) / (hi - lo);
        let n = counts[b] as f64;
        let obs = if n > 0.0 { wins[b] as f64 / n } else { 0.0 };
        observed.push(obs);
        expected.push(p);
        let var = p * (1.0 - p) / n;
        if n > 0.0 && var > 0.0 {
            let z = (obs - p) / var.sqrt();
            chi_square += z * z;
            max_abs_z = max_abs_z.max(z.abs());
            dof += 1;
        }
    }
    Ok(BinnedWinCheck {
        observed,
        expected,
        counts,
        max_abs_z,
        chi_square,
        p_value: stats::chi_square_pvalue(chi_square, dof.max(1)),
    })
}
