//! Transfer-free repeated mechanism: virtual payments, budgets and exclusion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alloc::{allocate, Allocation, RoundReport};
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::targets::phi;
use crate::tu::{GammaMatrix, Mechanism};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BudgetMode {
    /// `alpha_i sqrt(T) ln(T / alpha_j) Sens_j`.
    #[default]
    Definition,
    /// `alpha_i sqrt(T) ln(T) ln(1 / alpha_j) Sens_j`.
    Example,
}

fn check_weight(a: f64) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidParameter(format!("weight {a} must lie in (0, 1]")));
    }
    Ok(())
}

/// Budget `B_{i -> j}` on the externality `i` may impose on `j`.
pub fn ntu_budget(alpha_i: f64, alpha_j: f64, periods: u64, sens_j: f64, mode: BudgetMode) -> Result<f64> {
    check_weight(alpha_i)?;
    check_weight(alpha_j)?;
    if periods < 2 {
        return Err(Error::InvalidParameter("budgets need T >= 2".into()));
    }
    let t = periods as f64;
    Ok(match mode {
        BudgetMode::Definition => alpha_i * t.sqrt() * (t / alpha_j).ln() * sens_j,
        BudgetMode::Example => alpha_i * t.sqrt() * t.ln() * (1.0 / alpha_j).ln() * sens_j,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AzumaBound {
    pub raw: f64,
    pub simplified: f64,
}

/// Azuma tail bound on one pair's cumulative externality reaching `-B`.
pub fn azuma_bound(budget: f64, periods: u64, sour_i: f64, sens_j: f64, alpha_i: f64, alpha_j: f64) -> AzumaBound {
    let t = periods as f64;
    let scale = 2.0 * t * (sour_i * sens_j).powi(2);
    let raw = if scale > 0.0 { (-budget * budget / scale).exp() } else { 0.0 };
    let simplified = alpha_j / t * (sour_i * sour_i / (2.0 * alpha_i * alpha_i)).exp();
    AzumaBound { raw, simplified }
}

/// Per ordered pair running sums of virtual payments, budgets and exclusions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExternalityLedger {
    n: usize,
    cumulative: Vec<f64>,
    budgets: Vec<f64>,
    excluded: Vec<Option<usize>>,
    round: usize,
    horizon: usize,
}

impl ExternalityLedger {
    /// Ledger with `B_{i->j}` from `ntu_budget(alpha_i, alpha_j, T, Sens_j)`.
    pub fn new(alphas: &[f64], sens: &[f64], periods: u64, mode: BudgetMode) -> Result<Self> {
        let n = alphas.len();
        if sens.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sens.len() });
        }
        let mut budgets = vec![f64::INFINITY; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    budgets[i * n + j] = ntu_budget(alphas[i], alphas[j], periods, sens[j], mode)?;
                }
            }
        }
        Ok(Self::with_budgets(n, budgets, periods as usize))
    }

    /// Ledger with an explicit row-major budget matrix.
    pub fn with_budgets(n: usize, budgets: Vec<f64>, horizon: usize) -> Self {
        Self {
            n,
            cumulative: vec![0.0; n * n],
            budgets,
            excluded: vec![None; n],
            round: 0,
            horizon,
        }
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn cumulative(&self, i: usize, j: usize) -> f64 {
        self.cumulative[i * self.n + j]
    }

    pub fn budget(&self, i: usize, j: usize) -> f64 {
        self.budgets[i * self.n + j]
    }

    pub fn is_excluded(&self, i: usize) -> bool {
        self.excluded[i].is_some()
    }

    /// Round in which `i` was excluded.
    pub fn excluded_at(&self, i: usize) -> Option<usize> {
        self.excluded[i]
    }

    pub fn excluded_count(&self) -> usize {
        self.excluded.iter().filter(|e| e.is_some()).count()
    }

    /// Mechanism draws standing in for excluded players' reports this round.
    pub fn draw_excluded<R: Rng + ?Sized>(&self, priors: &[Distribution], rng: &mut R) -> Vec<Option<f64>> {
        (0..self.n)
            .map(|j| self.is_excluded(j).then(|| priors[j].sample(rng)))
            .collect()
    }

    fn book(&mut self, gamma: &GammaMatrix, payer: usize, sign: f64) {
        for j in 0..self.n {
            if j != payer {
                self.cumulative[payer * self.n + j] += sign * gamma.get(payer, j);
            }
        }
    }

    fn crosses(&self, i: usize) -> bool {
        (0..self.n).any(|j| j != i && self.cumulative(i, j) <= -self.budget(i, j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub allocation: Allocation,
    /// Reports used for allocation, with mechanism draws for excluded players.
    pub reports: Vec<f64>,
    pub gamma: GammaMatrix,
    pub newly_excluded: Vec<usize>,
}

impl RoundOutcome {
    pub fn winner(&self) -> Option<usize> {
        self.allocation.winner()
    }
}

/// Plays one round. Entries of `reports` for excluded players are taken as
/// mechanism draws when present and drawn from the prior when absent.
pub fn ntu_round<R: Rng + ?Sized>(
    ledger: &mut ExternalityLedger,
    mech: &Mechanism,
    reports: &[Option<f64>],
    rng: &mut R,
) -> Result<RoundOutcome> {
    let n = ledger.n;
    if ledger.round >= ledger.horizon {
        return Err(Error::RoundBeyondHorizon { round: ledger.round + 1, horizon: ledger.horizon });
    }
    if reports.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: reports.len() });
    }
    let priors = mech.priors();
    let mut effective = Vec::with_capacity(n);
    for (j, r) in reports.iter().enumerate() {
        match (r, ledger.is_excluded(j)) {
            (Some(v), _) => effective.push(*v),
            (None, true) => effective.push(priors[j].sample(rng)),
            (None, false) => return Err(Error::MissingReport(j)),
        }
    }
    let mut known: Vec<bool> = (0..n).map(|j| ledger.is_excluded(j)).collect();
    let mut newly = Vec::new();
    let mut gamma = mech.gamma_from_table(&mech.anticipation_table(&effective, &known)?);
    let mut booked: Vec<usize> = (0..n).filter(|&i| !known[i]).collect();
    for &i in &booked {
        ledger.book(&gamma, i, 1.0);
    }
    loop {
        let crossing: Vec<usize> = booked.iter().copied().filter(|&i| ledger.crosses(i)).collect();
        if crossing.is_empty() {
            break;
        }
        for &i in &crossing {
            ledger.excluded[i] = Some(ledger.round);
            newly.push(i);
            known[i] = true;
            effective[i] = priors[i].sample(rng);
        }
        let survivors: Vec<usize> = booked.iter().copied().filter(|i| !crossing.contains(i)).collect();
        for &i in &survivors {
            ledger.book(&gamma, i, -1.0);
        }
        let next = mech.gamma_from_table(&mech.anticipation_table(&effective, &known)?);
        for &i in &survivors {
            ledger.book(&next, i, 1.0);
        }
        for &i in &survivors {
            for j in 0..n {
                if j != i {
                    gamma.set(i, j, next.get(i, j));
                }
            }
        }
        booked = survivors;
    }
    let allocation = allocate(mech.rule(), &RoundReport::full(&effective), priors, rng)?;
    ledger.round += 1;
    Ok(RoundOutcome { allocation, reports: effective, gamma, newly_excluded: newly })
}

/// Inputs of the finite-horizon guarantee floor for one player.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuaranteeInputs {
    pub alpha: f64,
    #[serde(skip)]
    pub prior: Distribution,
    pub periods: u64,
    pub sour: f64,
    pub sens: f64,
    pub range: f64,
    /// `sum_{j != i} alpha_j`, used by the example-mode budgets.
    pub others_weight: f64,
    pub mode: BudgetMode,
}

impl GuaranteeInputs {
    /// Defaults: payoff range `[0, sup D]`, `Sens = range`, `Sour = 1` (0 for a point mass).
    pub fn new(alpha: f64, prior: Distribution, periods: u64) -> Self {
        let range = prior.support().1;
        let sour = if prior.is_degenerate() { 0.0 } else { 1.0 };
        Self {
            alpha,
            prior,
            periods,
            sour,
            sens: range,
            range,
            others_weight: 1.0 - alpha,
            mode: BudgetMode::Definition,
        }
    }

    pub fn with_mode(mut self, mode: BudgetMode, others_weight: f64) -> Self {
        self.mode = mode;
        self.others_weight = others_weight;
        self
    }

    pub fn with_sour(mut self, sour: f64) -> Self {
        self.sour = sour;
        self
    }

    pub fn with_sens(mut self, sens: f64) -> Self {
        self.sens = sens;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FloorBreakdown {
    /// `T * phi(alpha, D)`.
    pub linear: f64,
    /// Coefficient of `sqrt(T) ln T` in the budget term.
    pub sqrt_log_coefficient: f64,
    pub budget_term: f64,
    pub constant: f64,
    pub floor: f64,
}

pub fn ntu_guarantee_breakdown(g: &GuaranteeInputs) -> Result<FloorBreakdown> {
    if g.alpha <= 0.0 {
        return Err(Error::InvalidParameter("guarantee floor needs alpha > 0".into()));
    }
    check_weight(g.alpha)?;
    let t = g.periods as f64;
    let linear = t * phi(g.alpha, &g.prior)?;
    let blowup = if g.sour > 0.0 { (g.sour * g.sour / (2.0 * g.alpha * g.alpha)).exp() } else { 0.0 };
    let (budget_term, constant) = match g.mode {
        BudgetMode::Definition => (t.sqrt() * (t / g.alpha).ln() * g.sens, g.range * blowup),
        BudgetMode::Example => (
            g.others_weight * t.sqrt() * t.ln() * (1.0 / g.alpha).ln() * g.sens,
            g.others_weight * g.range * blowup,
        ),
    };
    let scale = t.sqrt() * t.ln();
    let sqrt_log_coefficient = if scale > 0.0 { budget_term / scale } else { 0.0 };
    Ok(FloorBreakdown { linear, sqrt_log_coefficient, budget_term, constant, floor: linear - budget_term - constant })
}

/// Finite-horizon total-utility floor of a truthful player.
pub fn ntu_guarantee_floor(g: &GuaranteeInputs) -> Result<f64> {
    Ok(ntu_guarantee_breakdown(g)?.floor)
}

/// `Sour` at which the example-mode constant term equals `constant`.
pub fn sour_from_constant(constant: f64, alpha: f64, others_weight: f64, range: f64) -> f64 {
    let blowup = constant / (others_weight * range);
    (2.0 * alpha * alpha * blowup.ln()).max(0.0).sqrt()
}
