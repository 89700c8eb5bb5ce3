//! Experiment configuration: flat `key = value` lines plus repeated `[player]` blocks.
//!
//! ```text
//! # three players, repeated game without transfers
//! mechanism = ntu
//! rule = linear:0.84,0.96,1
//! periods = 10000
//! reps = 1000
//! budgets = example
//!
//! [player]
//! weight = 1/3
//! prior = uniform:2,14
//! strategy = truthful
//! ```
//!
//! Player numbers in the text (reveal order, adversary targets) start at 1.

use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use crate::alloc::AllocationRule;
use crate::dist::{parse_number, Distribution};
use crate::ntu::BudgetMode;
use crate::tu::{Balance, SurplusSplit};

const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MechanismKind {
    Tu,
    Ntu,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RuleSpec {
    /// Plain argmax of reports.
    Argmax,
    Linear(Vec<f64>),
    /// Quantile-power rule with the player weights.
    QuantilePower,
    /// Top-`l` quantile-power rule with the player weights.
    Top(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Strategy {
    Truthful,
    Constant(f64),
    Scaled(f64),
    /// Myopic joint adversary against `target` over `grid` support points per player.
    AdversaryVs { target: usize, grid: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SurplusSpec {
    /// `c_i` proportional to weights.
    Proportional,
    Zero,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerSpec {
    pub weight: f64,
    #[serde(serialize_with = "crate::config::literal")]
    pub prior: Distribution,
    pub strategy: Strategy,
    pub sour: Option<f64>,
    pub sens: Option<f64>,
}

fn literal<S: serde::Serializer>(d: &Distribution, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&d.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mechanism: MechanismKind,
    pub rule: RuleSpec,
    pub periods: u64,
    pub reps: u64,
    pub seed: u64,
    pub budgets: BudgetMode,
    pub balance: Balance,
    pub surplus: SurplusSpec,
    /// Reveal order, 0-based.
    pub order: Vec<usize>,
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub players: Vec<PlayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagCode {
    Syntax,
    UnknownKey,
    UnknownSection,
    DuplicateKey,
    MissingKey,
    BadValue,
    BadPrior,
    WeightRange,
    WeightSum,
    NoPlayers,
    Dimension,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Syntax => "SYNTAX",
            Self::UnknownKey => "UNKNOWN_KEY",
            Self::UnknownSection => "UNKNOWN_SECTION",
            Self::DuplicateKey => "DUPLICATE_KEY",
            Self::MissingKey => "MISSING_KEY",
            Self::BadValue => "BAD_VALUE",
            Self::BadPrior => "BAD_PRIOR",
            Self::WeightRange => "WEIGHT_RANGE",
            Self::WeightSum => "WEIGHT_SUM",
            Self::NoPlayers => "NO_PLAYERS",
            Self::Dimension => "DIMENSION",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}: line {line}: key `{key}`: {message}", code.as_str())]
pub struct ConfigError {
    pub code: DiagCode,
    pub line: usize,
    pub key: String,
    pub message: String,
}

fn diag(code: DiagCode, line: usize, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { code, line, key: key.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn weights(&self) -> Vec<f64> {
        self.players.iter().map(|p| p.weight).collect()
    }

    pub fn priors(&self) -> Vec<Distribution> {
        self.players.iter().map(|p| p.prior.clone()).collect()
    }

    pub fn allocation_rule(&self) -> crate::error::Result<AllocationRule> {
        let n = self.players.len();
        match &self.rule {
            RuleSpec::Argmax => Ok(AllocationRule::argmax(n)),
            RuleSpec::Linear(c) => AllocationRule::linear_scaled(c.clone()),
            RuleSpec::QuantilePower => AllocationRule::quantile_power(self.weights()),
            RuleSpec::Top(l) => AllocationRule::top_l(*l, self.weights()),
        }
    }

    /// Surplus split over `E[max] - sum f`, given the realized surplus.
    pub fn surplus_split(&self, surplus: f64) -> SurplusSplit {
        match &self.surplus {
            SurplusSpec::Proportional => SurplusSplit::proportional(&self.weights(), surplus),
            SurplusSpec::Zero => SurplusSplit::zero(self.players.len()),
            SurplusSpec::Explicit(c) => SurplusSplit { c: c.clone() },
        }
    }

    /// `Sour_i`, defaulting to 0 for point masses and 1 otherwise.
    pub fn sour(&self, i: usize) -> f64 {
        let p = &self.players[i];
        p.sour.unwrap_or(if p.prior.is_degenerate() { 0.0 } else { 1.0 })
    }

    /// `Sens_i`, defaulting to the payoff range `sup D_i`.
    pub fn sens(&self, i: usize) -> f64 {
        let p = &self.players[i];
        p.sens.unwrap_or(p.prior.support().1)
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

impl fmt::Display for RuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Argmax => f.write_str("argmax"),
            Self::Linear(c) => write!(f, "linear:{}", fmt_list(c)),
            Self::QuantilePower => f.write_str("quantile-power"),
            Self::Top(l) => write!(f, "top:{l}"),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Truthful => f.write_str("truthful"),
            Self::Constant(v) => write!(f, "constant:{v}"),
            Self::Scaled(c) => write!(f, "scaled:{c}"),
            Self::AdversaryVs { target, grid } => write!(f, "adversary:{},{grid}", target + 1),
        }
    }
}

fn parse_rule(v: &str) -> Option<RuleSpec> {
    match v.split_once(':') {
        None => match v {
            "argmax" => Some(RuleSpec::Argmax),
            "quantile-power" => Some(RuleSpec::QuantilePower),
            _ => None,
        },
        Some(("linear", rest)) => rest.split(',').map(parse_number).collect::<Option<Vec<_>>>().map(RuleSpec::Linear),
        Some(("top", l)) => l.trim().parse().ok().filter(|&l| l >= 1).map(RuleSpec::Top),
        _ => None,
    }
}

pub fn parse_strategy(v: &str) -> Option<Strategy> {
    match v.split_once(':') {
        None if v == "truthful" => Some(Strategy::Truthful),
        None => None,
        Some(("constant", x)) => parse_number(x).map(Strategy::Constant),
        Some(("scaled", x)) => parse_number(x).filter(|c| *c >= 0.0).map(Strategy::Scaled),
        Some(("adversary", rest)) => {
            let (t, g) = rest.split_once(',').unwrap_or((rest, "33"));
            let target: usize = t.trim().parse().ok().filter(|&t| t >= 1)?;
            let grid: usize = g.trim().parse().ok().filter(|&g| g >= 2)?;
            Some(Strategy::AdversaryVs { target: target - 1, grid })
        }
        _ => None,
    }
}

#[derive(Default)]
struct PlayerDraft {
    line: usize,
    weight: Option<f64>,
    prior: Option<Distribution>,
    strategy: Option<Strategy>,
    sour: Option<f64>,
    sens: Option<f64>,
    seen: Vec<String>,
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut top: Vec<(String, String, usize)> = Vec::new();
    let mut players: Vec<PlayerDraft> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if body.starts_with('[') {
            if body == "[player]" {
                players.push(PlayerDraft { line, ..Default::default() });
                continue;
            }
            return Err(diag(DiagCode::UnknownSection, line, body, "only [player] sections exist"));
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| diag(DiagCode::Syntax, line, body, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        match players.last_mut() {
            Some(p) => player_key(p, key, value, line)?,
            None => {
                if top.iter().any(|(k, _, _)| k == key) {
                    return Err(diag(DiagCode::DuplicateKey, line, key, "key given twice"));
                }
                top.push((key.to_string(), value.to_string(), line));
            }
        }
    }

    let mut cfg = ExperimentConfig {
        mechanism: MechanismKind::Ntu,
        rule: RuleSpec::QuantilePower,
        periods: 1,
        reps: 1,
        seed: 0,
        budgets: BudgetMode::Definition,
        balance: Balance::Strict,
        surplus: SurplusSpec::Proportional,
        order: Vec::new(),
        trace: None,
        summary: None,
        players: Vec::new(),
    };
    let mut order_line = 0;
    let mut surplus_line = 0;
    let mut rule_line = 0;
    let mut seen_mechanism = false;
    for (key, value, line) in &top {
        let (key, value, line) = (key.as_str(), value.as_str(), *line);
        let bad = |what: &str| diag(DiagCode::BadValue, line, key, format!("`{value}` is not {what}"));
        match key {
            "mechanism" => {
                seen_mechanism = true;
                cfg.mechanism = match value {
                    "tu" => MechanismKind::Tu,
                    "ntu" => MechanismKind::Ntu,
                    _ => return Err(bad("tu or ntu")),
                }
            }
            "rule" => {
                rule_line = line;
                cfg.rule = parse_rule(value).ok_or_else(|| bad("a rule (argmax, linear:c1,..., quantile-power, top:l)"))?;
            }
            "periods" => {
                cfg.periods = value.parse().ok().filter(|&t: &u64| t >= 1).ok_or_else(|| bad("a positive integer"))?
            }
            "reps" => cfg.reps = value.parse().ok().filter(|&r: &u64| r >= 1).ok_or_else(|| bad("a positive integer"))?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
            "budgets" => {
                cfg.budgets = match value {
                    "definition" => BudgetMode::Definition,
                    "example" => BudgetMode::Example,
                    _ => return Err(bad("definition or example")),
                }
            }
            "balance" => {
                cfg.balance = match value {
                    "strict" => Balance::Strict,
                    "constants" => Balance::Constants,
                    _ => return Err(bad("strict or constants")),
                }
            }
            "surplus" => {
                surplus_line = line;
                cfg.surplus = match value {
                    "proportional" => SurplusSpec::Proportional,
                    "zero" => SurplusSpec::Zero,
                    list => SurplusSpec::Explicit(
                        list.split(',')
                            .map(parse_number)
                            .collect::<Option<Vec<_>>>()
                            .filter(|c| c.iter().all(|x| *x >= 0.0))
                            .ok_or_else(|| bad("proportional, zero or a list of nonnegative numbers"))?,
                    ),
                }
            }
            "order" => {
                order_line = line;
                cfg.order = value
                    .split(',')
                    .map(|x| x.trim().parse::<usize>().ok().filter(|&x| x >= 1).map(|x| x - 1))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| bad("a list of player numbers"))?;
            }
            "trace" => cfg.trace = Some(PathBuf::from(value)),
            "summary" => cfg.summary = Some(PathBuf::from(value)),
            _ => return Err(diag(DiagCode::UnknownKey, line, key, "unknown key")),
        }
    }
    if !seen_mechanism {
        return Err(diag(DiagCode::MissingKey, 0, "mechanism", "required"));
    }
    if players.is_empty() {
        return Err(diag(DiagCode::NoPlayers, 0, "[player]", "at least one player block is required"));
    }
    let n = players.len();
    let mut total = 0.0;
    for p in players {
        let weight = p.weight.ok_or_else(|| diag(DiagCode::MissingKey, p.line, "weight", "required in [player]"))?;
        let prior = p.prior.ok_or_else(|| diag(DiagCode::MissingKey, p.line, "prior", "required in [player]"))?;
        total += weight;
        cfg.players.push(PlayerSpec {
            weight,
            prior,
            strategy: p.strategy.unwrap_or(Strategy::Truthful),
            sour: p.sour,
            sens: p.sens,
        });
    }
    if total > 1.0 + WEIGHT_TOL {
        return Err(diag(DiagCode::WeightSum, 0, "weight", format!("weights sum to {total} > 1")));
    }
    if cfg.order.is_empty() {
        cfg.order = (0..n).collect();
    } else {
        let mut sorted = cfg.order.clone();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return Err(diag(DiagCode::Dimension, order_line, "order", format!("must be a permutation of 1..{n}")));
        }
    }
    if let SurplusSpec::Explicit(c) = &cfg.surplus {
        if c.len() != n {
            return Err(diag(DiagCode::Dimension, surplus_line, "surplus", format!("needs {n} entries")));
        }
    }
    if let RuleSpec::Linear(c) = &cfg.rule {
        if c.len() != n || c.iter().any(|x| *x <= 0.0) {
            return Err(diag(DiagCode::Dimension, rule_line, "rule", format!("needs {n} positive coefficients")));
        }
    }
    for p in &cfg.players {
        if let Strategy::AdversaryVs { target, .. } = p.strategy {
            if target >= n {
                return Err(diag(DiagCode::Dimension, 0, "strategy", format!("adversary target {} > {n}", target + 1)));
            }
        }
    }
    Ok(cfg)
}

fn player_key(p: &mut PlayerDraft, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
    if p.seen.iter().any(|k| k == key) {
        return Err(diag(DiagCode::DuplicateKey, line, key, "key given twice in this [player]"));
    }
    p.seen.push(key.to_string());
    let bad = |what: &str| diag(DiagCode::BadValue, line, key, format!("`{value}` is not {what}"));
    match key {
        "weight" => {
            let w = parse_number(value).ok_or_else(|| bad("a number"))?;
            if !(0.0..=1.0).contains(&w) {
                return Err(diag(DiagCode::WeightRange, line, key, format!("weight {w} is outside [0, 1]")));
            }
            p.weight = Some(w);
        }
        "prior" => {
            p.prior = Some(value.parse().map_err(|e: crate::error::Error| diag(DiagCode::BadPrior, line, key, e.to_string()))?)
        }
        "strategy" => {
            p.strategy = Some(parse_strategy(value).ok_or_else(|| {
                bad("a strategy (truthful, constant:v, scaled:c, adversary:target[,grid])")
            })?)
        }
        "sour" => p.sour = Some(parse_number(value).filter(|x| *x >= 0.0).ok_or_else(|| bad("a nonnegative number"))?),
        "sens" => p.sens = Some(parse_number(value).filter(|x| *x >= 0.0).ok_or_else(|| bad("a nonnegative number"))?),
        _ => return Err(diag(DiagCode::UnknownKey, line, key, "unknown key in [player]")),
    }
    Ok(())
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mech = match self.mechanism {
            MechanismKind::Tu => "tu",
            MechanismKind::Ntu => "ntu",
        };
        writeln!(f, "mechanism = {mech}")?;
        writeln!(f, "rule = {}", self.rule)?;
        writeln!(f, "periods = {}", self.periods)?;
        writeln!(f, "reps = {}", self.reps)?;
        writeln!(f, "seed = {}", self.seed)?;
        let budgets = match self.budgets {
            BudgetMode::Definition => "definition",
            BudgetMode::Example => "example",
        };
        writeln!(f, "budgets = {budgets}")?;
        let balance = match self.balance {
            Balance::Strict => "strict",
            Balance::Constants => "constants",
        };
        writeln!(f, "balance = {balance}")?;
        match &self.surplus {
            SurplusSpec::Proportional => writeln!(f, "surplus = proportional")?,
            SurplusSpec::Zero => writeln!(f, "surplus = zero")?,
            SurplusSpec::Explicit(c) => writeln!(f, "surplus = {}", fmt_list(c))?,
        }
        let order: Vec<String> = self.order.iter().map(|j| (j + 1).to_string()).collect();
        writeln!(f, "order = {}", order.join(","))?;
        if let Some(t) = &self.trace {
            writeln!(f, "trace = {}", t.display())?;
        }
        if let Some(s) = &self.summary {
            writeln!(f, "summary = {}", s.display())?;
        }
        for p in &self.players {
            writeln!(f)?;
            writeln!(f, "[player]")?;
            writeln!(f, "weight = {}", p.weight)?;
            writeln!(f, "prior = {}", p.prior)?;
            writeln!(f, "strategy = {}", p.strategy)?;
            if let Some(s) = p.sour {
                writeln!(f, "sour = {s}")?;
            }
            if let Some(s) = p.sens {
                writeln!(f, "sens = {s}")?;
            }
        }
        Ok(())
    }
}
