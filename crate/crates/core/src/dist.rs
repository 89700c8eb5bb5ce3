//! Bounded value priors with quantiles, smoothed CDFs, splitting and scaling.
//!
//! Every prior is either purely continuous (uniform, or a split of a
//! continuous prior) or purely atomic (point mass, binary, finite discrete,
//! or a split of one of those). Mixed priors are not representable.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::quad;

/// Tolerance on the total mass of a finite discrete prior.
const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Uniform { lo: f64, hi: f64 },
    PointMass { v: f64 },
    Binary { p: f64, hi: f64, lo: f64 },
    Discrete { atoms: Vec<(f64, f64)> },
    /// Prior whose `k`-fold i.i.d. maximum is distributed as `base`.
    Split { base: Box<Distribution>, k: u32 },
}

/// A validated value prior. Construct through the named constructors or by
/// parsing a literal such as `uniform:2,14`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    kind: Kind,
    // Atomic priors: ascending atoms with positive mass, and cumulative masses.
    atoms: Vec<(f64, f64)>,
    cum: Vec<f64>,
}

fn check_value(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} must be finite and nonnegative, got {v}"
        )));
    }
    Ok(())
}

impl Distribution {
    fn from_kind(kind: Kind, atoms: Vec<(f64, f64)>) -> Self {
        let mut cum = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for &(_, m) in &atoms {
            acc += m;
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        Self { kind, atoms, cum }
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check_value("lo", lo)?;
        check_value("hi", hi)?;
        if lo > hi {
            return Err(Error::InvalidParameter(format!("uniform needs lo <= hi, got {lo} > {hi}")));
        }
        if lo == hi {
            return Self::point(lo);
        }
        Ok(Self::from_kind(Kind::Uniform { lo, hi }, Vec::new()))
    }

    pub fn point(v: f64) -> Result<Self> {
        check_value("v", v)?;
        Ok(Self::from_kind(Kind::PointMass { v }, vec![(v, 1.0)]))
    }

    /// Value `hi` with probability `p`, otherwise `lo`.
    pub fn binary(p: f64, hi: f64, lo: f64) -> Result<Self> {
        check_value("hi", hi)?;
        check_value("lo", lo)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("binary p must lie in [0,1], got {p}")));
        }
        if lo > hi {
            return Err(Error::InvalidParameter(format!("binary needs lo <= hi, got {lo} > {hi}")));
        }
        let atoms = normalize_atoms(vec![(lo, 1.0 - p), (hi, p)]);
        Ok(Self::from_kind(Kind::Binary { p, hi, lo }, atoms))
    }

    /// Finite discrete prior from `(value, probability)` pairs.
    pub fn discrete(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidParameter("discrete prior needs at least one atom".into()));
        }
        let mut total = 0.0;
        for &(v, m) in &pairs {
            check_value("atom value", v)?;
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidParameter(format!("atom probability {m} is invalid")));
            }
            total += m;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidParameter(format!(
                "discrete probabilities sum to {total}, not 1"
            )));
        }
        let atoms = normalize_atoms(pairs);
        let kind = Kind::Discrete { atoms: atoms.clone() };
        Ok(Self::from_kind(kind, atoms))
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn is_atomic(&self) -> bool {
        !self.atoms.is_empty()
    }

    /// Atoms in ascending order; empty for continuous priors.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn is_degenerate(&self) -> bool {
        self.atoms.len() == 1
    }

    /// True when the quantile function is piecewise linear, which makes the
    /// payoff integrands piecewise polynomial.
    pub fn has_linear_quantile(&self) -> bool {
        matches!(self.kind, Kind::Uniform { .. }) || self.is_atomic()
    }

    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            Kind::Uniform { lo, hi } => (*lo, *hi),
            Kind::Split { base, .. } if !self.is_atomic() => base.support(),
            _ => (self.atoms[0].0, self.atoms[self.atoms.len() - 1].0),
        }
    }

    pub fn in_support(&self, v: f64) -> bool {
        if self.is_atomic() {
            self.atom_index(v).is_some()
        } else {
            let (lo, hi) = self.support();
            v >= lo && v <= hi
        }
    }

    fn atom_index(&self, v: f64) -> Option<usize> {
        self.atoms
            .binary_search_by(|(a, _)| a.total_cmp(&v))
            .ok()
    }

    /// Probability of exactly `v`.
    pub fn mass_at(&self, v: f64) -> f64 {
        self.atom_index(v).map_or(0.0, |k| self.atoms[k].1)
    }

    /// `P(V <= v)`.
    pub fn cdf(&self, v: f64) -> f64 {
        match &self.kind {
            Kind::Uniform { lo, hi } => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            Kind::Split { base, k } if !self.is_atomic() => base.cdf(v).powf(1.0 / *k as f64),
            _ => {
                let n = self.atoms.partition_point(|(a, _)| *a <= v);
                if n == 0 {
                    0.0
                } else {
                    self.cum[n - 1]
                }
            }
        }
    }

    /// `P(V < v)`.
    pub fn cdf_below(&self, v: f64) -> f64 {
        if self.is_atomic() {
            let n = self.atoms.partition_point(|(a, _)| *a < v);
            if n == 0 {
                0.0
            } else {
                self.cum[n - 1]
            }
        } else {
            self.cdf(v)
        }
    }

    /// Generalized inverse `inf { v : F(v) >= u }`; `u = 0` maps to the support minimum.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            Kind::Uniform { lo, hi } => lo + u * (hi - lo),
            Kind::Split { base, k } if !self.is_atomic() => base.quantile(u.powi(*k as i32)),
            _ => {
                let idx = self.cum.partition_point(|&c| c < u);
                self.atoms[idx.min(self.atoms.len() - 1)].0
            }
        }
    }

    /// Interior quantile levels where the quantile function jumps.
    pub fn quantile_breakpoints(&self) -> Vec<f64> {
        if self.cum.len() < 2 {
            return Vec::new();
        }
        self.cum[..self.cum.len() - 1].to_vec()
    }

    /// Support ends and atoms, ascending.
    pub fn value_breakpoints(&self) -> Vec<f64> {
        if self.is_atomic() {
            self.atoms.iter().map(|&(a, _)| a).collect()
        } else {
            let (lo, hi) = self.support();
            vec![lo, hi]
        }
    }

    pub fn expectation(&self) -> f64 {
        match &self.kind {
            Kind::Uniform { lo, hi } => 0.5 * (lo + hi),
            Kind::Split { .. } if !self.is_atomic() => quad::integrate(
                |u| self.quantile(u),
                0.0,
                1.0,
                quad::DEFAULT_TOL,
            ),
            _ => self.atoms.iter().map(|(a, m)| a * m).sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen::<f64>())
    }

    /// Smoothed CDF at `v`: `F(v)` at continuity points, uniform across the jump at an atom.
    pub fn smoothed_cdf_sample<R: Rng + ?Sized>(&self, v: f64, rng: &mut R) -> Result<f64> {
        let (below, at) = self.smoothed_cdf_band(v)?;
        if at > below {
            Ok(below + (at - below) * rng.gen::<f64>())
        } else {
            Ok(at)
        }
    }

    /// The interval `[F(v-), F(v)]` the smoothed CDF is drawn from.
    pub fn smoothed_cdf_band(&self, v: f64) -> Result<(f64, f64)> {
        if !self.in_support(v) {
            return Err(Error::OutOfSupport { value: v, dist: self.to_string() });
        }
        Ok((self.cdf_below(v), self.cdf(v)))
    }

    /// The prior `D[k]` whose `k`-fold i.i.d. maximum is distributed as `self`.
    pub fn split(&self, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("split needs k >= 1".into()));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let root = 1.0 / k as f64;
        match &self.kind {
            Kind::PointMass { .. } => Ok(self.clone()),
            Kind::Binary { p, hi, lo } => Self::binary(1.0 - (1.0 - p).powf(root), *hi, *lo),
            Kind::Split { base, k: inner } if !self.is_atomic() => Ok(Self::from_kind(
                Kind::Split { base: base.clone(), k: inner * k },
                Vec::new(),
            )),
            Kind::Uniform { .. } => Ok(Self::from_kind(
                Kind::Split { base: Box::new(self.clone()), k },
                Vec::new(),
            )),
            _ => {
                let mut prev = 0.0;
                let atoms = self
                    .cum
                    .iter()
                    .zip(&self.atoms)
                    .map(|(&c, &(a, _))| {
                        let top = c.powf(root);
                        let m = top - prev;
                        prev = top;
                        (a, m)
                    })
                    .collect();
                Self::discrete(atoms)
            }
        }
    }

    /// Pushforward under `v -> c * v`.
    pub fn scale(&self, c: f64) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::InvalidParameter(format!("scale factor must be nonnegative, got {c}")));
        }
        if c == 1.0 {
            return Ok(self.clone());
        }
        if c == 0.0 {
            return Self::point(0.0);
        }
        match &self.kind {
            Kind::Uniform { lo, hi } => Self::uniform(c * lo, c * hi),
            Kind::PointMass { v } => Self::point(c * v),
            Kind::Binary { p, hi, lo } => Self::binary(*p, c * hi, c * lo),
            Kind::Discrete { atoms } => Self::discrete(atoms.iter().map(|&(a, m)| (c * a, m)).collect()),
            Kind::Split { base, k } => base.scale(c)?.split(*k),
        }
    }
}

fn normalize_atoms(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.retain(|&(_, m)| m > 0.0);
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (v, m) in atoms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += m,
            _ => out.push((v, m)),
        }
    }
    out
}

/// Parses a decimal or a fraction such as `1/3`.
pub fn parse_number(text: &str) -> Option<f64> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().ok()?;
            let den: f64 = den.trim().parse().ok()?;
            if den == 0.0 {
                return None;
            }
            num / den
        }
        None => text.parse().ok()?,
    };
    value.is_finite().then_some(value)
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Kind::PointMass { v } => write!(f, "point:{v}"),
            Kind::Binary { p, hi, lo } if *lo == 0.0 => write!(f, "binary:{p},{hi}"),
            Kind::Binary { p, hi, lo } => write!(f, "binary:{p},{hi},{lo}"),
            Kind::Discrete { atoms } => {
                f.write_str("discrete:")?;
                for (idx, (v, m)) in atoms.iter().enumerate() {
                    if idx > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{v}:{m}")?;
                }
                Ok(())
            }
            Kind::Split { base, k } => write!(f, "split:{k}:{base}"),
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    /// Literals: `uniform:lo,hi`, `point:v`, `binary:p,hi[,lo]`,
    /// `discrete:v1:p1;v2:p2;...` and `split:k:<literal>`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidParameter(format!("bad distribution literal `{text}`: {why}"));
        let (family, rest) = text.trim().split_once(':').ok_or_else(|| bad("missing `:`"))?;
        let numbers = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|x| parse_number(x).ok_or_else(|| bad(&format!("`{x}` is not a number"))))
                .collect()
        };
        match family.trim() {
            "uniform" => match numbers(rest)?.as_slice() {
                [lo, hi] => Self::uniform(*lo, *hi),
                _ => Err(bad("uniform takes lo,hi")),
            },
            "point" => match numbers(rest)?.as_slice() {
                [v] => Self::point(*v),
                _ => Err(bad("point takes one value")),
            },
            "binary" => match numbers(rest)?.as_slice() {
                [p, hi] => Self::binary(*p, *hi, 0.0),
                [p, hi, lo] => Self::binary(*p, *hi, *lo),
                _ => Err(bad("binary takes p,hi[,lo]")),
            },
            "discrete" => {
                let pairs = rest
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|pair| {
                        let (v, p) = pair.split_once(':').ok_or_else(|| bad("atoms are value:prob"))?;
                        let v = parse_number(v).ok_or_else(|| bad("atom value"))?;
                        let p = parse_number(p).ok_or_else(|| bad("atom probability"))?;
                        Ok((v, p))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::discrete(pairs)
            }
            "split" => {
                let (k, inner) = rest.split_once(':').ok_or_else(|| bad("split takes k:<literal>"))?;
                let k: u32 = k.trim().parse().map_err(|_| bad("split k must be a positive integer"))?;
                inner.parse::<Distribution>()?.split(k)
            }
            other => Err(bad(&format!("unknown family `{other}`"))),
        }
    }
}

/// `E[max]` of independent draws from `profile`.
pub fn expected_max(profile: &[Distribution]) -> Result<f64> {
    if profile.is_empty() {
        return Err(Error::EmptyProfile);
    }
    // E[max] = L + int_L^H (1 - prod F_j(v)) dv, with L the largest support minimum.
    let low = profile.iter().map(|d| d.support().0).fold(f64::MIN, f64::max);
    let high = profile.iter().map(|d| d.support().1).fold(f64::MIN, f64::max);
    let breaks: Vec<f64> = profile.iter().flat_map(|d| d.value_breakpoints()).collect();
    let tail = quad::integrate_pieces(
        |v| 1.0 - profile.iter().map(|d| d.cdf(v)).product::<f64>(),
        low,
        high,
        &breaks,
        quad::DEFAULT_TOL,
    );
    Ok(low + tail)
}
