//! Primitive ingredients of the system: the binary Markov source, the
//! transmission-time distribution with its discrete hazards, and the time
//! penalty applied to the age of incorrect information.
//!
//! The hazard `q_t` is the probability that an update still in flight after
//! `t - 1` slots is delivered in slot `t`:
//!
//! ```text
//! q_t = p_t / (1 - sum_{i < t} p_i)
//! ```
//!
//! For bounded models `q_{t_max} = 1` and `q_t = 0` for `t > t_max`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of an explicit PMF.
pub const PMF_SUM_TOL: f64 = 1e-12;

/// Symmetric two-state Markov source flipping with probability `p` per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    p: f64,
}

impl SourceModel {
    /// Only `0 < p < 1/2` is supported: that is the regime where the last
    /// received update is the best estimate.
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "source flip probability must satisfy 0 < p < 1/2, got {p}"
            )));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// How a delay distribution was specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayKind {
    Geometric { ps: f64 },
    Zipf { a: f64, t_max: u32 },
    Explicit { pmf: Vec<f64> },
    Deterministic { t: u32 },
}

impl fmt::Display for DelayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayKind::Geometric { ps } => write!(f, "geometric(ps={ps})"),
            DelayKind::Zipf { a, t_max } => write!(f, "zipf(a={a}, t_max={t_max})"),
            DelayKind::Explicit { pmf } => write!(f, "explicit(len={})", pmf.len()),
            DelayKind::Deterministic { t } => write!(f, "deterministic(T={t})"),
        }
    }
}

/// Outcome of checking a delay specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub kind: DelayKind,
    /// Total PMF mass; 1 for the geometric family.
    pub pmf_sum: f64,
    pub bounded: bool,
    pub t_max: Option<u32>,
    /// Hazard at `t_max` for bounded models.
    pub final_hazard: Option<f64>,
    /// One entry per violated invariant.
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "{}: ok", self.kind)
        } else {
            write!(f, "{}: {}", self.kind, self.violations.join("; "))
        }
    }
}

/// Validate a delay specification without constructing the model.
pub fn validate(kind: &DelayKind) -> ValidationReport {
    let mut violations = Vec::new();
    let (pmf_sum, t_max, final_hazard) = match kind {
        DelayKind::Geometric { ps } => {
            if !(*ps > 0.0 && *ps < 1.0) {
                violations.push(format!("geometric success probability must satisfy 0 < ps < 1, got {ps}"));
            }
            (1.0, None, None)
        }
        DelayKind::Zipf { a, t_max } => {
            if !(a.is_finite() && *a >= 0.0) {
                violations.push(format!("zipf exponent must be finite and >= 0, got {a}"));
            }
            if *t_max < 2 {
                violations.push(format!("zipf t_max must be > 1, got {t_max}"));
            }
            (1.0, Some(*t_max), Some(1.0))
        }
        DelayKind::Deterministic { t } => {
            if *t < 1 {
                violations.push("deterministic delay must be at least one slot".to_string());
            }
            (1.0, Some(*t), Some(1.0))
        }
        DelayKind::Explicit { pmf } => {
            for (idx, &x) in pmf.iter().enumerate() {
                if !(x.is_finite() && x >= 0.0) {
                    violations.push(format!("PMF entry p_{} = {x} is not a nonnegative number", idx + 1));
                }
            }
            let sum: f64 = pmf.iter().sum();
            if pmf.is_empty() {
                violations.push("PMF is empty".to_string());
            } else if (sum - 1.0).abs() > PMF_SUM_TOL {
                violations.push(format!("PMF sums to {sum}"));
            }
            let last_positive = pmf.last().is_some_and(|&x| x > 0.0);
            if !pmf.is_empty() && !last_positive {
                violations.push(format!(
                    "final PMF entry p_{} must be positive so that its hazard equals 1",
                    pmf.len()
                ));
            }
            (sum, Some(pmf.len() as u32), last_positive.then_some(1.0))
        }
    };
    ValidationReport {
        kind: kind.clone(),
        pmf_sum,
        bounded: t_max.is_some(),
        t_max,
        final_hazard,
        violations,
    }
}

/// Discrete transmission-time distribution with cached hazards.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    kind: DelayKind,
    /// `pmf[t - 1] = p_t`; empty for geometric.
    pmf: Vec<f64>,
    /// `hazards[t - 1] = q_t`; empty for geometric.
    hazards: Vec<f64>,
}

impl DelayModel {
    pub fn new(kind: DelayKind) -> Result<Self> {
        let report = validate(&kind);
        if !report.is_ok() {
            return Err(Error::InvalidDelay(report));
        }
        let pmf = match &kind {
            DelayKind::Geometric { .. } => Vec::new(),
            DelayKind::Zipf { a, t_max } => {
                let w: Vec<f64> = (1..=*t_max).map(|t| (t as f64).powf(-a)).collect();
                let total: f64 = w.iter().sum();
                w.into_iter().map(|x| x / total).collect()
            }
            DelayKind::Explicit { pmf } => pmf.clone(),
            DelayKind::Deterministic { t } => {
                let mut pmf = vec![0.0; *t as usize];
                pmf[*t as usize - 1] = 1.0;
                pmf
            }
        };
        let hazards = match &kind {
            DelayKind::Geometric { .. } => Vec::new(),
            // Suffix form keeps q_{t_max} = 1 exactly and avoids cancellation.
            DelayKind::Zipf { a, t_max } => {
                let w: Vec<f64> = (1..=*t_max).map(|t| (t as f64).powf(-a)).collect();
                suffix_hazards(&w)
            }
            _ => suffix_hazards(&pmf),
        };
        Ok(Self { kind, pmf, hazards })
    }

    pub fn geometric(ps: f64) -> Result<Self> {
        Self::new(DelayKind::Geometric { ps })
    }

    pub fn zipf(a: f64, t_max: u32) -> Result<Self> {
        Self::new(DelayKind::Zipf { a, t_max })
    }

    pub fn explicit(pmf: Vec<f64>) -> Result<Self> {
        Self::new(DelayKind::Explicit { pmf })
    }

    pub fn deterministic(t: u32) -> Result<Self> {
        Self::new(DelayKind::Deterministic { t })
    }

    pub fn kind(&self) -> &DelayKind {
        &self.kind
    }

    /// Upper bound on the transmission time, `None` for the geometric family.
    pub fn t_max(&self) -> Option<u32> {
        match self.kind {
            DelayKind::Geometric { .. } => None,
            _ => Some(self.hazards.len() as u32),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.t_max().is_some()
    }

    /// `q_t`; errors on `t = 0`.
    pub fn hazard(&self, t: u32) -> Result<f64> {
        if t == 0 {
            return Err(Error::ZeroSlot);
        }
        Ok(self.q(t))
    }

    /// `p_t = Pr(T = t)`; errors on `t = 0`.
    pub fn pmf(&self, t: u32) -> Result<f64> {
        if t == 0 {
            return Err(Error::ZeroSlot);
        }
        Ok(match self.kind {
            DelayKind::Geometric { ps } => ps * (1.0 - ps).powi(t as i32 - 1),
            _ => self.pmf.get(t as usize - 1).copied().unwrap_or(0.0),
        })
    }

    /// Hazard lookup for `t >= 1` on the kernel hot path.
    pub(crate) fn q(&self, t: u32) -> f64 {
        debug_assert!(t >= 1);
        match self.kind {
            DelayKind::Geometric { ps } => ps,
            _ => self.hazards.get(t as usize - 1).copied().unwrap_or(0.0),
        }
    }

    /// Mean transmission time.
    pub fn mean(&self) -> f64 {
        match self.kind {
            DelayKind::Geometric { ps } => 1.0 / ps,
            _ => self.pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum(),
        }
    }
}

fn suffix_hazards(weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; weights.len()];
    let mut tail = 0.0;
    for (idx, &w) in weights.iter().enumerate().rev() {
        tail += w;
        out[idx] = if tail > 0.0 { (w / tail).min(1.0) } else { 0.0 };
    }
    out
}

/// Time penalty `f(Δ)` applied to the age of incorrect information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyFunction {
    /// `αΔ + β`
    Linear { alpha: f64, beta: f64 },
    /// `κΔ²`
    Quadratic { kappa: f64 },
    /// `log_base(Δ + 1)`
    Logarithmic { base: f64 },
    /// Tabulated values for `Δ = 0..len`, extended linearly with `slope`
    /// (or held flat when no slope is given).
    Table { values: Vec<f64>, slope: Option<f64> },
}

impl PenaltyFunction {
    pub fn linear(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0 && beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "linear penalty needs finite alpha, beta >= 0 (got {alpha}, {beta})"
            )));
        }
        Ok(Self::Linear { alpha, beta })
    }

    pub fn quadratic(kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::InvalidParameter(format!("quadratic penalty needs kappa >= 0, got {kappa}")));
        }
        Ok(Self::Quadratic { kappa })
    }

    pub fn logarithmic(base: f64) -> Result<Self> {
        if !(base.is_finite() && base > 1.0) {
            return Err(Error::InvalidParameter(format!("logarithm base must be > 1, got {base}")));
        }
        Ok(Self::Logarithmic { base })
    }

    pub fn table(values: Vec<f64>, slope: Option<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("penalty table is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("penalty table entries must be finite and >= 0".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("penalty table must be nondecreasing".into()));
        }
        if let Some(s) = slope {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidParameter(format!("extrapolation slope must be >= 0, got {s}")));
            }
        }
        Ok(Self::Table { values, slope })
    }

    pub fn eval(&self, delta: u32) -> f64 {
        let d = delta as f64;
        match self {
            PenaltyFunction::Linear { alpha, beta } => alpha * d + beta,
            PenaltyFunction::Quadratic { kappa } => kappa * d * d,
            PenaltyFunction::Logarithmic { base } => (d + 1.0).ln() / base.ln(),
            PenaltyFunction::Table { values, slope } => {
                let last = values.len() - 1;
                match values.get(delta as usize) {
                    Some(v) => *v,
                    None => values[last] + slope.unwrap_or(0.0) * (delta as usize - last) as f64,
                }
            }
        }
    }

    /// True when `f` does not grow without bound (constant linear penalty,
    /// zero quadratic, or a table with no positive slope).
    pub fn is_degenerate(&self) -> bool {
        match self {
            PenaltyFunction::Linear { alpha, .. } => *alpha == 0.0,
            PenaltyFunction::Quadratic { kappa } => *kappa == 0.0,
            PenaltyFunction::Logarithmic { .. } => false,
            PenaltyFunction::Table { slope, .. } => slope.is_none_or(|s| s == 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn source_range() {
        assert!(SourceModel::new(0.3).is_ok());
        for p in [0.0, 0.5, 0.7, -0.1, f64::NAN] {
            assert!(SourceModel::new(p).is_err(), "p = {p}");
        }
    }

    #[test]
    fn hazard_examples() {
        let g = DelayModel::geometric(0.7).unwrap();
        assert_eq!(g.hazard(5).unwrap(), 0.7);

        let z = DelayModel::zipf(0.0, 3).unwrap();
        let q: Vec<f64> = (1..=3).map(|t| z.hazard(t).unwrap()).collect();
        assert_abs_diff_eq!(q[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 0.5, epsilon = 1e-15);
        assert_eq!(q[2], 1.0);
        assert_eq!(z.hazard(4).unwrap(), 0.0);

        let d = DelayModel::deterministic(1).unwrap();
        assert_eq!(d.hazard(1).unwrap(), 1.0);
        assert!(matches!(d.hazard(0), Err(Error::ZeroSlot)));
    }

    #[test]
    fn pmf_examples() {
        let g = DelayModel::geometric(0.7).unwrap();
        assert_abs_diff_eq!(g.pmf(2).unwrap(), 0.21, epsilon = 1e-15);

        // 1 / (1 + 2^-3 + 3^-3 + 4^-3 + 5^-3) by direct summation.
        let z = DelayModel::zipf(3.0, 5).unwrap();
        assert_abs_diff_eq!(z.pmf(1).unwrap(), 0.843_410_658_992_671, epsilon = 1e-12);

        let e = DelayModel::explicit(vec![0.5, 0.5]).unwrap();
        assert_eq!(e.pmf(2).unwrap(), 0.5);
        assert_eq!(e.pmf(3).unwrap(), 0.0);
        assert!(e.pmf(0).is_err());
    }

    #[test]
    fn validation_examples() {
        let r = validate(&DelayKind::Explicit { pmf: vec![0.6, 0.6] });
        assert!(!r.is_ok());
        assert!(r.violations.iter().any(|v| v.contains("PMF sums to 1.2")), "{r}");
        assert!(DelayModel::explicit(vec![0.6, 0.6]).is_err());

        let r = validate(&DelayKind::Zipf { a: 3.0, t_max: 5 });
        assert!(r.is_ok() && r.bounded);
        assert_eq!(DelayModel::zipf(3.0, 5).unwrap().hazard(5).unwrap(), 1.0);

        let r = validate(&DelayKind::Geometric { ps: 0.7 });
        assert!(r.is_ok() && !r.bounded);

        for ps in [0.0, 1.0] {
            assert!(!validate(&DelayKind::Geometric { ps }).is_ok());
        }
        assert!(!validate(&DelayKind::Zipf { a: 1.0, t_max: 1 }).is_ok());
        assert!(!validate(&DelayKind::Explicit { pmf: vec![0.5, 0.5, 0.0] }).is_ok());
    }

    #[test]
    fn deterministic_is_unit_mass() {
        let d = DelayModel::deterministic(3).unwrap();
        assert_eq!(d.t_max(), Some(3));
        assert_eq!((d.q(1), d.q(2), d.q(3)), (0.0, 0.0, 1.0));
        assert_eq!(d.mean(), 3.0);
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(PenaltyFunction::linear(2.0, 0.0).unwrap().eval(3), 6.0);
        assert_eq!(PenaltyFunction::quadratic(1.0).unwrap().eval(3), 9.0);
        assert_abs_diff_eq!(PenaltyFunction::logarithmic(2.0).unwrap().eval(1), 1.0, epsilon = 1e-15);
        let t = PenaltyFunction::table(vec![0.0, 1.0, 3.0], Some(2.0)).unwrap();
        assert_eq!(t.eval(2), 3.0);
        assert_eq!(t.eval(4), 7.0);
        assert!(PenaltyFunction::table(vec![1.0, 0.5], None).is_err());
        assert!(PenaltyFunction::linear(0.0, 2.0).unwrap().is_degenerate());
    }
}
