//! Closed-form performance of the preemptive policies and the sign check
//! under which the threshold preemptive policy is optimal for bounded delays.
//!
//! Formulas take the hazards they actually depend on (`q_1`, and `q_{t_max-1}`
//! for the sign check). Wrappers accepting a [`DelayModel`] are provided
//! where the whole hazard sequence is needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DelayModel, PenaltyFunction, SourceModel};

fn check_params(p: f64, q1: f64) -> Result<()> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::InvalidParameter(format!("need 0 < p < 1/2, got p = {p}")));
    }
    if !(q1 > 0.0 && q1 <= 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 < q1 <= 1, got q1 = {q1}")));
    }
    Ok(())
}

/// Per-level decay `r = 1 - q1 - p + 2 q1 p` of the strong preemptive
/// stationary distribution.
fn sp_ratio(p: f64, q1: f64) -> f64 {
    1.0 - q1 - p + 2.0 * q1 * p
}

/// Stationary probability of AoII level `delta` under the strong preemptive
/// policy, summed over the channel states.
pub fn sp_stationary(p: f64, q1: f64, delta: u32) -> Result<f64> {
    check_params(p, q1)?;
    let denom = 1.0 - (1.0 - q1) * (1.0 - 2.0 * p);
    if delta == 0 {
        return Ok((p + q1 - 2.0 * q1 * p) / denom);
    }
    let r = sp_ratio(p, q1);
    Ok(r.powi(delta as i32 - 1) * (p * p + q1 * p - 2.0 * q1 * p * p) / denom)
}

/// Truncated expectation with a bound on what was left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CappedSum {
    pub value: f64,
    /// Upper bound on the omitted tail `Σ_{Δ > cap} f(Δ) π(Δ)`.
    pub tail_bound: f64,
}

/// `Σ_{Δ=0}^{cap} f(Δ) π(Δ)` under the strong preemptive policy.
///
/// The tail bound is exact for linear and quadratic penalties, uses
/// `ln(x) <= x / e` for logarithmic ones and the extrapolation slope for
/// tables. Tables without a slope are rejected.
pub fn sp_expected_aoii(p: f64, q1: f64, f: &PenaltyFunction, delta_cap: u32) -> Result<CappedSum> {
    check_params(p, q1)?;
    let r = sp_ratio(p, q1);
    let pi1 = sp_stationary(p, q1, 1)?;

    let mut value = f.eval(0) * sp_stationary(p, q1, 0)?;
    let mut pi = pi1;
    for delta in 1..=delta_cap {
        value += f.eval(delta) * pi;
        pi *= r;
    }

    // Σ_{Δ >= N+1} r^{Δ-1}, Σ Δ r^{Δ-1} and Σ Δ² r^{Δ-1}.
    let n = delta_cap as f64;
    let rn = r.powi(delta_cap as i32);
    let om = 1.0 - r;
    let s0 = rn / om;
    let s1 = rn * ((n + 1.0) - n * r) / (om * om);
    let a = n + 1.0;
    let s2 = rn * (a * a / om + 2.0 * a * r / (om * om) + r * (1.0 + r) / (om * om * om));

    let tail = match f {
        PenaltyFunction::Linear { alpha, beta } => alpha * s1 + beta * s0,
        PenaltyFunction::Quadratic { kappa } => kappa * s2,
        PenaltyFunction::Logarithmic { base } => {
            let c = 1.0 / (std::f64::consts::E * base.ln());
            c * (s1 + s0)
        }
        PenaltyFunction::Table { values, slope } => {
            let slope = slope.ok_or_else(|| {
                Error::InvalidParameter("penalty table needs an extrapolation slope for tail bounding".into())
            })?;
            slope * s1 + values[values.len() - 1] * s0
        }
    };
    Ok(CappedSum { value, tail_bound: pi1 * tail })
}

/// Expected AoII of the strong preemptive policy for `f(Δ) = αΔ + β`.
pub fn sp_expected_aoii_linear(p: f64, q1: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_params(p, q1)?;
    let a = p + q1 - 2.0 * q1 * p;
    let b = q1 + 2.0 * p - 2.0 * q1 * p;
    Ok(alpha * p / (a * b) + beta)
}

/// Expected AoII of the threshold preemptive policy for `f(Δ) = αΔ + β`.
/// The two policies differ only on states the chain never visits, so this is
/// the strong preemptive expression.
pub fn tp_expected_aoii_linear(p: f64, q1: f64, alpha: f64, beta: f64) -> Result<f64> {
    sp_expected_aoii_linear(p, q1, alpha, beta)
}

/// Aggregated stationary masses of the weak preemptive policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WpAggregates {
    /// Mass of all states with `Δ = 0`.
    pub pi0: f64,
    /// `Σ_{Δ >= 1}` mass of states where the policy transmits.
    pub big_pi: f64,
    /// `big_pi_t[t - 1] = Σ_{Δ >= 1} π(Δ, t, 1)` for `1 <= t <= t_max - 1`.
    pub big_pi_t: Vec<f64>,
}

struct WpTerms {
    hazards: Vec<f64>,
    /// `carry[t - 1] = Π_{l=1}^{t} (1 - q_l)(1 - p)`
    carry: Vec<f64>,
    agg: WpAggregates,
}

fn wp_terms(source: &SourceModel, delay: &DelayModel) -> Result<WpTerms> {
    let t_max = delay.t_max().ok_or(Error::UnboundedDelay)?;
    let p = source.p();
    let hazards: Vec<f64> = (1..=t_max).map(|t| delay.q(t)).collect();
    let q1 = hazards[0];
    if q1 <= 0.0 {
        return Err(Error::InvalidParameter("weak preemptive closed form needs q1 > 0".into()));
    }

    let mut carry = Vec::with_capacity(t_max as usize - 1);
    let mut c = 1.0;
    for l in 1..t_max as usize {
        c *= (1.0 - hazards[l - 1]) * (1.0 - p);
        carry.push(c);
    }
    let weighted: f64 = carry.iter().enumerate().map(|(k, c)| hazards[k + 1] * c).sum();
    let plain: f64 = carry.iter().sum();
    let big_pi = 1.0 / (1.0 / p - q1 - weighted + 1.0 + plain);
    let big_pi_t: Vec<f64> = carry.iter().map(|c| c * big_pi).collect();
    let pi0 = 1.0 - big_pi - big_pi_t.iter().sum::<f64>();
    Ok(WpTerms { hazards, carry, agg: WpAggregates { pi0, big_pi, big_pi_t } })
}

/// Aggregated stationary distribution of the weak preemptive policy for a
/// bounded delay.
pub fn wp_aggregates(source: &SourceModel, delay: &DelayModel) -> Result<WpAggregates> {
    Ok(wp_terms(source, delay)?.agg)
}

/// Expected AoII of the weak preemptive policy for `f(Δ) = αΔ + β` and a
/// bounded delay.
///
/// With `Σ = Σ_Δ Δ π_Δ` and `Σ(t) = Σ_Δ Δ π_Δ(t)`, the level-weighted balance
/// equations give `Σ(t) = C_t Σ + Σ_{i<=t} (Π_{j=i+1}^{t} P_j) Π(i)` and
/// `Σ - Π = q_1 p Σ + Σ_t q_{t+1} p Σ(t)`, where `P_j = (1 - q_j)(1 - p)` and
/// `C_t = Π_{l<=t} P_l`.
pub fn wp_expected_aoii_linear(source: &SourceModel, delay: &DelayModel, alpha: f64, beta: f64) -> Result<f64> {
    let WpTerms { hazards, carry, agg } = wp_terms(source, delay)?;
    let p = source.p();

    // inner[t-1] = Σ_{i=1}^{t} (Π_{j=i+1}^{t} P_j) Π(i); empty products are 1.
    let mut inner = Vec::with_capacity(carry.len());
    let mut acc = 0.0;
    for t in 1..=carry.len() {
        let step = (1.0 - hazards[t - 1]) * (1.0 - p);
        acc = if t == 1 { agg.big_pi_t[0] } else { step * acc + agg.big_pi_t[t - 1] };
        inner.push(acc);
    }

    let mut num = agg.big_pi;
    let mut den = 1.0 - hazards[0] * p;
    for t in 1..=carry.len() {
        let w = hazards[t] * p;
        num += w * inner[t - 1];
        den -= w * carry[t - 1];
    }
    let sigma = num / den;
    let sigma_t: f64 = (0..carry.len()).map(|k| carry[k] * sigma + inner[k]).sum();
    Ok(alpha * (sigma + sigma_t) + beta)
}

/// Sign check for the threshold preemptive policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition1Report {
    pub t_max: u32,
    pub p: f64,
    pub q1: f64,
    /// `q_{t_max - 1}`
    pub q_penultimate: f64,
    /// `q_1 >= q_t` for `1 <= t <= t_max - 2`.
    pub hazard_monotone: bool,
    pub big_q1: f64,
    pub big_q2: f64,
    pub big_q3: f64,
    pub satisfied: bool,
}

/// Slack allowed in the hazard monotonicity comparison.
const MONOTONE_TOL: f64 = 1e-12;

/// Evaluate the three sign expressions from `p`, `q_1` and `q_{t_max-1}`.
pub fn condition1_terms(p: f64, q1: f64, qm: f64) -> (f64, f64, f64) {
    let a = q1 + p - 2.0 * q1 * p;
    let b = q1 + 2.0 * p - 2.0 * q1 * p;
    let big_q1 = (qm - qm * p - p) + (1.0 - qm) * p * b * b;
    let big_q2 = (1.0 - 2.0 * p) * ((q1 - 1.0) + (1.0 - qm) * (p + q1 * (1.0 - p))) / a;
    let big_q3 = ((1.0 - q1) * (2.0 * p - 1.0) - p * (1.0 - qm)) / (b * a)
        + (1.0 - qm) * (1.0 - p) * p / a
        + (1.0 - qm) * (1.0 - p)
        + big_q2;
    (big_q1, big_q2, big_q3)
}

/// Check the optimality condition of the threshold preemptive policy for a
/// bounded delay with `t_max >= 2`. For `t_max = 2` it holds unconditionally.
pub fn check_condition1(source: &SourceModel, delay: &DelayModel) -> Result<Condition1Report> {
    let t_max = delay.t_max().ok_or(Error::UnboundedDelay)?;
    if t_max < 2 {
        return Err(Error::InvalidParameter("condition check needs t_max >= 2".into()));
    }
    let p = source.p();
    let q1 = delay.q(1);
    let qm = delay.q(t_max - 1);
    let hazard_monotone = (1..=t_max.saturating_sub(2)).all(|t| q1 + MONOTONE_TOL >= delay.q(t));
    let (big_q1, big_q2, big_q3) = condition1_terms(p, q1, qm);
    let signs_ok = big_q1 >= 0.0 && big_q2 >= 0.0 && big_q3 >= 0.0;
    Ok(Condition1Report {
        t_max,
        p,
        q1,
        q_penultimate: qm,
        hazard_monotone,
        big_q1,
        big_q2,
        big_q3,
        satisfied: hazard_monotone && (t_max < 3 || signs_ok),
    })
}
