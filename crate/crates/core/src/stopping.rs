//! Stopping rules over the top-two answer counts.
//!
//! Each rule maps `(n_first, n_second, n_observed)` to a [`Decision`], where
//! `n_first >= n_second` are the counts of the two most frequent answers and
//! `n_observed` is the number of samples drawn so far (only the fixed-N rule
//! looks at it). The likelihood-ratio rules test H0: p' = 0.5 against
//! p' > 0.5, with p' the leader's share of the top-two votes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{binom_sf, log_beta_shift, reg_inc_beta, LogReal};

pub const CALIBRATED_SPRT_P1: f64 = 0.5001;
pub const CALIBRATED_SPRT_BETA: f64 = 0.949976;
pub const CALIBRATED_MSPRT_PRIOR: f64 = 1e6;
pub const CALIBRATED_MSPRT_BETA: f64 = 0.94994;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const BASELINE_SAMPLE_CAP: u64 = 40;
pub const SEQUENTIAL_SAMPLE_CAP: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// The leader is significantly dominant; stop and return it.
    StopDominant,
    /// No answer dominates; stop anyway and return the current leader.
    StopNoDominance,
    Continue,
}

impl Decision {
    pub fn is_stop(self) -> bool {
        !matches!(self, Decision::Continue)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StoppingRule {
    /// Always draw `fixed_n` samples and take the mode.
    SelfConsistency { fixed_n: u64 },
    /// One-sided binomial test of the top-two counts, re-run after every turn.
    PValue { alpha_sig: f64 },
    /// Beta-posterior probability that the leader beats the runner-up.
    AdaCons { confidence: f64 },
    /// Wald SPRT of p' = 0.5 against p' = p1.
    Sprt { p1: f64, alpha: f64, beta: f64 },
    /// Mixture SPRT with a Beta(α₀, β₀) prior on p' restricted to (0.5, 1].
    Msprt {
        prior_alpha0: f64,
        prior_beta0: f64,
        alpha: f64,
        beta: f64,
        /// Renormalize the prior on (0.5, 1]; when false the raw Beta density is used.
        #[serde(default = "default_true")]
        truncated: bool,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingPolicy {
    #[serde(flatten)]
    pub rule: StoppingRule,
    pub max_samples: u64,
}

impl StoppingPolicy {
    pub fn self_consistency(fixed_n: u64) -> Self {
        StoppingPolicy {
            rule: StoppingRule::SelfConsistency { fixed_n },
            max_samples: fixed_n,
        }
    }

    pub fn pvalue(alpha_sig: f64) -> Self {
        StoppingPolicy {
            rule: StoppingRule::PValue { alpha_sig },
            max_samples: BASELINE_SAMPLE_CAP,
        }
    }

    pub fn adacons(confidence: f64) -> Self {
        StoppingPolicy {
            rule: StoppingRule::AdaCons { confidence },
            max_samples: BASELINE_SAMPLE_CAP,
        }
    }

    pub fn sprt(p1: f64, alpha: f64, beta: f64) -> Self {
        StoppingPolicy {
            rule: StoppingRule::Sprt { p1, alpha, beta },
            max_samples: SEQUENTIAL_SAMPLE_CAP,
        }
    }

    pub fn msprt(prior: f64, alpha: f64, beta: f64) -> Self {
        StoppingPolicy {
            rule: StoppingRule::Msprt {
                prior_alpha0: prior,
                prior_beta0: prior,
                alpha,
                beta,
                truncated: true,
            },
            max_samples: SEQUENTIAL_SAMPLE_CAP,
        }
    }

    /// p1 = 0.5001, α = 0.05, β = 0.949976, cap 256.
    pub fn sprt_calibrated() -> Self {
        Self::sprt(CALIBRATED_SPRT_P1, DEFAULT_ALPHA, CALIBRATED_SPRT_BETA)
    }

    /// α₀ = β₀ = 10⁶, α = 0.05, β = 0.94994, cap 256.
    pub fn msprt_calibrated() -> Self {
        Self::msprt(CALIBRATED_MSPRT_PRIOR, DEFAULT_ALPHA, CALIBRATED_MSPRT_BETA)
    }

    pub fn with_max_samples(mut self, max_samples: u64) -> Self {
        self.max_samples = max_samples;
        self
    }

    pub fn family(&self) -> PolicyFamily {
        match self.rule {
            StoppingRule::SelfConsistency { .. } => PolicyFamily::SelfConsistency,
            StoppingRule::PValue { .. } => PolicyFamily::PValue,
            StoppingRule::AdaCons { .. } => PolicyFamily::AdaCons,
            StoppingRule::Sprt { .. } => PolicyFamily::Sprt,
            StoppingRule::Msprt { .. } => PolicyFamily::Msprt,
        }
    }

    /// Short label used in result files and reports, e.g. `sc@40`, `msprt`.
    pub fn label(&self) -> String {
        match self.rule {
            StoppingRule::SelfConsistency { fixed_n } => format!("sc@{fixed_n}"),
            _ => self.family().name().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        if self.max_samples == 0 {
            return Err(Error::domain("max_samples must be at least 1"));
        }
        match self.rule {
            StoppingRule::SelfConsistency { fixed_n } => {
                if fixed_n == 0 || fixed_n > self.max_samples {
                    return Err(Error::domain(format!(
                        "fixed_n must lie in [1, max_samples = {}], got {fixed_n}",
                        self.max_samples
                    )));
                }
            }
            StoppingRule::PValue { alpha_sig } => open_unit("alpha_sig", alpha_sig)?,
            StoppingRule::AdaCons { confidence } => open_unit("confidence", confidence)?,
            StoppingRule::Sprt { p1, alpha, beta } => {
                if !(p1 > 0.5 && p1 < 1.0) {
                    return Err(Error::domain(format!("p1 must lie in (0.5, 1), got {p1}")));
                }
                open_unit("alpha", alpha)?;
                open_unit("beta", beta)?;
            }
            StoppingRule::Msprt {
                prior_alpha0,
                prior_beta0,
                alpha,
                beta,
                ..
            } => {
                for (name, v) in [("prior_alpha0", prior_alpha0), ("prior_beta0", prior_beta0)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::domain(format!("{name} must be positive, got {v}")));
                    }
                }
                open_unit("alpha", alpha)?;
                open_unit("beta", beta)?;
            }
        }
        Ok(())
    }

    /// Evaluates the rule directly on the given counts.
    pub fn decide(&self, n_first: u64, n_second: u64, n_observed: u64) -> Result<Decision> {
        match self.rule {
            StoppingRule::SelfConsistency { fixed_n } => {
                Ok(self_consistency_decide(n_observed, fixed_n))
            }
            StoppingRule::PValue { alpha_sig } => pvalue_decide(n_first, n_second, alpha_sig),
            StoppingRule::AdaCons { confidence } => adacons_decide(n_first, n_second, confidence),
            StoppingRule::Sprt { p1, alpha, beta } => {
                sprt_decide(n_first, n_second, p1, &sprt_thresholds(alpha, beta)?)
            }
            StoppingRule::Msprt {
                prior_alpha0,
                prior_beta0,
                alpha,
                beta,
                truncated,
            } => {
                check_ordered(n_first, n_second)?;
                let log_lr = if truncated {
                    msprt_log_lr(n_first, n_second, prior_alpha0, prior_beta0)?
                } else {
                    msprt_log_lr_untruncated(n_first, n_second, prior_alpha0, prior_beta0)?
                };
                Ok(threshold_decision(
                    n_first,
                    n_second,
                    LogReal::from_ln(log_lr),
                    &sprt_thresholds(alpha, beta)?,
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyFamily {
    SelfConsistency,
    PValue,
    AdaCons,
    Sprt,
    Msprt,
}

impl PolicyFamily {
    pub fn name(self) -> &'static str {
        match self {
            PolicyFamily::SelfConsistency => "sc",
            PolicyFamily::PValue => "pvalue",
            PolicyFamily::AdaCons => "adacons",
            PolicyFamily::Sprt => "sprt",
            PolicyFamily::Msprt => "msprt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sc" | "self_consistency" | "selfconsistency" => Ok(PolicyFamily::SelfConsistency),
            "pvalue" | "p_value" => Ok(PolicyFamily::PValue),
            "adacons" | "ada_cons" | "adaptive_consistency" => Ok(PolicyFamily::AdaCons),
            "sprt" => Ok(PolicyFamily::Sprt),
            "msprt" | "mixture_sprt" => Ok(PolicyFamily::Msprt),
            other => Err(Error::domain(format!(
                "unknown policy family '{other}' (expected sc, pvalue, adacons, sprt or msprt)"
            ))),
        }
    }

    /// The default policy of this family.
    pub fn default_policy(self) -> StoppingPolicy {
        match self {
            PolicyFamily::SelfConsistency => StoppingPolicy::self_consistency(BASELINE_SAMPLE_CAP),
            PolicyFamily::PValue => StoppingPolicy::pvalue(DEFAULT_SIGNIFICANCE),
            PolicyFamily::AdaCons => StoppingPolicy::adacons(DEFAULT_CONFIDENCE),
            PolicyFamily::Sprt => StoppingPolicy::sprt_calibrated(),
            PolicyFamily::Msprt => StoppingPolicy::msprt_calibrated(),
        }
    }

    /// The default policy with its swept parameter replaced: fixed_n for
    /// self-consistency, significance, confidence, or β for the SPRT rules.
    pub fn with_param(self, value: f64) -> Result<StoppingPolicy> {
        let mut policy = self.default_policy();
        match &mut policy.rule {
            StoppingRule::SelfConsistency { fixed_n } => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::domain(format!(
                        "self-consistency sample size must be a positive integer, got {value}"
                    )));
                }
                *fixed_n = value as u64;
                policy.max_samples = policy.max_samples.max(*fixed_n);
            }
            StoppingRule::PValue { alpha_sig } => *alpha_sig = value,
            StoppingRule::AdaCons { confidence } => *confidence = value,
            StoppingRule::Sprt { beta, .. } | StoppingRule::Msprt { beta, .. } => *beta = value,
        }
        policy.validate().map_err(|e| match e {
            Error::Domain(msg) => Error::domain(format!(
                "parameter value {value} is invalid for the {} family: {msg}",
                self.name()
            )),
            other => other,
        })?;
        Ok(policy)
    }
}

impl fmt::Display for PolicyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Decision boundaries of the likelihood-ratio rules, stored as logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SprtThresholds {
    /// A = (1 − β) / α; reject H0 at or above.
    pub upper: LogReal,
    /// B = β / (1 − α); accept H0 at or below.
    pub lower: LogReal,
}

impl SprtThresholds {
    pub fn ln_a(&self) -> f64 {
        self.upper.ln()
    }

    pub fn ln_b(&self) -> f64 {
        self.lower.ln()
    }
}

pub fn sprt_thresholds(alpha: f64, beta: f64) -> Result<SprtThresholds> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::domain(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    Ok(SprtThresholds {
        upper: LogReal::from_ln((-beta).ln_1p() - alpha.ln()),
        lower: LogReal::from_ln(beta.ln() - (-alpha).ln_1p()),
    })
}

fn check_ordered(n_first: u64, n_second: u64) -> Result<()> {
    if n_first < n_second {
        return Err(Error::Contract(format!(
            "top-two counts must be ordered, got n_first = {n_first} < n_second = {n_second}"
        )));
    }
    Ok(())
}

/// Applies the A/B boundaries. Dominance needs at least one vote for the
/// leader and acceptance needs at least one top-two vote.
fn threshold_decision(
    n_first: u64,
    n_second: u64,
    log_lr: LogReal,
    thresholds: &SprtThresholds,
) -> Decision {
    if n_first >= 1 && log_lr >= thresholds.upper {
        Decision::StopDominant
    } else if n_first + n_second >= 1 && log_lr <= thresholds.lower {
        Decision::StopNoDominance
    } else {
        Decision::Continue
    }
}

/// ln Λ = n_first ln(p1 / 0.5) + n_second ln((1 − p1) / 0.5).
pub fn sprt_log_lr(n_first: u64, n_second: u64, p1: f64) -> f64 {
    let up = (2.0 * p1).ln();
    let down = (2.0 * (1.0 - p1)).ln();
    let mut acc = 0.0;
    if n_first > 0 {
        acc += n_first as f64 * up;
    }
    if n_second > 0 {
        acc += n_second as f64 * down;
    }
    acc
}

pub fn sprt_decide(
    n_first: u64,
    n_second: u64,
    p1: f64,
    thresholds: &SprtThresholds,
) -> Result<Decision> {
    check_ordered(n_first, n_second)?;
    let log_lr = LogReal::from_ln(sprt_log_lr(n_first, n_second, p1));
    Ok(threshold_decision(n_first, n_second, log_lr, thresholds))
}

/// ln of the mixture likelihood ratio
/// ∫_{0.5}^{1} p^{n₁} (1 − p)^{n₂} π(p) dp / 0.5^{n₁ + n₂}
/// with π the Beta(α₀, β₀) density renormalized to (0.5, 1].
///
/// Closed form: B(n₁ + α₀, n₂ + β₀) · [1 − I_{0.5}(n₁ + α₀, n₂ + β₀)]
/// / (B(α₀, β₀) · [1 − I_{0.5}(α₀, β₀)]) · 2^{n₁ + n₂}.
pub fn msprt_log_lr(
    n_first: u64,
    n_second: u64,
    prior_alpha0: f64,
    prior_beta0: f64,
) -> Result<f64> {
    let untruncated = msprt_log_lr_untruncated(n_first, n_second, prior_alpha0, prior_beta0)?;
    // 1 − I_{0.5}(a, b) = I_{0.5}(b, a)
    let prior_mass = reg_inc_beta(0.5, prior_beta0, prior_alpha0)?;
    Ok(untruncated - prior_mass.ln())
}

/// As [`msprt_log_lr`] but with the raw Beta(α₀, β₀) density on (0.5, 1]
/// (no renormalization of the prior).
pub fn msprt_log_lr_untruncated(
    n_first: u64,
    n_second: u64,
    prior_alpha0: f64,
    prior_beta0: f64,
) -> Result<f64> {
    for (name, v) in [("prior_alpha0", prior_alpha0), ("prior_beta0", prior_beta0)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let beta_ratio = log_beta_shift(prior_alpha0, prior_beta0, n_first, n_second)?;
    let posterior_mass = reg_inc_beta(
        0.5,
        prior_beta0 + n_second as f64,
        prior_alpha0 + n_first as f64,
    )?;
    Ok(beta_ratio + posterior_mass.ln() + (n_first + n_second) as f64 * std::f64::consts::LN_2)
}

pub fn msprt_decide(
    n_first: u64,
    n_second: u64,
    prior_alpha0: f64,
    prior_beta0: f64,
    thresholds: &SprtThresholds,
) -> Result<Decision> {
    check_ordered(n_first, n_second)?;
    let log_lr = LogReal::from_ln(msprt_log_lr(n_first, n_second, prior_alpha0, prior_beta0)?);
    Ok(threshold_decision(n_first, n_second, log_lr, thresholds))
}

/// Stops when P(X ≥ n_first) < alpha_sig for X ~ Binomial(n_first + n_second, ½).
/// Never accepts H0.
pub fn pvalue_decide(n_first: u64, n_second: u64, alpha_sig: f64) -> Result<Decision> {
    check_ordered(n_first, n_second)?;
    let p = binom_sf(n_first, n_first + n_second, 0.5)?;
    Ok(if p < alpha_sig {
        Decision::StopDominant
    } else {
        Decision::Continue
    })
}

/// Posterior P(p' > 0.5) under a uniform prior, i.e. 1 − I_{0.5}(n₁ + 1, n₂ + 1).
pub fn adacons_posterior(n_first: u64, n_second: u64) -> Result<f64> {
    reg_inc_beta(0.5, n_second as f64 + 1.0, n_first as f64 + 1.0)
}

pub fn adacons_decide(n_first: u64, n_second: u64, confidence: f64) -> Result<Decision> {
    check_ordered(n_first, n_second)?;
    Ok(if adacons_posterior(n_first, n_second)? >= confidence {
        Decision::StopDominant
    } else {
        Decision::Continue
    })
}

pub fn self_consistency_decide(n_observed_total: u64, fixed_n: u64) -> Decision {
    if n_observed_total >= fixed_n {
        Decision::StopDominant
    } else {
        Decision::Continue
    }
}

/// Smallest n with 2k·exp(−2n·eps²) ≤ delta (Hoeffding plus a union bound over
/// k categories).
pub fn hoeffding_sample_size(k: u64, eps: f64, delta: f64) -> Result<u64> {
    if k == 0 {
        return Err(Error::domain("number of categories must be positive"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let log_ratio = (2.0 * k as f64 / delta).ln();
    if log_ratio <= 0.0 {
        return Ok(0);
    }
    Ok((log_ratio / (2.0 * eps * eps)).ceil() as u64)
}

/// A policy with its count-based decisions tabulated over every reachable
/// `(n_first, n_second)` pair (`n_first + n_second <= max_samples`).
///
/// Lookups are O(1); the table relies on the rules being monotone in
/// `n_first` for fixed `n_second`.
#[derive(Debug, Clone)]
pub struct CompiledPolicy {
    policy: StoppingPolicy,
    table: Option<CountTable>,
}

#[derive(Debug, Clone)]
struct CountTable {
    /// Per n_second: smallest n_first that stops with dominance.
    dominant_from: Vec<Option<u64>>,
    /// Per n_second: largest n_first that stops without dominance.
    no_dominance_upto: Vec<Option<u64>>,
}

impl CompiledPolicy {
    pub fn new(policy: StoppingPolicy) -> Result<Self> {
        policy.validate()?;
        let table = match policy.rule {
            StoppingRule::SelfConsistency { .. } => None,
            _ => Some(CountTable::build(&policy)?),
        };
        Ok(CompiledPolicy { policy, table })
    }

    pub fn policy(&self) -> &StoppingPolicy {
        &self.policy
    }

    pub fn decide(&self, n_first: u64, n_second: u64, n_observed: u64) -> Result<Decision> {
        check_ordered(n_first, n_second)?;
        let Some(table) = &self.table else {
            return self.policy.decide(n_first, n_second, n_observed);
        };
        if n_first + n_second > self.policy.max_samples {
            return self.policy.decide(n_first, n_second, n_observed);
        }
        let row = n_second as usize;
        if table.dominant_from[row].is_some_and(|from| n_first >= from) {
            Ok(Decision::StopDominant)
        } else if n_first + n_second >= 1
            && table.no_dominance_upto[row].is_some_and(|upto| n_first <= upto)
        {
            Ok(Decision::StopNoDominance)
        } else {
            Ok(Decision::Continue)
        }
    }

    /// Number of additional samples to request this turn: the fewest extra
    /// votes for the current leader that would make the rule stop with
    /// dominance, clamped to the remaining budget.
    pub fn determine_trial(&self, n_first: u64, n_second: u64, n_observed: u64) -> Result<u64> {
        check_ordered(n_first, n_second)?;
        let remaining = self.policy.max_samples.saturating_sub(n_observed);
        let needed = match (&self.table, self.policy.rule) {
            (_, StoppingRule::SelfConsistency { fixed_n }) => {
                Some(fixed_n.saturating_sub(n_observed))
            }
            (Some(table), _) => {
                if n_first + n_second > self.policy.max_samples {
                    return determine_trial(
                        n_first,
                        n_second,
                        self.policy.max_samples,
                        n_observed,
                        &self.policy,
                    );
                }
                table.dominant_from[n_second as usize].map(|from| from.saturating_sub(n_first))
            }
            (None, _) => unreachable!("count rules always carry a table"),
        };
        Ok(needed.map_or(remaining, |t| t.min(remaining)))
    }
}

impl CountTable {
    fn build(policy: &StoppingPolicy) -> Result<Self> {
        let cap = policy.max_samples;
        let rows = (cap / 2 + 1) as usize;
        let mut dominant_from = Vec::with_capacity(rows);
        let mut no_dominance_upto = Vec::with_capacity(rows);
        for n_second in 0..rows as u64 {
            let lo = n_second.max(1);
            let hi = cap - n_second;
            let decide = |n_first: u64| policy.decide(n_first, n_second, n_first + n_second);

            // first n_first in [lo, hi] that stops with dominance
            let mut first_stop = None;
            if lo <= hi && decide(hi)? == Decision::StopDominant {
                let (mut a, mut b) = (lo, hi);
                while a < b {
                    let mid = a + (b - a) / 2;
                    if decide(mid)? == Decision::StopDominant {
                        b = mid;
                    } else {
                        a = mid + 1;
                    }
                }
                first_stop = Some(a);
            }
            dominant_from.push(first_stop);

            // last n_first in [n_second, hi] that stops without dominance
            let start = n_second.max(if n_second == 0 { 1 } else { 0 });
            let mut last_accept = None;
            if start <= hi && decide(start)? == Decision::StopNoDominance {
                let (mut a, mut b) = (start, first_stop.map_or(hi, |f| f - 1).max(start));
                while a < b {
                    let mid = a + (b - a).div_ceil(2);
                    if decide(mid)? == Decision::StopNoDominance {
                        a = mid;
                    } else {
                        b = mid - 1;
                    }
                }
                last_accept = Some(a);
            }
            no_dominance_upto.push(last_accept);
        }
        Ok(CountTable {
            dominant_from,
            no_dominance_upto,
        })
    }
}

/// Reference scan: the smallest T in 0..=max_samples with T + n_first > 0
/// such that `decide(n_first + T, n_second)` stops with dominance, clamped to
/// `max_samples − n_observed`. Falls back to the remaining budget if no T
/// fires.
pub fn determine_trial(
    n_first: u64,
    n_second: u64,
    max_samples: u64,
    n_observed: u64,
    policy: &StoppingPolicy,
) -> Result<u64> {
    check_ordered(n_first, n_second)?;
    let remaining = max_samples.saturating_sub(n_observed);
    for t in 0..=max_samples {
        if t + n_first == 0 {
            continue;
        }
        if policy.decide(n_first + t, n_second, n_observed + t)? == Decision::StopDominant {
            return Ok(t.min(remaining));
        }
    }
    Ok(remaining)
}
