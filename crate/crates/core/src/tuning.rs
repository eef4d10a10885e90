//! Context tuning of rule centers/spreads and per-rule exponent tuning.
//!
//! Both tuners minimize the contrast error `E = sum((1 - a_c + a_-c)^2)`
//! over the training set, where for each sample `a_c` is the strongest
//! firing among rules of its class and `a_-c` the strongest among rules of
//! other classes. Updates are online: every sample immediately moves the
//! two selected rules, and later samples in the epoch see the new
//! parameters. After each epoch the error (and, for context tuning, the
//! misclassification count) is re-evaluated; an epoch that made things
//! worse is rolled back wholesale and the learning rates shrink by
//! `1 - eps_reduce`.
//!
//! The center/spread steps follow the printed update rules, which equal the
//! negative error gradient scaled by a constant 1/4; the exponent step
//! equals it scaled by 1/2 for the same-class rule. For the wrong-class
//! rule's exponent the printed rule uses the same sign as the same-class
//! rule, which is not a descent direction; set
//! [`TuningConfig::qtune_sign_corrected`] to use the descent sign instead.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::inference::{
    classify_batch, firing, firing_product, firing_softmin, floored_memberships, power_weights,
    Prediction,
};
use crate::rulebase::{sigma_floors, FuzzyRule, RuleBase, TNorm};

/// Settings shared by [`context_tune`] and [`q_tune`].
#[derive(Clone, Debug)]
pub struct TuningConfig {
    /// Conjunction the context tuner optimizes under (product or softmin).
    pub tnorm: TNorm,
    /// Center learning rate; `None` means 0.1 times the squared mean
    /// feature range of the training data.
    pub eta_m: Option<f64>,
    /// Spread learning rate; same default rule as `eta_m`.
    pub eta_s: Option<f64>,
    /// Exponent learning rate.
    pub eta_q: f64,
    /// Learning-rate reduction factor applied on rollback, in (0, 1).
    pub eps_reduce: f64,
    pub maxiter: usize,
    /// Exponents are kept at least this far from zero.
    pub q_min: f64,
    /// Spread floor as a fraction of each feature's range.
    pub sigma_floor_factor: f64,
    /// Use the descent sign for the wrong-class exponent update instead of
    /// the printed sign.
    pub qtune_sign_corrected: bool,
    /// Stop when `stall_patience` consecutive accepted epochs each improve
    /// E by less than this.
    pub stall_tolerance: f64,
    pub stall_patience: usize,
}

impl TuningConfig {
    pub fn defaults(tnorm: TNorm) -> Self {
        TuningConfig {
            tnorm,
            eta_m: None,
            eta_s: None,
            eta_q: 500.0,
            eps_reduce: 0.1,
            maxiter: 200,
            q_min: 0.1,
            sigma_floor_factor: 1e-3,
            qtune_sign_corrected: false,
            stall_tolerance: 1e-9,
            stall_patience: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_m", self.eta_m), ("eta_s", self.eta_s)] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("{name} {v} must be finite and >= 0")));
                }
            }
        }
        if !self.eta_q.is_finite() || self.eta_q < 0.0 {
            return Err(Error::invalid(format!("eta_q {} must be finite and >= 0", self.eta_q)));
        }
        if !(self.eps_reduce > 0.0 && self.eps_reduce < 1.0) {
            return Err(Error::invalid(format!("eps_reduce {} outside (0, 1)", self.eps_reduce)));
        }
        if self.maxiter == 0 {
            return Err(Error::invalid("maxiter must be at least 1"));
        }
        if !(self.q_min > 0.0) {
            return Err(Error::invalid(format!("q_min {} must be positive", self.q_min)));
        }
        if !(self.sigma_floor_factor > 0.0) {
            return Err(Error::invalid(format!(
                "sigma floor factor {} must be positive",
                self.sigma_floor_factor
            )));
        }
        if self.stall_patience == 0 || !(self.stall_tolerance >= 0.0) {
            return Err(Error::invalid("stall settings must be positive"));
        }
        Ok(())
    }

    /// Concrete center/spread rates, applying the range-based default.
    pub fn resolve_rates(&self, data: &Dataset) -> Result<(f64, f64)> {
        let auto = match (self.eta_m, self.eta_s) {
            (Some(_), Some(_)) => 0.0,
            _ => {
                let ranges = data.feature_ranges()?;
                let mean: f64 =
                    ranges.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / ranges.len() as f64;
                0.1 * mean * mean
            }
        };
        Ok((self.eta_m.unwrap_or(auto), self.eta_s.unwrap_or(auto)))
    }
}

/// The two rules selected for a sample: the strongest same-class rule and
/// the strongest wrong-class rule, identified by rule id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CPair {
    pub rule_c: usize,
    pub rule_notc: usize,
    pub alpha_c: f64,
    pub alpha_notc: f64,
}

/// Like [`find_cpair`] but returns indices into `rb.rules`.
fn cpair_indices(
    rb: &RuleBase,
    x: &[f64],
    label: usize,
    tnorm: TNorm,
) -> Result<(usize, usize, f64, f64)> {
    let mut best_c: Option<(usize, f64)> = None;
    let mut best_n: Option<(usize, f64)> = None;
    for (i, rule) in rb.rules.iter().enumerate() {
        let f = firing(tnorm, rule, x);
        let slot = if rule.class == label { &mut best_c } else { &mut best_n };
        let take = match *slot {
            None => true,
            Some((bi, bf)) => f > bf || (f == bf && rule.id < rb.rules[bi].id),
        };
        if take {
            *slot = Some((i, f));
        }
    }
    let (ci, cf) =
        best_c.ok_or_else(|| Error::invalid(format!("class {label} has no rules")))?;
    let (ni, nf) = best_n.ok_or_else(|| {
        Error::invalid(format!("no rules outside class {label}; tuning needs at least two classes"))
    })?;
    Ok((ci, ni, cf, nf))
}

/// Selects the tuning pair for one sample under the rulebase's conjunction;
/// ties go to the lowest rule id.
pub fn find_cpair(rb: &RuleBase, x: &[f64], label: usize) -> Result<CPair> {
    let (ci, ni, alpha_c, alpha_notc) = cpair_indices(rb, x, label, rb.tnorm)?;
    Ok(CPair { rule_c: rb.rules[ci].id, rule_notc: rb.rules[ni].id, alpha_c, alpha_notc })
}

fn check_compatible(rb: &RuleBase, data: &Dataset) -> Result<()> {
    if data.p() != rb.p {
        return Err(Error::invalid(format!(
            "dataset has {} features, rulebase expects {}",
            data.p(),
            rb.p
        )));
    }
    if data.c() != rb.c {
        return Err(Error::invalid(format!(
            "dataset has {} classes, rulebase expects {}",
            data.c(),
            rb.c
        )));
    }
    Ok(())
}

/// Contrast error `sum((1 - a_c + a_-c)^2)` over a labeled dataset; zero
/// for an empty dataset.
pub fn error_e(rb: &RuleBase, data: &Dataset) -> Result<f64> {
    check_compatible(rb, data)?;
    let mut e = 0.0;
    for s in data.samples() {
        let (_, _, ac, an) = cpair_indices(rb, &s.x, s.y, rb.tnorm)?;
        let l = 1.0 - ac + an;
        e += l * l;
    }
    Ok(e)
}

/// Number of samples whose prediction differs from their label; outliers
/// count as misclassified.
pub fn misclassification_count(rb: &RuleBase, data: &Dataset) -> Result<usize> {
    check_compatible(rb, data)?;
    let results = classify_batch(rb, data)?;
    Ok(results
        .iter()
        .zip(data.samples())
        .filter(|(r, s)| r.prediction != Prediction::Class(s.y))
        .count())
}

/// Per-unit-rate update factors for one rule at one sample, before the loss
/// term `(1 - a_c + a_-c)` and the role sign are applied.
#[derive(Clone, Debug)]
pub struct StepDeltas {
    /// `alpha * w_k * (x_k - v_k) / sigma_k^2` per feature.
    pub dv: Vec<f64>,
    /// `alpha * w_k * (x_k - v_k)^2 / sigma_k^3` per feature.
    pub dsigma: Vec<f64>,
}

/// Computes the printed center/spread factors for a rule. `w_k` is 1 under
/// product and the softmax-style weight `mu_k^q / sum(mu_j^q)` under
/// softmin.
pub fn rule_update_factors(rule: &FuzzyRule, x: &[f64], tnorm: TNorm) -> Result<StepDeltas> {
    if x.len() != rule.clauses.len() {
        return Err(Error::invalid(format!(
            "sample has {} features, rule {} has {} clauses",
            x.len(),
            rule.id,
            rule.clauses.len()
        )));
    }
    let (alpha, weights) = match tnorm {
        TNorm::Product => (firing_product(rule, x), vec![1.0; x.len()]),
        TNorm::Softmin => {
            let mu = floored_memberships(rule, x);
            (firing_softmin(rule, x), power_weights(&mu, rule.q))
        }
        TNorm::Min => {
            return Err(Error::invalid(
                "context tuning requires the product or softmin conjunction",
            ))
        }
    };
    let mut dv = Vec::with_capacity(x.len());
    let mut dsigma = Vec::with_capacity(x.len());
    for (k, cl) in rule.clauses.iter().enumerate() {
        let diff = x[k] - cl.center;
        let base = alpha * weights[k] / (cl.sigma * cl.sigma);
        dv.push(base * diff);
        dsigma.push(base * diff * diff / cl.sigma);
    }
    Ok(StepDeltas { dv, dsigma })
}

/// Printed exponent-update factor `(alpha/q)(sum(w_k ln mu_k) - ln alpha)`
/// for a rule at a sample; this equals `d alpha / d q` of the softmin
/// firing and is therefore never negative.
pub fn q_update_factor(rule: &FuzzyRule, x: &[f64]) -> f64 {
    let mu = floored_memberships(rule, x);
    let alpha = firing_softmin(rule, x);
    let w = power_weights(&mu, rule.q);
    let weighted_log: f64 = w.iter().zip(&mu).map(|(wi, m)| wi * m.ln()).sum();
    (alpha / rule.q) * (weighted_log - alpha.ln())
}

fn apply_rule_update(
    rule: &mut FuzzyRule,
    deltas: &StepDeltas,
    rate_m: f64,
    rate_s: f64,
    floors: &[f64],
    sign: f64,
) {
    for (k, cl) in rule.clauses.iter_mut().enumerate() {
        let v_new = cl.center + sign * rate_m * deltas.dv[k];
        if v_new.is_finite() {
            cl.center = v_new;
        }
        let s_new = (cl.sigma + sign * rate_s * deltas.dsigma[k]).max(floors[k]);
        cl.sigma = if s_new.is_finite() { s_new } else { floors[k] };
    }
}

fn context_step(
    rb: &mut RuleBase,
    x: &[f64],
    label: usize,
    eta_m: f64,
    eta_s: f64,
    floors: &[f64],
    tnorm: TNorm,
) -> Result<()> {
    if floors.len() != rb.p {
        return Err(Error::invalid("sigma floors do not match the rulebase dimensionality"));
    }
    let (ci, ni, ac, an) = cpair_indices(rb, x, label, tnorm)?;
    let l = 1.0 - ac + an;
    // both rules' factors come from the pre-update snapshot
    let dc = rule_update_factors(&rb.rules[ci], x, tnorm)?;
    let dn = rule_update_factors(&rb.rules[ni], x, tnorm)?;
    apply_rule_update(&mut rb.rules[ci], &dc, eta_m * l, eta_s * l, floors, 1.0);
    apply_rule_update(&mut rb.rules[ni], &dn, eta_m * l, eta_s * l, floors, -1.0);
    Ok(())
}

/// One online step of the product-conjunction context tuner: the same-class
/// rule moves toward the sample and widens, the wrong-class rule moves away
/// and narrows.
pub fn step_product(
    rb: &mut RuleBase,
    x: &[f64],
    label: usize,
    eta_m: f64,
    eta_s: f64,
    floors: &[f64],
) -> Result<()> {
    context_step(rb, x, label, eta_m, eta_s, floors, TNorm::Product)
}

/// One online step of the softmin-conjunction context tuner.
pub fn step_softmin(
    rb: &mut RuleBase,
    x: &[f64],
    label: usize,
    eta_m: f64,
    eta_s: f64,
    floors: &[f64],
) -> Result<()> {
    context_step(rb, x, label, eta_m, eta_s, floors, TNorm::Softmin)
}

/// Keeps exponents away from zero: values inside `(-q_min, q_min)` are
/// pushed to the nearer bound (previous sign decides for an exact zero),
/// and non-finite updates are discarded.
fn clamp_q(q_new: f64, q_old: f64, q_min: f64) -> f64 {
    if !q_new.is_finite() {
        q_old
    } else if q_new.abs() >= q_min {
        q_new
    } else if q_new == 0.0 {
        q_min.copysign(q_old)
    } else {
        q_min.copysign(q_new)
    }
}

fn q_step(
    rb: &mut RuleBase,
    x: &[f64],
    label: usize,
    eta_q: f64,
    q_min: f64,
    sign_corrected: bool,
) -> Result<()> {
    let (ci, ni, ac, an) = cpair_indices(rb, x, label, TNorm::Softmin)?;
    let l = 1.0 - ac + an;
    let gc = q_update_factor(&rb.rules[ci], x);
    let gn = q_update_factor(&rb.rules[ni], x);
    let sign_n = if sign_corrected { -1.0 } else { 1.0 };
    let qc = rb.rules[ci].q + eta_q * l * gc;
    let qn = rb.rules[ni].q + sign_n * eta_q * l * gn;
    rb.rules[ci].q = clamp_q(qc, rb.rules[ci].q, q_min);
    rb.rules[ni].q = clamp_q(qn, rb.rules[ni].q, q_min);
    Ok(())
}

/// One epoch-level record of a tuning run. Rates are those in effect while
/// the epoch's sweep ran; rates the tuner does not touch are zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub error: f64,
    pub misclassified: usize,
    pub eta_m: f64,
    pub eta_s: f64,
    pub eta_q: f64,
    pub rolled_back: bool,
}

/// Epoch history of a tuning run, starting from the untouched rulebase.
#[derive(Clone, Debug, PartialEq)]
pub struct TuningTrace {
    pub initial_error: f64,
    pub initial_misclassified: usize,
    pub records: Vec<TraceRecord>,
}

impl TuningTrace {
    /// Error sequence over the initial state and every accepted epoch.
    pub fn accepted_errors(&self) -> Vec<f64> {
        std::iter::once(self.initial_error)
            .chain(self.records.iter().filter(|r| !r.rolled_back).map(|r| r.error))
            .collect()
    }

    /// Misclassification sequence over the initial state and every accepted
    /// epoch.
    pub fn accepted_misclassified(&self) -> Vec<usize> {
        std::iter::once(self.initial_misclassified)
            .chain(self.records.iter().filter(|r| !r.rolled_back).map(|r| r.misclassified))
            .collect()
    }

    /// Tab-separated text: comment lines with the initial state, a header
    /// row, then one row per attempted iteration.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("# somrules tuning trace\n");
        out.push_str(&format!(
            "# initial: error={} misclassified={}\n",
            self.initial_error, self.initial_misclassified
        ));
        out.push_str("iteration\terror\tmisclassified\teta_m\teta_s\teta_q\trolled_back\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.iteration,
                r.error,
                r.misclassified,
                r.eta_m,
                r.eta_s,
                r.eta_q,
                u8::from(r.rolled_back)
            ));
        }
        out
    }
}

/// Shared epoch loop. `rates` is `[eta_m, eta_s, eta_q]`; all three shrink
/// together on rollback. Context tuning also rolls back on a worse
/// misclassification count and stops early on a perfect epoch.
fn run_epochs(
    start: &RuleBase,
    data: &Dataset,
    cfg: &TuningConfig,
    mut rates: [f64; 3],
    rollback_on_m: bool,
    sweep: &mut dyn FnMut(&mut RuleBase, &[f64], usize, [f64; 3]) -> Result<()>,
) -> Result<(RuleBase, TuningTrace)> {
    let initial_error = error_e(start, data)?;
    let initial_misclassified = misclassification_count(start, data)?;
    let mut trace = TuningTrace { initial_error, initial_misclassified, records: Vec::new() };
    let mut accepted = start.clone();
    let mut current = start.clone();
    let (mut e_prev, mut m_prev) = (initial_error, initial_misclassified);
    let mut stall = 0usize;

    for t in 1..=cfg.maxiter {
        for s in data.samples() {
            sweep(&mut current, &s.x, s.y, rates)?;
        }
        let e_t = error_e(&current, data)?;
        let m_t = misclassification_count(&current, data)?;
        // NaN compares as "worse": a numerically broken epoch must not be kept
        let worse = (rollback_on_m && m_t > m_prev) || !(e_t <= e_prev);
        trace.records.push(TraceRecord {
            iteration: t,
            error: e_t,
            misclassified: m_t,
            eta_m: rates[0],
            eta_s: rates[1],
            eta_q: rates[2],
            rolled_back: worse,
        });
        if worse {
            current.clone_from(&accepted);
            for r in &mut rates {
                *r *= 1.0 - cfg.eps_reduce;
            }
        } else {
            stall = if e_prev - e_t < cfg.stall_tolerance { stall + 1 } else { 0 };
            e_prev = e_t;
            m_prev = m_t;
            accepted.clone_from(&current);
            if rollback_on_m && (m_t == 0 || e_t == 0.0) {
                break;
            }
            if stall >= cfg.stall_patience {
                break;
            }
        }
    }
    Ok((accepted, trace))
}

/// Tunes rule centers and spreads against the training data under
/// `cfg.tnorm`. Returns the last accepted rulebase (with its `tnorm` set to
/// the tuned conjunction) and the epoch trace.
pub fn context_tune(
    rb0: &RuleBase,
    data: &Dataset,
    cfg: &TuningConfig,
) -> Result<(RuleBase, TuningTrace)> {
    cfg.validate()?;
    rb0.validate()?;
    check_compatible(rb0, data)?;
    if data.is_empty() {
        return Err(Error::invalid("cannot tune on an empty dataset"));
    }
    if cfg.tnorm == TNorm::Min {
        return Err(Error::invalid(
            "context tuning requires the product or softmin conjunction",
        ));
    }
    let tnorm = cfg.tnorm;
    let floors = sigma_floors(data, cfg.sigma_floor_factor)?;
    let (eta_m, eta_s) = cfg.resolve_rates(data)?;
    let mut start = rb0.clone();
    start.tnorm = tnorm;
    run_epochs(&start, data, cfg, [eta_m, eta_s, 0.0], true, &mut |rb, x, y, r| {
        context_step(rb, x, y, r[0], r[1], &floors, tnorm)
    })
}

/// Tunes each rule's softmin exponent with centers and spreads frozen. The
/// rulebase is tuned and returned under the softmin conjunction. Rollback
/// watches the error only; rules never selected for any sample keep their
/// exponent.
pub fn q_tune(rb0: &RuleBase, data: &Dataset, cfg: &TuningConfig) -> Result<(RuleBase, TuningTrace)> {
    cfg.validate()?;
    rb0.validate()?;
    check_compatible(rb0, data)?;
    if data.is_empty() {
        return Err(Error::invalid("cannot tune on an empty dataset"));
    }
    let mut start = rb0.clone();
    start.tnorm = TNorm::Softmin;
    let q_min = cfg.q_min;
    let corrected = cfg.qtune_sign_corrected;
    run_epochs(&start, data, cfg, [0.0, 0.0, cfg.eta_q], false, &mut |rb, x, y, r| {
        q_step(rb, x, y, r[2], q_min, corrected)
    })
}
