//! Firing strength computation and max-rule classification.
//!
//! The soft-match operator is the power mean
//! `SM(u, q) = (sum(u_i^q) / n)^(1/q)`: the arithmetic mean at `q = 1`,
//! approaching `min(u)` as `q -> -inf` and `max(u)` as `q -> +inf`. It is
//! evaluated in log space so strongly negative exponents neither overflow
//! nor flush to zero.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rulebase::{gaussian_membership, FuzzyRule, RuleBase, TNorm};

/// Memberships are clamped to at least this before a negative power is
/// taken, so a single zero membership cannot poison a soft-minimum.
pub const MU_FLOOR: f64 = 1e-30;

/// Power mean over values known to be positive, with `q != 0`.
fn power_mean_unchecked(values: &[f64], q: f64) -> f64 {
    if q == 1.0 {
        return values.iter().sum::<f64>() / values.len() as f64;
    }
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        max = max.max(q * v.ln());
    }
    let sum: f64 = values.iter().map(|&v| (q * v.ln() - max).exp()).sum();
    ((max + (sum / values.len() as f64).ln()) / q).exp()
}

/// Stable softmax-style weights `u_k^q / sum(u_j^q)` over positive values.
pub(crate) fn power_weights(values: &[f64], q: f64) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        max = max.max(q * v.ln());
    }
    let terms: Vec<f64> = values.iter().map(|&v| (q * v.ln() - max).exp()).collect();
    let sum: f64 = terms.iter().sum();
    terms.into_iter().map(|t| t / sum).collect()
}

/// The soft-match operator `SM(values, q)`.
pub fn soft_match(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("soft-match needs at least one value"));
    }
    if q == 0.0 || !q.is_finite() {
        return Err(Error::invalid(format!("soft-match exponent must be non-zero, got {q}")));
    }
    if let Some(&bad) = values.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("soft-match requires positive values, got {bad}")));
    }
    Ok(power_mean_unchecked(values, q))
}

/// Per-feature memberships of `x` in a rule's clauses.
pub fn memberships(rule: &FuzzyRule, x: &[f64]) -> Vec<f64> {
    rule.clauses.iter().zip(x).map(|(cl, &v)| gaussian_membership(v, cl)).collect()
}

pub(crate) fn floored_memberships(rule: &FuzzyRule, x: &[f64]) -> Vec<f64> {
    rule.clauses
        .iter()
        .zip(x)
        .map(|(cl, &v)| gaussian_membership(v, cl).max(MU_FLOOR))
        .collect()
}

/// Product conjunction. May underflow to zero for far-away samples; that is
/// harmless because zero is already the weakest possible firing.
pub fn firing_product(rule: &FuzzyRule, x: &[f64]) -> f64 {
    rule.clauses
        .iter()
        .zip(x)
        .map(|(cl, &v)| gaussian_membership(v, cl))
        .product()
}

/// Soft-minimum conjunction under the rule's own exponent `q`.
pub fn firing_softmin(rule: &FuzzyRule, x: &[f64]) -> f64 {
    assert!(rule.q != 0.0, "rule {} has q = 0; validate the rulebase", rule.id);
    power_mean_unchecked(&floored_memberships(rule, x), rule.q)
}

/// Hard minimum conjunction.
pub fn firing_min(rule: &FuzzyRule, x: &[f64]) -> f64 {
    rule.clauses
        .iter()
        .zip(x)
        .map(|(cl, &v)| gaussian_membership(v, cl))
        .fold(f64::INFINITY, f64::min)
}

/// Firing strength of one rule under the given conjunction.
pub fn firing(tnorm: TNorm, rule: &FuzzyRule, x: &[f64]) -> f64 {
    match tnorm {
        TNorm::Product => firing_product(rule, x),
        TNorm::Softmin => firing_softmin(rule, x),
        TNorm::Min => firing_min(rule, x),
    }
}

/// Class decision for one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prediction {
    Class(usize),
    /// No rule fired at or above the rulebase threshold.
    Outlier,
}

/// One classification with its winning-rule diagnostics. `rule_id` is the
/// strongest rule even for outliers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub prediction: Prediction,
    pub rule_id: usize,
    pub firing: f64,
    /// Strongest firing among the other rules; zero for a one-rule base.
    pub runner_up: f64,
}

/// Classifies `x` by the rule with the largest firing strength. Ties go to
/// the lowest rule id; a winner below the firing threshold is an outlier.
pub fn classify(rb: &RuleBase, x: &[f64]) -> Result<Classification> {
    if x.len() != rb.p {
        return Err(Error::invalid(format!(
            "sample has {} features, rulebase expects {}",
            x.len(),
            rb.p
        )));
    }
    if rb.rules.is_empty() {
        return Err(Error::invalid("rulebase has no rules"));
    }
    let mut best: Option<(f64, usize, usize)> = None; // (firing, id, class)
    let mut runner_up = 0.0f64;
    for rule in &rb.rules {
        let f = firing(rb.tnorm, rule, x);
        match best {
            Some((bf, bid, _)) if f < bf || (f == bf && rule.id > bid) => {
                runner_up = runner_up.max(f);
            }
            _ => {
                if let Some((bf, _, _)) = best {
                    runner_up = runner_up.max(bf);
                }
                best = Some((f, rule.id, rule.class));
            }
        }
    }
    let (f, id, class) = best.expect("at least one rule");
    let prediction = if f < rb.firing_threshold {
        Prediction::Outlier
    } else {
        Prediction::Class(class)
    };
    Ok(Classification { prediction, rule_id: id, firing: f, runner_up })
}

/// Classifies every sample of a labeled dataset.
pub fn classify_batch(rb: &RuleBase, data: &Dataset) -> Result<Vec<Classification>> {
    if data.p() != rb.p {
        return Err(Error::invalid(format!(
            "dataset has {} features, rulebase expects {}",
            data.p(),
            rb.p
        )));
    }
    data.samples().iter().map(|s| classify(rb, &s.x)).collect()
}

/// Classifies bare feature rows.
pub fn classify_features(rb: &RuleBase, rows: &[Vec<f64>]) -> Result<Vec<Classification>> {
    rows.iter().map(|x| classify(rb, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rulebase::{FuzzyClause, FuzzyRule, RuleBase, RULEBASE_VERSION};

    /// Builds a single-feature rule whose membership at `x = 0` equals `mu`.
    fn rule_with_mu_at_zero(id: usize, class: usize, q: f64, mus: &[f64]) -> FuzzyRule {
        FuzzyRule {
            id,
            class,
            q,
            clauses: mus
                .iter()
                .map(|&mu| FuzzyClause { center: (-mu.ln()).sqrt(), sigma: 1.0 })
                .collect(),
        }
    }

    #[test]
    fn soft_match_of_equal_values_is_that_value() {
        for q in [-100.0, -10.0, -1.0, 0.5, 1.0, 3.0] {
            let v = soft_match(&[0.9; 10], q).unwrap();
            assert!((v - 0.9).abs() < 1e-15, "q={q}: {v}");
        }
    }

    #[test]
    fn soft_match_at_one_is_exactly_the_arithmetic_mean() {
        let vals = [0.2, 0.8, 0.35, 0.99];
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert_eq!(soft_match(&vals, 1.0).unwrap(), mean);
        assert_eq!(soft_match(&[0.2, 0.8], 1.0).unwrap(), 0.5);
    }

    #[test]
    fn soft_match_matches_high_precision_references() {
        // reference values computed with 40-digit arithmetic
        let cases = [
            (-10.0, 0.214_354_672_064_812_87),
            (-100.0, 0.201_391_110_011_343_76),
            (-2.0, 0.274_397_736_228_014_14),
            (3.0, 0.638_250_429_885_990_7),
        ];
        for (q, want) in cases {
            let got = soft_match(&[0.2, 0.8], q).unwrap();
            assert!((got - want).abs() < 1e-12, "q={q}: got {got}, want {want}");
        }
    }

    #[test]
    fn soft_match_survives_extreme_exponents() {
        let got = soft_match(&[1e-30, 1.0], -400.0).unwrap();
        assert!(got.is_finite() && got > 0.0, "{got}");
        assert!((got - 1e-30).abs() < 1e-32, "{got}");
    }

    #[test]
    fn soft_match_rejects_bad_inputs() {
        assert!(soft_match(&[], -10.0).is_err());
        assert!(soft_match(&[0.5], 0.0).is_err());
        assert!(soft_match(&[0.5, 0.0], -10.0).is_err());
        assert!(soft_match(&[0.5, -0.1], 2.0).is_err());
    }

    #[test]
    fn power_weights_sum_to_one_and_favor_small_values_for_negative_q() {
        let w = power_weights(&[0.2, 0.8], -10.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(w[0] > 0.99, "{w:?}");
    }

    #[test]
    fn product_firing_matches_powers() {
        let rule = rule_with_mu_at_zero(0, 0, -10.0, &[0.9; 10]);
        let got = firing_product(&rule, &[0.0; 10]);
        assert!((got - 0.348_678_440_1).abs() < 1e-10, "{got}");

        let one = rule_with_mu_at_zero(0, 0, -10.0, &[0.37]);
        assert!((firing_product(&one, &[0.0]) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn softmin_firing_uses_the_rule_exponent() {
        let rule = rule_with_mu_at_zero(0, 0, -10.0, &[0.2, 0.8]);
        let got = firing_softmin(&rule, &[0.0, 0.0]);
        assert!((got - 0.214_354_672_064_812_87).abs() < 1e-9, "{got}");

        let near_min = rule_with_mu_at_zero(0, 0, -100.0, &[0.2, 0.8]);
        let got = firing_softmin(&near_min, &[0.0, 0.0]);
        assert!((got - 0.2).abs() < 1e-2, "{got}");
    }

    #[test]
    fn min_firing_is_the_smallest_membership() {
        let rule = rule_with_mu_at_zero(0, 0, -10.0, &[0.3, 0.9]);
        let got = firing_min(&rule, &[0.0, 0.0]);
        assert!((got - 0.3).abs() < 1e-15, "{got}");
    }

    #[test]
    fn conjunctions_order_product_below_min() {
        let rule = rule_with_mu_at_zero(0, 0, -10.0, &[0.3, 0.9, 0.55]);
        let x = [0.0, 0.0, 0.0];
        assert!(firing_product(&rule, &x) <= firing_min(&rule, &x));
    }

    fn two_rule_base(tnorm: TNorm) -> RuleBase {
        RuleBase {
            version: RULEBASE_VERSION,
            p: 1,
            c: 2,
            tnorm,
            firing_threshold: 0.01,
            k_w: 5.0,
            rules: vec![
                FuzzyRule { id: 0, class: 0, q: -10.0, clauses: vec![FuzzyClause { center: 0.0, sigma: 1.0 }] },
                FuzzyRule { id: 1, class: 1, q: -10.0, clauses: vec![FuzzyClause { center: 10.0, sigma: 1.0 }] },
            ],
        }
    }

    #[test]
    fn classify_picks_strongest_rule() {
        let rb = two_rule_base(TNorm::Product);
        let got = classify(&rb, &[0.1]).unwrap();
        assert_eq!(got.prediction, Prediction::Class(0));
        assert_eq!(got.rule_id, 0);
        assert!(got.firing > 0.99);
        assert!(got.runner_up < 1e-30);

        let other = classify(&rb, &[9.5]).unwrap();
        assert_eq!(other.prediction, Prediction::Class(1));
    }

    #[test]
    fn weak_firing_becomes_outlier_but_keeps_diagnostics() {
        let rb = two_rule_base(TNorm::Product);
        let got = classify(&rb, &[5.0]).unwrap();
        assert_eq!(got.prediction, Prediction::Outlier);
        assert_eq!(got.rule_id, 0);
        assert!(got.firing < rb.firing_threshold);
    }

    #[test]
    fn exact_threshold_firing_is_not_an_outlier() {
        let mut rb = two_rule_base(TNorm::Min);
        rb.firing_threshold = gaussian_membership(5.0, &rb.rules[0].clauses[0]);
        let got = classify(&rb, &[5.0]).unwrap();
        assert_eq!(got.prediction, Prediction::Class(0));
    }

    #[test]
    fn firing_ties_go_to_the_lower_rule_id() {
        let mut rb = two_rule_base(TNorm::Product);
        rb.rules[1].clauses[0].center = 0.0; // identical geometry, different class
        let got = classify(&rb, &[0.3]).unwrap();
        assert_eq!(got.rule_id, 0);
        assert_eq!(got.prediction, Prediction::Class(0));
        assert_eq!(got.runner_up, got.firing);
    }

    #[test]
    fn batch_equals_sample_by_sample() {
        let rb = two_rule_base(TNorm::Softmin);
        let d = crate::dataset::Dataset::new(
            vec![vec![0.2], vec![9.8], vec![5.0]],
            vec![0, 1, 0],
            2,
        )
        .unwrap();
        let batch = classify_batch(&rb, &d).unwrap();
        for (got, s) in batch.iter().zip(d.samples()) {
            assert_eq!(*got, classify(&rb, &s.x).unwrap());
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let rb = two_rule_base(TNorm::Product);
        assert!(classify(&rb, &[1.0, 2.0]).is_err());
        let d = crate::dataset::Dataset::new(vec![vec![0.0, 1.0]], vec![0], 2).unwrap();
        assert!(classify_batch(&rb, &d).is_err());
    }
}
