//! Fuzzy rulebase construction and persistence.
//!
//! Each prototype becomes one rule: "if every feature is near this center,
//! the sample belongs to this class". Nearness is a Gaussian membership
//! `exp(-(x - center)^2 / sigma^2)` per feature. Spreads are seeded from the
//! dispersion of the samples each prototype wins, scaled by `k_w`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::prototype::{nearest_assignments, LabeledPrototype};

pub const RULEBASE_VERSION: u32 = 1;
/// Soft-minimum exponent assigned to freshly generated rules.
pub const DEFAULT_Q: f64 = -10.0;
/// Firing strength below which a sample is declared an outlier.
pub const DEFAULT_FIRING_THRESHOLD: f64 = 0.01;

/// Conjunction operator combining per-feature memberships into a firing
/// strength.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TNorm {
    #[default]
    Product,
    Softmin,
    Min,
}

impl fmt::Display for TNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TNorm::Product => "product",
            TNorm::Softmin => "softmin",
            TNorm::Min => "min",
        })
    }
}

impl FromStr for TNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(TNorm::Product),
            "softmin" => Ok(TNorm::Softmin),
            "min" => Ok(TNorm::Min),
            other => Err(Error::invalid(format!(
                "unknown t-norm '{other}' (expected product, softmin, or min)"
            ))),
        }
    }
}

/// One antecedent: a Gaussian membership on a single feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzyClause {
    pub center: f64,
    pub sigma: f64,
}

/// A rule with one clause per feature and a consequent class. `q` is the
/// rule's soft-minimum exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRule {
    pub id: usize,
    pub class: usize,
    pub q: f64,
    pub clauses: Vec<FuzzyClause>,
}

/// A complete classifier: rules plus the inference settings they were built
/// for. Serializes to a versioned JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleBase {
    pub version: u32,
    /// Feature dimensionality.
    pub p: usize,
    /// Number of classes.
    pub c: usize,
    pub tnorm: TNorm,
    pub firing_threshold: f64,
    /// Spread scale the rulebase was generated with.
    pub k_w: f64,
    pub rules: Vec<FuzzyRule>,
}

impl RuleBase {
    pub fn validate(&self) -> Result<()> {
        if self.version != RULEBASE_VERSION {
            return Err(Error::invalid(format!(
                "unsupported rulebase version {} (this build reads version {RULEBASE_VERSION})",
                self.version
            )));
        }
        if self.p == 0 || self.c == 0 {
            return Err(Error::invalid("rulebase must have positive p and c"));
        }
        if self.rules.is_empty() {
            return Err(Error::invalid("rulebase has no rules"));
        }
        if !(self.firing_threshold >= 0.0 && self.firing_threshold < 1.0) {
            return Err(Error::invalid(format!(
                "firing threshold {} outside [0, 1)",
                self.firing_threshold
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &self.rules {
            if !seen.insert(r.id) {
                return Err(Error::invalid(format!("rule id {} appears twice", r.id)));
            }
            if r.class >= self.c {
                return Err(Error::invalid(format!(
                    "rule {}: class {} out of range for {} classes",
                    r.id, r.class, self.c
                )));
            }
            if r.clauses.len() != self.p {
                return Err(Error::invalid(format!(
                    "rule {}: {} clauses for {} features",
                    r.id,
                    r.clauses.len(),
                    self.p
                )));
            }
            if !r.q.is_finite() || r.q == 0.0 {
                return Err(Error::invalid(format!(
                    "rule {}: exponent q must be finite and non-zero, got {}",
                    r.id, r.q
                )));
            }
            for (j, cl) in r.clauses.iter().enumerate() {
                if !cl.center.is_finite() {
                    return Err(Error::invalid(format!(
                        "rule {}: clause {j} has non-finite center",
                        r.id
                    )));
                }
                if !(cl.sigma > 0.0) || !cl.sigma.is_finite() {
                    return Err(Error::invalid(format!(
                        "rule {}: clause {j} has non-positive sigma {}",
                        r.id, cl.sigma
                    )));
                }
            }
        }
        for k in 0..self.c {
            if !self.rules.iter().any(|r| r.class == k) {
                return Err(Error::invalid(format!("class {k} has no rules")));
            }
        }
        Ok(())
    }

    /// Sets every rule's soft-minimum exponent.
    pub fn set_uniform_q(&mut self, q: f64) -> Result<()> {
        if !q.is_finite() || q == 0.0 {
            return Err(Error::invalid(format!("q must be finite and non-zero, got {q}")));
        }
        for r in &mut self.rules {
            r.q = q;
        }
        Ok(())
    }
}

/// Membership of `x` in a Gaussian clause.
pub fn gaussian_membership(x: f64, clause: &FuzzyClause) -> f64 {
    let d = x - clause.center;
    (-(d * d) / (clause.sigma * clause.sigma)).exp()
}

/// How the per-feature spread is derived from a prototype's cluster.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SigmaFormula {
    /// `k_w * sqrt(sum((x_j - v_j)^2)) / n`: the cluster's summed deviation,
    /// root-scaled and divided by the cluster size.
    #[default]
    Scaled,
    /// `k_w * sqrt(sum((x_j - v_j)^2) / n)`: the plain per-feature RMS
    /// deviation.
    Rms,
}

/// Settings for turning prototypes into rules.
#[derive(Clone, Debug)]
pub struct RuleGenConfig {
    /// Spread scale applied to every derived sigma.
    pub k_w: f64,
    /// Sigma lower bound as a fraction of each feature's data range.
    pub sigma_floor_factor: f64,
    pub sigma_formula: SigmaFormula,
}

impl Default for RuleGenConfig {
    fn default() -> Self {
        RuleGenConfig { k_w: 5.0, sigma_floor_factor: 1e-3, sigma_formula: SigmaFormula::Scaled }
    }
}

impl RuleGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_w > 0.0) {
            return Err(Error::invalid(format!("k_w {} must be positive", self.k_w)));
        }
        if !(self.sigma_floor_factor > 0.0) {
            return Err(Error::invalid(format!(
                "sigma floor factor {} must be positive",
                self.sigma_floor_factor
            )));
        }
        Ok(())
    }
}

/// Per-feature sigma lower bounds: `factor` times the feature's range, or
/// `factor` alone for constant features.
pub fn sigma_floors(data: &Dataset, factor: f64) -> Result<Vec<f64>> {
    Ok(data
        .feature_ranges()?
        .into_iter()
        .map(|(lo, hi)| if hi > lo { factor * (hi - lo) } else { factor })
        .collect())
}

/// Derives per-prototype, per-feature spreads from the samples each
/// prototype wins, clamped from below by the sigma floors.
pub fn init_sigmas(
    prototypes: &[LabeledPrototype],
    data: &Dataset,
    cfg: &RuleGenConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let floors = sigma_floors(data, cfg.sigma_floor_factor)?;
    let centers: Vec<Vec<f64>> = prototypes.iter().map(|p| p.center.clone()).collect();
    let assign = nearest_assignments(&centers, data);

    let mut out = Vec::with_capacity(prototypes.len());
    for (i, proto) in prototypes.iter().enumerate() {
        let mut sq = vec![0.0f64; data.p()];
        let mut n = 0usize;
        for (&a, s) in assign.iter().zip(data.samples()) {
            if a == i {
                n += 1;
                for (acc, (&xv, &vv)) in sq.iter_mut().zip(s.x.iter().zip(&proto.center)) {
                    *acc += (xv - vv) * (xv - vv);
                }
            }
        }
        let sigmas = sq
            .iter()
            .zip(&floors)
            .map(|(&s2, &floor)| {
                let raw = if n == 0 {
                    0.0
                } else {
                    match cfg.sigma_formula {
                        SigmaFormula::Scaled => cfg.k_w * s2.sqrt() / n as f64,
                        SigmaFormula::Rms => cfg.k_w * (s2 / n as f64).sqrt(),
                    }
                };
                raw.max(floor)
            })
            .collect();
        out.push(sigmas);
    }
    Ok(out)
}

/// Builds one rule per prototype. Rules keep the prototype order, get
/// sequential ids, and start with the default exponent and product t-norm.
pub fn rules_from_prototypes(
    prototypes: &[LabeledPrototype],
    data: &Dataset,
    cfg: &RuleGenConfig,
) -> Result<RuleBase> {
    if prototypes.is_empty() {
        return Err(Error::invalid("cannot build a rulebase from zero prototypes"));
    }
    let sigmas = init_sigmas(prototypes, data, cfg)?;
    let rules = prototypes
        .iter()
        .zip(sigmas)
        .enumerate()
        .map(|(id, (proto, sig))| FuzzyRule {
            id,
            class: proto.class,
            q: DEFAULT_Q,
            clauses: proto
                .center
                .iter()
                .zip(sig)
                .map(|(&center, sigma)| FuzzyClause { center, sigma })
                .collect(),
        })
        .collect();
    let rb = RuleBase {
        version: RULEBASE_VERSION,
        p: data.p(),
        c: data.c(),
        tnorm: TNorm::Product,
        firing_threshold: DEFAULT_FIRING_THRESHOLD,
        k_w: cfg.k_w,
        rules,
    };
    rb.validate()?;
    Ok(rb)
}

/// Writes the rulebase as pretty-printed JSON. Numbers round-trip exactly.
pub fn save_rulebase(rb: &RuleBase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    rb.validate()?;
    let mut text = serde_json::to_string_pretty(rb)
        .map_err(|e| Error::invalid(format!("cannot serialize rulebase: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads and validates a rulebase written by [`save_rulebase`].
pub fn load_rulebase(path: impl AsRef<Path>) -> Result<RuleBase> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rb: RuleBase = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    rb.validate()?;
    Ok(rb)
}
