//! Bootstrap tests of the two homogeneity assumptions of the model.
//!
//! * [`test_constant_temporal`]: every unit shares the AR coefficient. Each
//!   unit's series is refitted on AR-sieve bootstrap replicates, and the test
//!   rejects when any unit's percentile interval misses the cross-unit mean
//!   estimate.
//! * [`test_constant_spatial`]: every period shares the spatial effect on
//!   technical efficiency. Each period's cross-section is case-resampled, and
//!   the test rejects when more than `alpha * T` period intervals miss the
//!   cross-period mean estimate.

mod ar;
mod percentile;
mod spatial;
mod temporal;

pub use ar::{
    ar_fit, ar_last_coefficient, sieve_bootstrap_series, sieve_bootstrap_series_with, yule_walker_fit, ArFit,
    SIEVE_BURN_IN,
};
pub use percentile::percentile_interval;
pub use spatial::{fit_spatial_slice, test_constant_spatial, test_spatial_on_panel, TeSource, MAX_RESAMPLE_RETRIES};
pub use temporal::test_constant_temporal;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which per-unit series the temporal test works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesSource {
    /// Structural residuals `ln y - ln f(x; beta_hat)` of the frontier fit.
    #[default]
    FrontierResiduals,
    /// The log output itself.
    LogOutput,
}

impl std::str::FromStr for SeriesSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frontier-residuals" | "residuals" => Ok(SeriesSource::FrontierResiduals),
            "log-output" | "output" => Ok(SeriesSource::LogOutput),
            other => Err(Error::Invalid(format!(
                "unknown series source '{other}' (expected frontier-residuals or log-output)"
            ))),
        }
    }
}

/// What the temporal test does when a unit's least-squares AR fit is
/// explosive and cannot drive the sieve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NonstationaryPolicy {
    /// Generate that unit's replicates from its Yule-Walker fit instead.
    #[default]
    YuleWalker,
    /// Abort the test with a nonstationary-sieve error naming the unit.
    Error,
}

impl std::str::FromStr for NonstationaryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yule-walker" => Ok(NonstationaryPolicy::YuleWalker),
            "error" => Ok(NonstationaryPolicy::Error),
            other => Err(Error::Invalid(format!(
                "unknown nonstationary policy '{other}' (expected yule-walker or error)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    #[serde(default = "default_order")]
    pub ar_order_p: usize,
    #[serde(default = "default_k")]
    pub n_boot_k: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub series_source: SeriesSource,
    #[serde(default)]
    pub seed: u64,
    /// Length `m` of each sieve replicate; `None` uses the panel length.
    #[serde(default)]
    pub boot_length: Option<usize>,
    #[serde(default)]
    pub nonstationary: NonstationaryPolicy,
}

fn default_order() -> usize {
    1
}
fn default_k() -> usize {
    500
}
fn default_alpha() -> f64 {
    0.05
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            ar_order_p: 1,
            n_boot_k: 500,
            alpha: 0.05,
            series_source: SeriesSource::FrontierResiduals,
            seed: 0,
            boot_length: None,
            nonstationary: NonstationaryPolicy::YuleWalker,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ar_order_p == 0 {
            return Err(Error::Invalid("ar_order_p must be positive".into()));
        }
        if self.n_boot_k < 100 {
            return Err(Error::Invalid(format!(
                "n_boot_k must be at least 100, got {}",
                self.n_boot_k
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Invalid(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        if self.alpha * (self.n_boot_k as f64) < 5.0 - 1e-9 {
            return Err(Error::Invalid(format!(
                "alpha * n_boot_k must be at least 5 (alpha = {}, k = {})",
                self.alpha, self.n_boot_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Temporal,
    Spatial,
}

impl TestKind {
    pub fn label(self) -> &'static str {
        match self {
            TestKind::Temporal => "temporal",
            TestKind::Spatial => "spatial",
        }
    }
}

/// How the count of intervals missing the reference turns into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum DecisionRule {
    /// Reject when at least one interval misses the reference.
    AnyExcludes,
    /// Reject when strictly more than `alpha * blocks` intervals miss it.
    MoreThanAlphaShare { alpha: f64 },
}

impl DecisionRule {
    pub fn rejects(&self, n_failing: usize, n_blocks: usize) -> bool {
        match *self {
            DecisionRule::AnyExcludes => n_failing >= 1,
            DecisionRule::MoreThanAlphaShare { alpha } => n_failing as f64 > alpha * n_blocks as f64,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            DecisionRule::AnyExcludes => {
                "reject H0 if at least one interval fails to contain the reference value".into()
            }
            DecisionRule::MoreThanAlphaShare { alpha } => format!(
                "reject H0 if more than {}% of the intervals fail to contain the reference value",
                alpha * 100.0
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TestReport<S> {
    pub kind: TestKind,
    /// Unit labels (temporal) or period labels (spatial).
    pub block_labels: Vec<String>,
    /// Per-unit `rho_hat_p` or per-period `gamma_hat_t`.
    pub per_block_estimate: Vec<S>,
    pub per_block_interval: Vec<(S, S)>,
    pub reference_value: S,
    pub n_failing: usize,
    pub reject: bool,
    pub rule: DecisionRule,
    pub decision_rule: String,
    pub alpha: f64,
    pub n_boot_k: usize,
}

impl<S: Scalar> TestReport<S> {
    pub(crate) fn assemble(
        kind: TestKind,
        block_labels: Vec<String>,
        per_block_estimate: Vec<S>,
        per_block_interval: Vec<(S, S)>,
        rule: DecisionRule,
        config: &TestConfig,
    ) -> Self {
        let reference_value = crate::scalar::mean(&per_block_estimate);
        let n_failing = count_failing(&per_block_interval, reference_value);
        let reject = rule.rejects(n_failing, per_block_interval.len());
        Self {
            kind,
            block_labels,
            per_block_estimate,
            per_block_interval,
            reference_value,
            n_failing,
            reject,
            rule,
            decision_rule: rule.describe(),
            alpha: config.alpha,
            n_boot_k: config.n_boot_k,
        }
    }

    /// Verdict recomputed from the intervals and the reference value alone.
    pub fn recompute_reject(&self) -> bool {
        let failing = count_failing(&self.per_block_interval, self.reference_value);
        self.rule.rejects(failing, self.per_block_interval.len())
    }
}

fn count_failing<S: Scalar>(intervals: &[(S, S)], reference: S) -> usize {
    intervals
        .iter()
        .filter(|(lo, hi)| !(*lo <= reference && reference <= *hi))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TestConfig::default().validate().is_ok());
        let bad_k = TestConfig { n_boot_k: 99, ..TestConfig::default() };
        assert!(bad_k.validate().is_err());
        let bad_alpha = TestConfig { alpha: 0.5, ..TestConfig::default() };
        assert!(bad_alpha.validate().is_err());
        let thin = TestConfig { n_boot_k: 100, alpha: 0.04, ..TestConfig::default() };
        assert!(thin.validate().is_err());
        let ok = TestConfig { n_boot_k: 100, alpha: 0.05, ..TestConfig::default() };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn decision_rules_differ() {
        let any = DecisionRule::AnyExcludes;
        let share = DecisionRule::MoreThanAlphaShare { alpha: 0.05 };
        assert!(any.rejects(1, 50));
        assert!(!any.rejects(0, 50));
        // 0.05 * 50 = 2.5
        assert!(!share.rejects(2, 50));
        assert!(share.rejects(3, 50));
        // 0.05 * 12 = 0.6
        assert!(share.rejects(1, 12));
        // 0.05 * 20 = 1: exactly one is not "more than"
        assert!(!share.rejects(1, 20));
    }

    #[test]
    fn report_verdict_recomputable() {
        let cfg = TestConfig::default();
        let r = TestReport::assemble(
            TestKind::Temporal,
            vec!["a".into(), "b".into()],
            vec![0.1, 0.3],
            vec![(0.0, 0.15), (0.25, 0.4)],
            DecisionRule::AnyExcludes,
            &cfg,
        );
        assert!((r.reference_value - 0.2f64).abs() < 1e-15);
        assert_eq!(r.n_failing, 2);
        assert!(r.reject);
        assert_eq!(r.recompute_reject(), r.reject);
    }
}
