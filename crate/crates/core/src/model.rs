//! Panel data model, parameters, and the scalar transforms of the frontier.
//!
//! Output follows a Cobb-Douglas frontier in logs with an AR(1) disturbance
//! and a bounded inefficiency term:
//!
//! ```text
//! ln y_it = beta0 + sum_k beta_k ln x_kit + v_it - u_it
//! v_it    = rho v_i,t-1 + psi_it
//! u_it    = logistic(w_it gamma + z_it phi) + eps_it
//! ```
//!
//! Technical efficiency is `exp(-u)`, so a predicted inefficiency in `(0, 1)`
//! maps into `(e^-1, 1)`.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Balanced `N x T` panel. Outputs and inputs are stored in logs.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset<S> {
    log_output: Array2<S>,
    log_inputs: Array3<S>,
    spatial: Array3<S>,
    covariates: Array3<S>,
    unit_ids: Vec<String>,
    period_ids: Vec<String>,
}

impl<S: Scalar> PanelDataset<S> {
    /// Builds a panel after checking shapes and finiteness.
    ///
    /// `log_output` is `N x T`; `log_inputs`, `spatial` and `covariates` are
    /// `N x T x P`, `N x T x Q`, `N x T x R`. Requires `N >= 2`, `T >= 3`,
    /// `P >= 1` and `Q >= 1`.
    pub fn new(
        log_output: Array2<S>,
        log_inputs: Array3<S>,
        spatial: Array3<S>,
        covariates: Array3<S>,
        unit_ids: Vec<String>,
        period_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, t) = log_output.dim();
        if n < 2 {
            return Err(Error::TooFewUnits(n));
        }
        if t < 3 {
            return Err(Error::TooFewPeriods { got: t, need: 3 });
        }
        for (what, arr) in [
            ("log_inputs", &log_inputs),
            ("spatial", &spatial),
            ("covariates", &covariates),
        ] {
            let (an, at, _) = arr.dim();
            if an != n {
                return Err(Error::DimensionMismatch { what, expected: n, actual: an });
            }
            if at != t {
                return Err(Error::DimensionMismatch { what, expected: t, actual: at });
            }
        }
        if log_inputs.dim().2 == 0 {
            return Err(Error::Invalid("panel needs at least one input factor".into()));
        }
        if spatial.dim().2 == 0 {
            return Err(Error::Invalid("panel needs at least one spatial measure".into()));
        }
        if unit_ids.len() != n {
            return Err(Error::DimensionMismatch {
                what: "unit_ids",
                expected: n,
                actual: unit_ids.len(),
            });
        }
        if period_ids.len() != t {
            return Err(Error::DimensionMismatch {
                what: "period_ids",
                expected: t,
                actual: period_ids.len(),
            });
        }
        let finite = log_output.iter().all(|x| x.is_finite())
            && log_inputs.iter().all(|x| x.is_finite())
            && spatial.iter().all(|x| x.is_finite())
            && covariates.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::Invalid("panel contains non-finite values".into()));
        }
        Ok(Self {
            log_output,
            log_inputs,
            spatial,
            covariates,
            unit_ids,
            period_ids,
        })
    }

    /// Same inputs, replaced log output.
    pub fn with_log_output(&self, log_output: Array2<S>) -> Result<Self> {
        Self::new(
            log_output,
            self.log_inputs.clone(),
            self.spatial.clone(),
            self.covariates.clone(),
            self.unit_ids.clone(),
            self.period_ids.clone(),
        )
    }

    pub fn n_units(&self) -> usize {
        self.log_output.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.log_output.ncols()
    }

    pub fn n_inputs(&self) -> usize {
        self.log_inputs.dim().2
    }

    pub fn n_spatial(&self) -> usize {
        self.spatial.dim().2
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.dim().2
    }

    pub fn log_output(&self) -> ArrayView2<'_, S> {
        self.log_output.view()
    }

    pub fn log_inputs(&self) -> ArrayView3<'_, S> {
        self.log_inputs.view()
    }

    pub fn spatial(&self) -> ArrayView3<'_, S> {
        self.spatial.view()
    }

    pub fn covariates(&self) -> ArrayView3<'_, S> {
        self.covariates.view()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn period_ids(&self) -> &[String] {
        &self.period_ids
    }

    pub fn inputs_at(&self, unit: usize, period: usize) -> ArrayView1<'_, S> {
        self.log_inputs.index_axis(Axis(0), unit).index_axis_move(Axis(0), period)
    }

    pub fn spatial_at(&self, unit: usize, period: usize) -> ArrayView1<'_, S> {
        self.spatial.index_axis(Axis(0), unit).index_axis_move(Axis(0), period)
    }

    pub fn covariates_at(&self, unit: usize, period: usize) -> ArrayView1<'_, S> {
        self.covariates.index_axis(Axis(0), unit).index_axis_move(Axis(0), period)
    }
}

/// Generative parameters of the frontier model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ModelParams<S> {
    pub beta0: S,
    pub beta: Vec<S>,
    pub rho: S,
    pub gamma: Vec<S>,
    pub phi: Vec<S>,
    pub sigma_psi: S,
    pub sigma_eps: S,
}

impl<S: Scalar> Default for ModelParams<S> {
    /// Two inputs with small positive elasticities, one spatial measure and
    /// one covariate, moderate persistence.
    fn default() -> Self {
        Self {
            beta0: S::lit(0.5),
            beta: vec![S::lit(0.3), S::lit(0.2)],
            rho: S::lit(0.5),
            gamma: vec![S::one()],
            phi: vec![S::one()],
            sigma_psi: S::lit(0.1),
            sigma_eps: S::lit(0.05),
        }
    }
}

impl<S: Scalar> ModelParams<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < S::one()) {
            return Err(Error::Invalid(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if !(self.sigma_psi >= S::zero()) {
            return Err(Error::Invalid(format!(
                "sigma_psi must be nonnegative, got {}",
                self.sigma_psi
            )));
        }
        if !(self.sigma_eps >= S::zero()) {
            return Err(Error::Invalid(format!(
                "sigma_eps must be nonnegative, got {}",
                self.sigma_eps
            )));
        }
        if self.beta.is_empty() {
            return Err(Error::Invalid("beta needs at least one elasticity".into()));
        }
        if self.gamma.is_empty() {
            return Err(Error::Invalid("gamma needs at least one spatial coefficient".into()));
        }
        let all = [self.beta0, self.rho, self.sigma_psi, self.sigma_eps];
        let finite = all.iter().all(|x| x.is_finite())
            && self
                .beta
                .iter()
                .chain(&self.gamma)
                .chain(&self.phi)
                .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Invalid("parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Relative contribution of the spatial and covariate terms to the
/// inefficiency linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dominance {
    Equal,
    SpatialDominates,
    CovariateDominates,
}

impl Dominance {
    /// Variance shares `(spatial, covariate)` of the linear predictor.
    pub fn variance_shares(self) -> (f64, f64) {
        match self {
            Dominance::Equal => (0.5, 0.5),
            Dominance::SpatialDominates => (0.8, 0.2),
            Dominance::CovariateDominates => (0.2, 0.8),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Dominance::Equal => "equal",
            Dominance::SpatialDominates => "spatial",
            Dominance::CovariateDominates => "covariate",
        }
    }
}

impl std::str::FromStr for Dominance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equal" => Ok(Dominance::Equal),
            "spatial" | "spatialdominates" | "spatial-dominates" => Ok(Dominance::SpatialDominates),
            "covariate" | "covariatedominates" | "covariate-dominates" => {
                Ok(Dominance::CovariateDominates)
            }
            other => Err(Error::Invalid(format!("unknown dominance '{other}'"))),
        }
    }
}

/// One simulation setting: panel size, term dominance, and the alternative
/// (if any) planted in a fraction of units or periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Scenario<S> {
    pub n_units: usize,
    pub n_periods: usize,
    #[serde(default = "default_dominance")]
    pub dominance: Dominance,
    /// Share of units (temporal alternative) or periods (spatial
    /// alternative) carrying the shifted parameter. Zero encodes the null.
    #[serde(default)]
    pub contamination_fraction: f64,
    /// Contaminated units use `rho * (1 + r)`.
    #[serde(default)]
    pub temporal_shift_r: f64,
    /// Contaminated periods use `gamma * (1 + g)`.
    #[serde(default)]
    pub spatial_shift_g: f64,
    #[serde(default)]
    pub base_params: ModelParams<S>,
    #[serde(default)]
    pub seed: u64,
}

fn default_dominance() -> Dominance {
    Dominance::Equal
}

impl<S: Scalar> Scenario<S> {
    pub fn new(n_units: usize, n_periods: usize, seed: u64) -> Self {
        Self {
            n_units,
            n_periods,
            dominance: Dominance::Equal,
            contamination_fraction: 0.0,
            temporal_shift_r: 0.0,
            spatial_shift_g: 0.0,
            base_params: ModelParams::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_units < 2 {
            return Err(Error::TooFewUnits(self.n_units));
        }
        if self.n_periods < 3 {
            return Err(Error::TooFewPeriods { got: self.n_periods, need: 3 });
        }
        let f = self.contamination_fraction;
        if !(f == 0.0 || (0.05..=0.5).contains(&f)) {
            return Err(Error::Invalid(format!(
                "contamination_fraction must be 0 or in [0.05, 0.5], got {f}"
            )));
        }
        if !self.temporal_shift_r.is_finite() || !self.spatial_shift_g.is_finite() {
            return Err(Error::Invalid("shifts must be finite".into()));
        }
        self.base_params.validate()?;
        let rho = self.base_params.rho.as_f64();
        let shifted = self.contaminated_rho();
        if f > 0.0 && self.temporal_shift_r != 0.0 && !(shifted.abs() < 1.0) {
            return Err(Error::Invalid(format!(
                "contaminated rho = {rho} * (1 + {}) = {shifted} is outside (-1, 1)",
                self.temporal_shift_r
            )));
        }
        Ok(())
    }

    pub fn contaminated_rho(&self) -> f64 {
        self.base_params.rho.as_f64() * (1.0 + self.temporal_shift_r)
    }

    /// Number of units carrying the temporal alternative.
    pub fn n_contaminated_units(&self) -> usize {
        if self.temporal_shift_r == 0.0 {
            0
        } else {
            ceil_share(self.contamination_fraction, self.n_units)
        }
    }

    /// Number of periods carrying the spatial alternative.
    pub fn n_contaminated_periods(&self) -> usize {
        if self.spatial_shift_g == 0.0 {
            0
        } else {
            ceil_share(self.contamination_fraction, self.n_periods)
        }
    }

    /// Parameters with `gamma` and `phi` rescaled to the dominance variance
    /// shares. Directions (and zero vectors) are preserved.
    pub fn calibrated_params(&self) -> ModelParams<S> {
        let (sw, sz) = self.dominance.variance_shares();
        let mut p = self.base_params.clone();
        rescale(&mut p.gamma, sw.sqrt());
        rescale(&mut p.phi, sz.sqrt());
        p
    }
}

// ceil(fraction * count), tolerant of representation error in the product
pub(crate) fn ceil_share(fraction: f64, count: usize) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    let raw = fraction * count as f64;
    ((raw - 1e-9).ceil().max(1.0) as usize).min(count)
}

fn rescale<S: Scalar>(v: &mut [S], target_norm: f64) {
    let norm = v.iter().map(|&x| x * x).sum::<S>().sqrt();
    if norm > S::zero() {
        let f = S::lit(target_norm) / norm;
        for x in v.iter_mut() {
            *x = *x * f;
        }
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { what, expected, actual });
    }
    Ok(())
}

/// `beta0 + sum_k beta_k ln x_k`.
pub fn cobb_douglas_log<S: Scalar>(log_inputs_row: &[S], beta0: S, beta: &[S]) -> Result<S> {
    check_len("input factors (P)", beta.len(), log_inputs_row.len())?;
    Ok(beta0 + dot(log_inputs_row, beta))
}

/// `w gamma + z phi`.
pub fn linear_predictor<S: Scalar>(w_row: &[S], z_row: &[S], gamma: &[S], phi: &[S]) -> Result<S> {
    check_len("spatial measures (Q)", gamma.len(), w_row.len())?;
    check_len("covariates (R)", phi.len(), z_row.len())?;
    Ok(dot(w_row, gamma) + dot(z_row, phi))
}

pub fn logistic<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

pub fn logit<S: Scalar>(u: S) -> S {
    u.ln() - (-u).ln_1p()
}

/// Deterministic part of the inefficiency: `logistic(w gamma + z phi)`.
pub fn inefficiency_mean<S: Scalar>(w_row: &[S], z_row: &[S], gamma: &[S], phi: &[S]) -> Result<S> {
    linear_predictor(w_row, z_row, gamma, phi).map(logistic)
}

/// `exp(-u)` for a predicted inefficiency strictly inside `(0, 1)`.
pub fn technical_efficiency<S: Scalar>(u_pred: S) -> Result<S> {
    if !(u_pred > S::zero() && u_pred < S::one()) {
        return Err(Error::Domain {
            what: "predicted inefficiency (must lie in (0, 1))".into(),
            value: u_pred.as_f64(),
        });
    }
    Ok((-u_pred).exp())
}

/// Maps a technical efficiency back to the linear-predictor scale:
/// `ln(-ln te) - ln(1 + ln te)`, the inverse of `eta -> exp(-logistic(eta))`.
pub fn te_to_logit<S: Scalar>(te: S) -> Result<S> {
    let lower = (-S::one()).exp();
    if !(te > lower && te < S::one()) {
        return Err(Error::Domain {
            what: "technical efficiency (must lie in (e^-1, 1))".into(),
            value: te.as_f64(),
        });
    }
    let ln_te = te.ln();
    let u = -ln_te;
    let one_minus_u = S::one() + ln_te;
    if !(u > S::zero() && one_minus_u > S::zero()) {
        return Err(Error::Domain {
            what: "technical efficiency (must lie in (e^-1, 1))".into(),
            value: te.as_f64(),
        });
    }
    Ok(u.ln() - one_minus_u.ln())
}
