use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayView3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::percentile::percentile_interval;
use super::{DecisionRule, TestConfig, TestKind, TestReport};
use crate::error::{Error, Result};
use crate::estimate::{estimate_model, EfficiencyOptions};
use crate::linalg::{lstsq, lstsq_indices};
use crate::model::{te_to_logit, PanelDataset};
use crate::scalar::Scalar;
use crate::seed::{substream, SPATIAL};

/// Redraws allowed for a rank-deficient bootstrap resample.
pub const MAX_RESAMPLE_RETRIES: usize = 100;

/// Which efficiency matrix the spatial test reads from an estimated model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TeSource {
    /// `exp(-u*)` from the clamped step-2 inefficiency observations.
    #[default]
    Observed,
    /// `exp(-logistic(w gamma_hat + z phi_hat))`. Every period shares
    /// `gamma_hat` here, so per-period differences only come through `w`.
    Fitted,
}

impl std::str::FromStr for TeSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observed" => Ok(TeSource::Observed),
            "fitted" => Ok(TeSource::Fitted),
            other => Err(Error::Invalid(format!(
                "unknown TE source '{other}' (expected observed or fitted)"
            ))),
        }
    }
}

fn slice_logits<S: Scalar>(te_row: ArrayView1<S>) -> Result<Array1<S>> {
    te_row
        .iter()
        .enumerate()
        .map(|(i, &te)| {
            te_to_logit(te).map_err(|_| Error::Domain {
                what: format!("technical efficiency of unit index {i}"),
                value: te.as_f64(),
            })
        })
        .collect()
}

fn w_names(q: usize) -> Vec<String> {
    (1..=q).map(|j| format!("w{j}")).collect()
}

/// Least-squares `gamma_t` of one period: the logit of `-ln TE` regressed on
/// the spatial measures without an intercept.
pub fn fit_spatial_slice<S: Scalar>(te_row: ArrayView1<S>, w_slice: ArrayView2<S>) -> Result<Vec<S>> {
    if te_row.len() != w_slice.nrows() {
        return Err(Error::DimensionMismatch {
            what: "spatial slice rows",
            expected: w_slice.nrows(),
            actual: te_row.len(),
        });
    }
    let y = slice_logits(te_row)?;
    lstsq(w_slice, y.view(), &w_names(w_slice.ncols()))
}

/// Tests whether every period shares the spatial effect on efficiency.
///
/// `te` is N x T and `spatial` N x T x Q. With Q > 1 the first spatial
/// component is the tested parameter. Each period's N pairs are
/// case-resampled `k` times; the verdict rejects when strictly more than
/// `alpha * T` period intervals miss the mean of the per-period estimates.
pub fn test_constant_spatial<S: Scalar>(
    te: ArrayView2<S>,
    spatial: ArrayView3<S>,
    config: &TestConfig,
) -> Result<TestReport<S>> {
    config.validate()?;
    let (n, t_len, q) = spatial.dim();
    if te.dim() != (n, t_len) {
        return Err(Error::DimensionMismatch {
            what: "technical efficiency matrix",
            expected: n * t_len,
            actual: te.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewUnits(n));
    }
    if t_len < 2 {
        return Err(Error::TooFewPeriods { got: t_len, need: 2 });
    }
    if q == 0 {
        return Err(Error::Invalid("at least one spatial measure required".into()));
    }

    let per_period: Vec<Result<(S, (S, S))>> = (0..t_len)
        .into_par_iter()
        .map(|t| {
            period_interval(te.column(t), spatial.slice(s![.., t, ..]), t, config)
                .map_err(|e| e.in_unit(format!("period {}", t + 1)))
        })
        .collect();

    let mut estimates = Vec::with_capacity(t_len);
    let mut intervals = Vec::with_capacity(t_len);
    for r in per_period {
        let (est, iv) = r?;
        estimates.push(est);
        intervals.push(iv);
    }
    Ok(TestReport::assemble(
        TestKind::Spatial,
        (1..=t_len).map(|t| t.to_string()).collect(),
        estimates,
        intervals,
        DecisionRule::MoreThanAlphaShare { alpha: config.alpha },
        config,
    ))
}

fn period_interval<S: Scalar>(
    te_row: ArrayView1<S>,
    w: ArrayView2<S>,
    period: usize,
    config: &TestConfig,
) -> Result<(S, (S, S))> {
    let y = slice_logits(te_row)?;
    let estimate = lstsq(w, y.view(), &w_names(w.ncols()))?[0];
    let n = w.nrows();
    let mut xb = Array2::<S>::zeros(w.raw_dim());
    let mut yb = Array1::<S>::zeros(n);
    let mut boot = Vec::with_capacity(config.n_boot_k);
    for b in 0..config.n_boot_k {
        let mut rng = substream(config.seed, &[SPATIAL, period as u64, b as u64]);
        let mut coef = None;
        for _ in 0..=MAX_RESAMPLE_RETRIES {
            for r in 0..n {
                let pick = rng.random_range(0..n);
                xb.row_mut(r).assign(&w.row(pick));
                yb[r] = y[pick];
            }
            if let Ok(c) = lstsq_indices(xb.view(), yb.view()) {
                coef = Some(c[0]);
                break;
            }
        }
        match coef {
            Some(c) => boot.push(c),
            None => {
                return Err(Error::ResampleRankDeficient {
                    period: (period + 1).to_string(),
                    retries: MAX_RESAMPLE_RETRIES,
                })
            }
        }
    }
    Ok((estimate, percentile_interval(&boot, config.alpha)?))
}

/// Estimates the model on `panel` and runs the spatial test on the chosen
/// efficiency matrix, labelling blocks with the panel's period ids.
pub fn test_spatial_on_panel<S: Scalar>(
    panel: &PanelDataset<S>,
    config: &TestConfig,
    te_source: TeSource,
    options: EfficiencyOptions,
) -> Result<TestReport<S>> {
    config.validate()?;
    let est = estimate_model(panel, options)?;
    let te = match te_source {
        TeSource::Observed => est.observed_te,
        TeSource::Fitted => est.te,
    };
    let mut report = test_constant_spatial(te.view(), panel.spatial(), config)?;
    report.block_labels = panel.period_ids().to_vec();
    Ok(report)
}
