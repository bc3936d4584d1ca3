use rayon::prelude::*;

use super::ar::{ar_fit, ar_last_coefficient, sieve_bootstrap_series_with, yule_walker_fit};
use super::percentile::percentile_interval;
use super::{DecisionRule, NonstationaryPolicy, SeriesSource, TestConfig, TestKind, TestReport};
use crate::error::{Error, Result};
use crate::estimate::fit_frontier_gls;
use crate::model::PanelDataset;
use crate::scalar::Scalar;
use crate::seed::{substream, TEMPORAL};

/// Tests whether every unit shares the autocorrelation coefficient.
///
/// Each unit's series (see [`SeriesSource`]) gets an AR(p) fit and `k`
/// sieve replicates of length `m`, each refitted for `rho_p`. The reference
/// value is the mean of the original per-unit estimates, and the verdict
/// rejects as soon as one unit's percentile interval leaves it out.
///
/// A unit whose least-squares fit is explosive is handled by
/// [`TestConfig::nonstationary`].
pub fn test_constant_temporal<S: Scalar>(panel: &PanelDataset<S>, config: &TestConfig) -> Result<TestReport<S>> {
    config.validate()?;
    let (n, t_len) = (panel.n_units(), panel.n_periods());
    if n < 2 {
        return Err(Error::TooFewUnits(n));
    }
    let p = config.ar_order_p;
    if 3 * p >= t_len {
        return Err(Error::Invalid(format!(
            "ar_order_p = {p} must be below T/3 (T = {t_len})"
        )));
    }
    let m = config.boot_length.unwrap_or(t_len);

    let series = match config.series_source {
        SeriesSource::FrontierResiduals => fit_frontier_gls(panel)?.residuals_v,
        SeriesSource::LogOutput => panel.log_output().to_owned(),
    };

    let per_unit: Vec<Result<(S, (S, S))>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = series.row(i).to_vec();
            unit_interval(&row, i, m, config).map_err(|e| e.in_unit(panel.unit_ids()[i].clone()))
        })
        .collect();

    let mut estimates = Vec::with_capacity(n);
    let mut intervals = Vec::with_capacity(n);
    for r in per_unit {
        let (est, iv) = r?;
        estimates.push(est);
        intervals.push(iv);
    }
    Ok(TestReport::assemble(
        TestKind::Temporal,
        panel.unit_ids().to_vec(),
        estimates,
        intervals,
        DecisionRule::AnyExcludes,
        config,
    ))
}

fn unit_interval<S: Scalar>(series: &[S], unit: usize, m: usize, config: &TestConfig) -> Result<(S, (S, S))> {
    let p = config.ar_order_p;
    let fit = ar_fit(series, p)?;
    let estimate = fit.last_coefficient();
    let fit = match config.nonstationary {
        NonstationaryPolicy::YuleWalker if !fit.is_stationary() => yule_walker_fit(series, p)?,
        _ => fit,
    };
    let mut boot = Vec::with_capacity(config.n_boot_k);
    for b in 0..config.n_boot_k {
        let mut rng = substream(config.seed, &[TEMPORAL, unit as u64, b as u64]);
        let replicate = sieve_bootstrap_series_with(&fit, m, &mut rng)?;
        boot.push(ar_last_coefficient(&replicate, p)?);
    }
    Ok((estimate, percentile_interval(&boot, config.alpha)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;
    use crate::simulate::simulate_panel;

    fn cfg(seed: u64) -> TestConfig {
        TestConfig {
            n_boot_k: 200,
            seed,
            ..TestConfig::default()
        }
    }

    #[test]
    fn report_shape_and_consistency() {
        let sim = simulate_panel(&Scenario::<f64>::new(8, 15, 3)).unwrap();
        let r = test_constant_temporal(&sim.panel, &cfg(1)).unwrap();
        assert_eq!(r.per_block_interval.len(), 8);
        assert_eq!(r.block_labels, sim.panel.unit_ids());
        assert!(r.per_block_interval.iter().all(|(lo, hi)| lo <= hi));
        assert!(r.n_failing <= 8);
        assert_eq!(r.recompute_reject(), r.reject);
        assert_eq!(r.reject, r.n_failing >= 1);
    }

    #[test]
    fn deterministic_in_seed() {
        let sim = simulate_panel(&Scenario::<f64>::new(6, 12, 5)).unwrap();
        let a = test_constant_temporal(&sim.panel, &cfg(7)).unwrap();
        let b = test_constant_temporal(&sim.panel, &cfg(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn order_too_large() {
        let sim = simulate_panel(&Scenario::<f64>::new(4, 12, 5)).unwrap();
        let c = TestConfig { ar_order_p: 4, ..cfg(0) };
        assert!(matches!(test_constant_temporal(&sim.panel, &c), Err(Error::Invalid(_))));
    }

    #[test]
    fn constant_unit_is_named() {
        let sim = simulate_panel(&Scenario::<f64>::new(4, 12, 5)).unwrap();
        let mut y = sim.panel.log_output().to_owned();
        y.row_mut(2).fill(1.5);
        let panel = sim.panel.with_log_output(y).unwrap();
        let c = TestConfig { series_source: SeriesSource::LogOutput, ..cfg(0) };
        match test_constant_temporal(&panel, &c) {
            Err(Error::InUnit { unit, source }) => {
                assert_eq!(unit, "3");
                assert!(matches!(*source, Error::ZeroVarianceSeries));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn explosive_unit_policy() {
        let sim = simulate_panel(&Scenario::<f64>::new(4, 12, 5)).unwrap();
        let mut y = sim.panel.log_output().to_owned();
        for t in 0..12 {
            y[[1, t]] = (t as f64 * 0.4).exp() + 0.01 * (t % 3) as f64;
        }
        let panel = sim.panel.with_log_output(y).unwrap();
        let lenient = TestConfig { series_source: SeriesSource::LogOutput, ..cfg(0) };
        let r = test_constant_temporal(&panel, &lenient).unwrap();
        assert!(r.per_block_estimate[1] > 1.0);
        let strict = TestConfig { nonstationary: NonstationaryPolicy::Error, ..lenient };
        match test_constant_temporal(&panel, &strict) {
            Err(Error::InUnit { unit, source }) => {
                assert_eq!(unit, "2");
                assert!(matches!(*source, Error::NonstationarySieve));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
