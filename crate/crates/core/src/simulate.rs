//! Synthetic panels drawn from the spatial-temporal frontier model.

use ndarray::{Array2, Array3};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{cobb_douglas_log, logistic, ModelParams, PanelDataset, Scenario};
use crate::scalar::Scalar;
use crate::seed::{self, substream};

/// Maximum redraws of `eps` per cell before giving up.
pub const MAX_INEFFICIENCY_DRAWS: usize = 1000;

/// A simulated panel together with the ground truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation<S> {
    pub panel: PanelDataset<S>,
    /// Parameters after dominance calibration (before contamination).
    pub params: ModelParams<S>,
    /// AR(1) coefficient used for each unit.
    pub unit_rho: Vec<S>,
    /// Spatial coefficient vector used in each period.
    pub period_gamma: Vec<Vec<S>>,
    pub contaminated_units: Vec<usize>,
    pub contaminated_periods: Vec<usize>,
    pub true_u: Array2<S>,
    pub true_v: Array2<S>,
}

impl<S: Scalar> Simulation<S> {
    /// `exp(-u)` of the generated inefficiencies.
    pub fn true_te(&self) -> Array2<S> {
        self.true_u.mapv(|u| (-u).exp())
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws a panel for `scenario`. Output depends only on the scenario
/// (including its seed).
///
/// Spatial measures are mean Euclidean distances from uniformly placed units
/// (one independent layout per measure), constant over time and standardized
/// across units. Covariates are i.i.d. standard normal, standardized over the
/// panel. Log inputs are i.i.d. standard normal.
pub fn simulate_panel<S: Scalar>(scenario: &Scenario<S>) -> Result<Simulation<S>> {
    scenario.validate()?;
    let n = scenario.n_units;
    let t_len = scenario.n_periods;
    let params = scenario.calibrated_params();
    let p = params.beta.len();
    let q = params.gamma.len();
    let r = params.phi.len();
    let master = scenario.seed;

    let spatial_measures: Vec<Vec<f64>> = (0..q)
        .map(|k| {
            let mut rng = substream(master, &[seed::LAYOUT, k as u64]);
            let coords: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
            let raw: Vec<f64> = coords
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let total: f64 = coords
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, b)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
                        .sum();
                    total / (n - 1) as f64
                })
                .collect();
            standardize(raw)
        })
        .collect();

    let mut covariates = Array3::<S>::zeros((n, t_len, r));
    for k in 0..r {
        let mut rng = substream(master, &[seed::COVARIATE, k as u64]);
        let draws = standardize((0..n * t_len).map(|_| normal(&mut rng)).collect());
        for i in 0..n {
            for t in 0..t_len {
                covariates[[i, t, k]] = S::lit(draws[i * t_len + t]);
            }
        }
    }

    let mut contamination_rng = substream(master, &[seed::CONTAMINATION]);
    let mut contaminated_units: Vec<usize> = sample(&mut contamination_rng, n, scenario.n_contaminated_units()).into_vec();
    contaminated_units.sort_unstable();
    let mut contaminated_periods: Vec<usize> =
        sample(&mut contamination_rng, t_len, scenario.n_contaminated_periods()).into_vec();
    contaminated_periods.sort_unstable();

    let shifted_rho = S::lit(scenario.contaminated_rho());
    let unit_rho: Vec<S> = (0..n)
        .map(|i| {
            if contaminated_units.binary_search(&i).is_ok() {
                shifted_rho
            } else {
                params.rho
            }
        })
        .collect();
    let gamma_factor = S::lit(1.0 + scenario.spatial_shift_g);
    let period_gamma: Vec<Vec<S>> = (0..t_len)
        .map(|t| {
            if contaminated_periods.binary_search(&t).is_ok() {
                params.gamma.iter().map(|&g| g * gamma_factor).collect()
            } else {
                params.gamma.clone()
            }
        })
        .collect();

    let mut spatial = Array3::<S>::zeros((n, t_len, q));
    for i in 0..n {
        for t in 0..t_len {
            for k in 0..q {
                spatial[[i, t, k]] = S::lit(spatial_measures[k][i]);
            }
        }
    }

    let mut log_inputs = Array3::<S>::zeros((n, t_len, p));
    let mut log_output = Array2::<S>::zeros((n, t_len));
    let mut true_u = Array2::<S>::zeros((n, t_len));
    let mut true_v = Array2::<S>::zeros((n, t_len));
    let sigma_psi = params.sigma_psi.as_f64();
    let sigma_eps = params.sigma_eps.as_f64();

    for i in 0..n {
        let mut rng = substream(master, &[seed::UNIT, i as u64]);
        let rho_i = unit_rho[i].as_f64();
        let stationary_sd = sigma_psi / (1.0 - rho_i * rho_i).sqrt();
        let mut v = stationary_sd * normal(&mut rng);
        for t in 0..t_len {
            if t > 0 {
                v = rho_i * v + sigma_psi * normal(&mut rng);
            }
            let lx: Vec<S> = (0..p).map(|_| S::lit(normal(&mut rng))).collect();
            for (k, &x) in lx.iter().enumerate() {
                log_inputs[[i, t, k]] = x;
            }
            let w: Vec<S> = (0..q).map(|k| spatial[[i, t, k]]).collect();
            let z: Vec<S> = (0..r).map(|k| covariates[[i, t, k]]).collect();
            let eta = crate::model::linear_predictor(&w, &z, &period_gamma[t], &params.phi)?;
            let mean_u = logistic(eta).as_f64();
            let u = draw_inefficiency(&mut rng, mean_u, sigma_eps).ok_or(Error::InefficiencyRejection {
                unit: i,
                period: t,
                draws: MAX_INEFFICIENCY_DRAWS,
            })?;
            let frontier = cobb_douglas_log(&lx, params.beta0, &params.beta)?;
            let v_s = S::lit(v);
            let u_s = S::lit(u);
            true_v[[i, t]] = v_s;
            true_u[[i, t]] = u_s;
            log_output[[i, t]] = frontier + v_s - u_s;
        }
    }

    let panel = PanelDataset::new(
        log_output,
        log_inputs,
        spatial,
        covariates,
        (1..=n).map(|i| i.to_string()).collect(),
        (1..=t_len).map(|t| t.to_string()).collect(),
    )?;
    Ok(Simulation {
        panel,
        params,
        unit_rho,
        period_gamma,
        contaminated_units,
        contaminated_periods,
        true_u,
        true_v,
    })
}

fn draw_inefficiency<R: Rng>(rng: &mut R, mean_u: f64, sigma_eps: f64) -> Option<f64> {
    for _ in 0..MAX_INEFFICIENCY_DRAWS {
        let u = mean_u + sigma_eps * normal(rng);
        if u > 0.0 && u < 1.0 {
            return Some(u);
        }
    }
    None
}

fn standardize(mut xs: Vec<f64>) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in xs.iter_mut() {
        *x -= mean;
        if sd > 0.0 {
            *x /= sd;
        }
    }
    xs
}
