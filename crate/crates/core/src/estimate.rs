//! Three-step backfitting estimator.
//!
//! 1. The frontier and the AR(1) disturbance are fitted jointly by iterated
//!    feasible GLS (Cochrane-Orcutt iterations with the Prais-Winsten first
//!    row), ignoring the inefficiency term. The residual
//!    `u_hat = ln y - ln f(x; beta_hat) - rho_hat e_{t-1}` carries the
//!    inefficiency signal.
//! 2. The logistic inefficiency equation is linearized with the logit and
//!    fitted by least squares on the spatial measures and covariates.
//! 3. Technical efficiency is `exp(-logistic(w gamma_hat + z phi_hat))`.
//!
//! The procedure is run once; there is no outer backfitting loop.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::model::{logistic, logit, technical_efficiency, PanelDataset};
use crate::scalar::{variance, Scalar};

pub const GLS_TOL: f64 = 1e-8;
pub const GLS_MAX_ITER: usize = 50;
/// Residual variance below which the autocorrelation is set to zero.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;
/// Inefficiency observations are clamped into `[CLAMP_DELTA, 1 - CLAMP_DELTA]`.
pub const CLAMP_DELTA: f64 = 1e-6;
/// Clamped share at or above which a result is flagged.
pub const CLAMP_FLAG_SHARE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct FrontierFit<S> {
    pub beta0_hat: S,
    pub beta_hat: Vec<S>,
    pub rho_hat: S,
    /// Step-1 residuals `u_hat`.
    #[serde(skip)]
    pub residuals_u: Array2<S>,
    /// Structural residuals `ln y - ln f(x; beta_hat)`, the fitted `v - u`.
    #[serde(skip)]
    pub residuals_v: Array2<S>,
    /// `e_{i,t-1}` used in `u_hat`; zero in the first period.
    #[serde(skip)]
    pub lagged_innovations: Array2<S>,
    pub iterations: usize,
    pub converged: bool,
}

/// How the level of the inefficiency observations is fixed in step 2.
///
/// The frontier intercept absorbs the mean inefficiency, so `-u_hat` is
/// centred near zero rather than near `E[u]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LevelRule {
    /// `u* = -u_hat` as is.
    Negate,
    /// `u* = c - u_hat` with `c` minimizing the squared error of the fitted
    /// logistic mean on the inefficiency scale. The logistic has no
    /// intercept, which identifies `c`.
    #[default]
    Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyOptions {
    #[serde(default)]
    pub level: LevelRule,
    /// Add an intercept to the efficiency regression.
    #[serde(default)]
    pub intercept: bool,
}

impl Default for EfficiencyOptions {
    fn default() -> Self {
        Self {
            level: LevelRule::Profile,
            intercept: false,
        }
    }
}

impl EfficiencyOptions {
    pub fn literal() -> Self {
        Self {
            level: LevelRule::Negate,
            intercept: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyFit<S> {
    pub gamma_hat: Vec<S>,
    pub phi_hat: Vec<S>,
    pub intercept_hat: Option<S>,
    /// Level `c` in `u* = c - u_hat`.
    pub level: S,
    pub clamp_count: usize,
    /// Clamped inefficiency observations `u*`.
    pub observed_u: Array2<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct EstimationResult<S> {
    pub frontier: FrontierFit<S>,
    pub gamma_hat: Vec<S>,
    pub phi_hat: Vec<S>,
    pub efficiency_intercept: Option<S>,
    pub inefficiency_level: S,
    pub level_rule: LevelRule,
    /// Fitted technical efficiency `exp(-logistic(w gamma_hat + z phi_hat))`.
    #[serde(skip)]
    pub te: Array2<S>,
    /// Observation-level efficiency `exp(-u*)` from the clamped step-2
    /// inefficiency observations.
    #[serde(skip)]
    pub observed_te: Array2<S>,
    pub clamp_count: usize,
    pub clamp_flagged: bool,
}

fn frontier_design<S: Scalar>(panel: &PanelDataset<S>) -> (Array2<S>, Array1<S>, Vec<String>) {
    let (n, t_len, p) = panel.log_inputs().dim();
    let mut x = Array2::<S>::zeros((n * t_len, p + 1));
    let mut y = Array1::<S>::zeros(n * t_len);
    for i in 0..n {
        for t in 0..t_len {
            let row = i * t_len + t;
            x[[row, 0]] = S::one();
            for k in 0..p {
                x[[row, k + 1]] = panel.log_inputs()[[i, t, k]];
            }
            y[row] = panel.log_output()[[i, t]];
        }
    }
    let mut names = vec!["const".to_string()];
    names.extend((1..=p).map(|k| format!("x{k}")));
    (x, y, names)
}

/// Frontier coefficients `(beta0, beta)` by least squares on the
/// Prais-Winsten transformed panel with the autocorrelation held at `rho`.
/// With `rho = 0` this is pooled OLS.
pub fn prais_winsten<S: Scalar>(panel: &PanelDataset<S>, rho: S) -> Result<Vec<S>> {
    let (x, y, names) = frontier_design(panel);
    let (xs, ys) = prais_winsten_transform(&x, &y, panel.n_units(), panel.n_periods(), rho);
    lstsq(xs.view(), ys.view(), &names)
}

fn prais_winsten_transform<S: Scalar>(
    x: &Array2<S>,
    y: &Array1<S>,
    n: usize,
    t_len: usize,
    rho: S,
) -> (Array2<S>, Array1<S>) {
    if rho == S::zero() {
        return (x.clone(), y.clone());
    }
    let mut xs = x.clone();
    let mut ys = y.clone();
    let first = (S::one() - rho * rho).sqrt();
    for i in 0..n {
        let base = i * t_len;
        ys[base] = first * y[base];
        for c in 0..x.ncols() {
            xs[[base, c]] = first * x[[base, c]];
        }
        for t in 1..t_len {
            let row = base + t;
            ys[row] = y[row] - rho * y[row - 1];
            for c in 0..x.ncols() {
                xs[[row, c]] = x[[row, c]] - rho * x[[row - 1, c]];
            }
        }
    }
    (xs, ys)
}

/// Pooled lag-1 regression of residuals on their own lag (no intercept).
/// Returns zero for numerically constant residuals.
pub fn pooled_rho<S: Scalar>(resid: &Array2<S>) -> S {
    let flat: Vec<S> = resid.iter().copied().collect();
    if variance(&flat) < S::lit(DEGENERATE_VARIANCE) {
        return S::zero();
    }
    let mut num = S::zero();
    let mut den = S::zero();
    for row in resid.rows() {
        for t in 1..row.len() {
            num = num + row[t] * row[t - 1];
            den = den + row[t - 1] * row[t - 1];
        }
    }
    if den <= S::zero() {
        return S::zero();
    }
    num / den
}

fn structural_residuals<S: Scalar>(x: &Array2<S>, y: &Array1<S>, coef: &[S], n: usize, t_len: usize) -> Array2<S> {
    let fitted = x.dot(&Array1::from(coef.to_vec()));
    let e = y - &fitted;
    e.into_shape_with_order((n, t_len)).expect("residual shape")
}

/// Step 1: joint estimation of the frontier and the AR(1) coefficient.
pub fn fit_frontier_gls<S: Scalar>(panel: &PanelDataset<S>) -> Result<FrontierFit<S>> {
    let n = panel.n_units();
    let t_len = panel.n_periods();
    let (x, y, names) = frontier_design(panel);

    let mut coef = lstsq(x.view(), y.view(), &names)?;
    let mut rho = S::zero();
    let mut converged = false;
    let mut iterations = 0;
    let tol = S::lit(GLS_TOL);
    for it in 1..=GLS_MAX_ITER {
        iterations = it;
        let e = structural_residuals(&x, &y, &coef, n, t_len);
        let rho_new = pooled_rho(&e);
        if !(rho_new.abs() < S::one()) {
            return Err(Error::ExplosiveAutocorrelation { rho: rho_new.as_f64() });
        }
        let (xs, ys) = prais_winsten_transform(&x, &y, n, t_len, rho_new);
        let coef_new = lstsq(xs.view(), ys.view(), &names)?;
        let delta = coef
            .iter()
            .zip(&coef_new)
            .map(|(a, b)| (*a - *b).abs())
            .fold((rho - rho_new).abs(), S::max);
        coef = coef_new;
        rho = rho_new;
        if delta < tol {
            converged = true;
            break;
        }
    }

    let residuals_v = structural_residuals(&x, &y, &coef, n, t_len);
    let mut lagged = Array2::<S>::zeros((n, t_len));
    for i in 0..n {
        for t in 1..t_len {
            lagged[[i, t]] = residuals_v[[i, t - 1]];
        }
    }
    let residuals_u = &residuals_v - &lagged.mapv(|e| rho * e);
    Ok(FrontierFit {
        beta0_hat: coef[0],
        beta_hat: coef[1..].to_vec(),
        rho_hat: rho,
        residuals_u,
        residuals_v,
        lagged_innovations: lagged,
        iterations,
        converged,
    })
}

struct EfficiencyDesign<S> {
    x: Array2<S>,
    names: Vec<String>,
    q: usize,
    r: usize,
    intercept: bool,
}

fn efficiency_design<S: Scalar>(panel: &PanelDataset<S>, intercept: bool) -> EfficiencyDesign<S> {
    let n = panel.n_units();
    let t_len = panel.n_periods();
    let q = panel.n_spatial();
    let r = panel.n_covariates();
    let off = usize::from(intercept);
    let mut x = Array2::<S>::zeros((n * t_len, off + q + r));
    for i in 0..n {
        for t in 0..t_len {
            let row = i * t_len + t;
            if intercept {
                x[[row, 0]] = S::one();
            }
            for k in 0..q {
                x[[row, off + k]] = panel.spatial()[[i, t, k]];
            }
            for k in 0..r {
                x[[row, off + q + k]] = panel.covariates()[[i, t, k]];
            }
        }
    }
    let mut names = Vec::new();
    if intercept {
        names.push("const".to_string());
    }
    names.extend((1..=q).map(|k| format!("w{k}")));
    names.extend((1..=r).map(|k| format!("z{k}")));
    EfficiencyDesign {
        x,
        names,
        q,
        r,
        intercept,
    }
}

struct LevelFit<S> {
    coef: Vec<S>,
    clamp_count: usize,
    clamped: Vec<S>,
    sse: S,
}

fn fit_at_level<S: Scalar>(design: &EfficiencyDesign<S>, u_hat: &[S], level: S) -> Result<LevelFit<S>> {
    let delta = S::lit(CLAMP_DELTA);
    let hi = S::one() - delta;
    let raw: Vec<S> = u_hat.iter().map(|&u| level - u).collect();
    let mut clamp_count = 0;
    let clamped: Vec<S> = raw
        .iter()
        .map(|&u| {
            if u < delta {
                clamp_count += 1;
                delta
            } else if u > hi {
                clamp_count += 1;
                hi
            } else {
                u
            }
        })
        .collect();
    if clamp_count == raw.len() {
        return Err(Error::InefficiencySignalAbsent(
            "every inefficiency observation fell outside (0, 1)".into(),
        ));
    }
    let response: Vec<S> = clamped.iter().map(|&u| logit(u)).collect();
    if variance(&response) < S::lit(DEGENERATE_VARIANCE) {
        return Err(Error::InefficiencySignalAbsent(
            "zero response variance after clamping".into(),
        ));
    }
    let coef = lstsq(design.x.view(), Array1::from(response).view(), &design.names)?;
    let eta = design.x.dot(&Array1::from(coef.clone()));
    let sse = raw
        .iter()
        .zip(eta.iter())
        .map(|(&u, &e)| {
            let d = u - logistic(e);
            d * d
        })
        .sum();
    Ok(LevelFit {
        coef,
        clamp_count,
        clamped,
        sse,
    })
}

const PROFILE_GRID: usize = 96;
const PROFILE_TOL: f64 = 1e-10;

fn profile_level<S: Scalar>(design: &EfficiencyDesign<S>, u_hat: &[S]) -> Result<S> {
    let mut sorted: Vec<S> = u_hat.to_vec();
    sorted.sort_by(|a, b| a.as_f64().total_cmp(&b.as_f64()));
    let median = sorted[sorted.len() / 2];
    let lo = median + S::lit(0.02);
    let step = S::lit(0.96 / PROFILE_GRID as f64);

    let objective = |c: S| -> Result<S> {
        match fit_at_level(design, u_hat, c) {
            Ok(f) => Ok(f.sse),
            Err(Error::InefficiencySignalAbsent(_)) => Ok(S::infinity()),
            Err(e) => Err(e),
        }
    };

    let grid: Vec<S> = (0..=PROFILE_GRID).map(|j| lo + step * S::lit(j as f64)).collect();
    let mut values = Vec::with_capacity(grid.len());
    for &c in &grid {
        values.push(objective(c)?);
    }
    let (best, best_val) = values
        .iter()
        .enumerate()
        .fold((0, S::infinity()), |acc, (j, &v)| if v < acc.1 { (j, v) } else { acc });
    if !best_val.is_finite() {
        return Err(Error::InefficiencySignalAbsent(
            "no inefficiency level leaves usable observations".into(),
        ));
    }

    // golden-section refinement inside the neighbouring grid cells
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(PROFILE_GRID)];
    let inv_phi = S::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d)?;
    // f32 cannot resolve PROFILE_TOL near c ~ 0.5
    let tol = S::lit(PROFILE_TOL).max(S::epsilon() * S::lit(8.0) * (a.abs() + b.abs()));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d)?;
        }
    }
    let mid = (a + b) / S::lit(2.0);
    let fm = objective(mid)?;
    Ok(if fm <= best_val { mid } else { grid[best] })
}

/// Step 2: least squares of `logit(u*)` on the spatial measures and
/// covariates, where `u*` are the step-1 residuals turned into inefficiency
/// observations (see [`LevelRule`]) and clamped into `[1e-6, 1 - 1e-6]`.
pub fn fit_efficiency_glm<S: Scalar>(
    frontier: &FrontierFit<S>,
    panel: &PanelDataset<S>,
    options: EfficiencyOptions,
) -> Result<EfficiencyFit<S>> {
    let n = panel.n_units();
    let t_len = panel.n_periods();
    if frontier.residuals_u.dim() != (n, t_len) {
        return Err(Error::DimensionMismatch {
            what: "frontier residuals",
            expected: n * t_len,
            actual: frontier.residuals_u.len(),
        });
    }
    let design = efficiency_design(panel, options.intercept);
    let u_hat: Vec<S> = frontier.residuals_u.iter().copied().collect();
    let level = match options.level {
        LevelRule::Negate => S::zero(),
        LevelRule::Profile => profile_level(&design, &u_hat)?,
    };
    let fit = fit_at_level(&design, &u_hat, level)?;
    let off = usize::from(design.intercept);
    Ok(EfficiencyFit {
        intercept_hat: design.intercept.then(|| fit.coef[0]),
        gamma_hat: fit.coef[off..off + design.q].to_vec(),
        phi_hat: fit.coef[off + design.q..off + design.q + design.r].to_vec(),
        level,
        clamp_count: fit.clamp_count,
        observed_u: Array2::from_shape_vec((n, t_len), fit.clamped).expect("observed shape"),
    })
}

/// Steps 1-3 in sequence, once.
pub fn estimate_model<S: Scalar>(panel: &PanelDataset<S>, options: EfficiencyOptions) -> Result<EstimationResult<S>> {
    let frontier = fit_frontier_gls(panel)?;
    let eff = fit_efficiency_glm(&frontier, panel, options)?;
    let n = panel.n_units();
    let t_len = panel.n_periods();
    let mut te = Array2::<S>::zeros((n, t_len));
    for i in 0..n {
        for t in 0..t_len {
            let w = panel.spatial_at(i, t);
            let z = panel.covariates_at(i, t);
            let mut eta = eff.intercept_hat.unwrap_or_else(S::zero);
            eta = eta + w.iter().zip(&eff.gamma_hat).map(|(&a, &b)| a * b).sum::<S>();
            eta = eta + z.iter().zip(&eff.phi_hat).map(|(&a, &b)| a * b).sum::<S>();
            te[[i, t]] = technical_efficiency(logistic(eta))?;
        }
    }
    let observed_te = eff.observed_u.mapv(|u| (-u).exp());
    let clamp_flagged = eff.clamp_count as f64 >= CLAMP_FLAG_SHARE * (n * t_len) as f64;
    Ok(EstimationResult {
        frontier,
        gamma_hat: eff.gamma_hat,
        phi_hat: eff.phi_hat,
        efficiency_intercept: eff.intercept_hat,
        inefficiency_level: eff.level,
        level_rule: options.level,
        te,
        observed_te,
        clamp_count: eff.clamp_count,
        clamp_flagged,
    })
}
