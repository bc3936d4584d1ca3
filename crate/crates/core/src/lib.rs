//! Spatial-temporal stochastic frontier model.
//!
//! Log output follows a Cobb-Douglas frontier with AR(1) noise and an
//! inefficiency term whose mean is a logistic function of spatial measures
//! `w` and covariates `z`:
//!
//! ```text
//! ln y_it = b0 + sum_k b_k ln x_itk + v_it - u_it
//! v_it    = rho v_i,t-1 + psi_it
//! u_it    = logistic(w_it gamma_t + z_it phi) + eps_it
//! ```
//!
//! The crate simulates such panels ([`simulate_panel`]), estimates them in
//! two steps ([`estimate_model`]), tests whether `rho` is shared by all units
//! and `gamma_t` by all periods ([`bootstrap`]), and runs Monte Carlo
//! size/power grids ([`power`]). All numerics are generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the usual `f64` choice.

pub mod bootstrap;
pub mod error;
pub mod estimate;
pub mod io;
mod linalg;
pub mod model;
pub mod power;
pub mod scalar;
pub mod seed;
pub mod simulate;

pub use bootstrap::{
    percentile_interval, test_constant_spatial, test_constant_temporal, test_spatial_on_panel, DecisionRule,
    NonstationaryPolicy, SeriesSource, TeSource, TestConfig, TestKind, TestReport,
};
pub use error::{Error, Result};
pub use estimate::{
    estimate_model, fit_efficiency_glm, fit_frontier_gls, EfficiencyFit, EfficiencyOptions, EstimationResult,
    FrontierFit, LevelRule,
};
pub use model::{te_to_logit, technical_efficiency, Dominance, ModelParams, PanelDataset, Scenario};
pub use scalar::Scalar;
pub use simulate::{simulate_panel, Simulation};

pub type Panel = PanelDataset<f64>;
pub type Panel32 = PanelDataset<f32>;
pub type Params = ModelParams<f64>;
pub type Params32 = ModelParams<f32>;
pub type Scenario64 = Scenario<f64>;
pub type Scenario32 = Scenario<f32>;
pub type Estimation = EstimationResult<f64>;
pub type Report = TestReport<f64>;
