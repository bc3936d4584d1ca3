//! Monte Carlo size and power of the two bootstrap tests.
//!
//! A [`GridSpec`] expands into cells keyed by (test, n, T, dominance,
//! contamination fraction, shift). Size cells have fraction and shift zero.
//! Each replication of a cell simulates a fresh panel from a seed derived
//! from the master seed, the cell key and the replication index, so a table
//! is identical for any thread count or evaluation order.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{test_constant_temporal, test_spatial_on_panel, TeSource, TestConfig, TestKind};
use crate::error::{Error, Result};
use crate::estimate::EfficiencyOptions;
use crate::model::{Dominance, ModelParams, Scenario};
use crate::scalar::Scalar;
use crate::seed::{mix, REPLICATION, TEST};
use crate::simulate::simulate_panel;

/// Everything a replication needs besides the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CellSettings {
    #[serde(default)]
    pub test_config: TestConfig,
    #[serde(default)]
    pub te_source: TeSource,
    #[serde(default)]
    pub efficiency: EfficiencyOptions,
}

/// Cartesian grid of simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GridSpec<S> {
    #[serde(default = "default_units")]
    pub n_units: Vec<usize>,
    #[serde(default = "default_periods")]
    pub n_periods: Vec<usize>,
    #[serde(default = "default_dominance")]
    pub dominance: Vec<Dominance>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    /// `r` for the temporal test, `g` for the spatial test.
    #[serde(default = "default_shifts")]
    pub shifts: Vec<f64>,
    #[serde(default = "default_tests")]
    pub tests: Vec<TestKind>,
    #[serde(default = "default_true")]
    pub include_size: bool,
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    #[serde(default = "power_params")]
    pub base_params: ModelParams<S>,
    #[serde(default)]
    pub settings: CellSettings,
}

fn default_units() -> Vec<usize> {
    vec![50, 100, 200]
}
fn default_periods() -> Vec<usize> {
    vec![12, 60]
}
fn default_dominance() -> Vec<Dominance> {
    vec![Dominance::Equal, Dominance::SpatialDominates, Dominance::CovariateDominates]
}
fn default_fractions() -> Vec<f64> {
    vec![0.1, 0.2]
}
fn default_shifts() -> Vec<f64> {
    vec![0.3, 1.0, 1.5]
}
fn default_tests() -> Vec<TestKind> {
    vec![TestKind::Temporal, TestKind::Spatial]
}
fn default_true() -> bool {
    true
}
fn default_reps() -> usize {
    200
}

/// Model defaults with `rho = 0.3`, so that `rho * (1 + r)` stays
/// stationary for every default shift.
pub fn power_params<S: Scalar>() -> ModelParams<S> {
    ModelParams {
        rho: S::lit(0.3),
        ..ModelParams::default()
    }
}

impl<S: Scalar> Default for GridSpec<S> {
    fn default() -> Self {
        Self {
            n_units: default_units(),
            n_periods: default_periods(),
            dominance: default_dominance(),
            fractions: default_fractions(),
            shifts: default_shifts(),
            tests: default_tests(),
            include_size: true,
            n_reps: default_reps(),
            base_params: power_params(),
            settings: CellSettings::default(),
        }
    }
}

/// Identifies one cell of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub test: TestKind,
    pub n_units: usize,
    pub n_periods: usize,
    pub dominance: Dominance,
    pub fraction: f64,
    pub shift: f64,
}

impl CellKey {
    /// Stable 64-bit digest of the key.
    pub fn hash(&self) -> u64 {
        let test = match self.test {
            TestKind::Temporal => 1,
            TestKind::Spatial => 2,
        };
        let dom = match self.dominance {
            Dominance::Equal => 1,
            Dominance::SpatialDominates => 2,
            Dominance::CovariateDominates => 3,
        };
        mix(
            0,
            &[
                test,
                self.n_units as u64,
                self.n_periods as u64,
                dom,
                self.fraction.to_bits(),
                self.shift.to_bits(),
            ],
        )
    }

    pub fn is_size(&self) -> bool {
        self.fraction == 0.0 || self.shift == 0.0
    }

    /// The scenario this cell simulates (its seed is replaced per replication).
    pub fn scenario<S: Scalar>(&self, base_params: &ModelParams<S>) -> Scenario<S> {
        let mut sc = Scenario::new(self.n_units, self.n_periods, 0);
        sc.dominance = self.dominance;
        sc.base_params = base_params.clone();
        if !self.is_size() {
            sc.contamination_fraction = self.fraction;
            match self.test {
                TestKind::Temporal => sc.temporal_shift_r = self.shift,
                TestKind::Spatial => sc.spatial_shift_g = self.shift,
            }
        }
        sc
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/n={}/T={}/{}/fraction={}/shift={}",
            self.test.label(),
            self.n_units,
            self.n_periods,
            self.dominance.label(),
            self.fraction,
            self.shift
        )
    }
}

impl<S: Scalar> GridSpec<S> {
    /// Cell keys in table order: test, n, T, dominance, fraction, shift.
    pub fn cell_keys(&self) -> Vec<CellKey> {
        let mut keys = Vec::new();
        for &test in &self.tests {
            for &n_units in &self.n_units {
                for &n_periods in &self.n_periods {
                    for &dominance in &self.dominance {
                        let base = CellKey {
                            test,
                            n_units,
                            n_periods,
                            dominance,
                            fraction: 0.0,
                            shift: 0.0,
                        };
                        if self.include_size {
                            keys.push(base);
                        }
                        for &fraction in &self.fractions {
                            for &shift in &self.shifts {
                                keys.push(CellKey { fraction, shift, ..base });
                            }
                        }
                    }
                }
            }
        }
        keys
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::Invalid("n_reps must be at least 1".into()));
        }
        if self.cell_keys().is_empty() {
            return Err(Error::Invalid("grid has no cells".into()));
        }
        if self.fractions.iter().chain(&self.shifts).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("fractions and shifts must be finite".into()));
        }
        self.settings.test_config.validate()?;
        for key in self.cell_keys() {
            key.scenario(&self.base_params)
                .validate()
                .map_err(|e| Error::Invalid(format!("cell {key}: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PowerCell<S> {
    pub key: CellKey,
    pub scenario: Scenario<S>,
    /// Replications that completed; the rate's denominator.
    pub n_reps: usize,
    pub n_rejections: usize,
    /// Replications that ended in an error and were left out.
    pub n_errors: usize,
    pub rejection_rate: f64,
    pub wall_time_secs: f64,
}

impl<S: Scalar> PowerCell<S> {
    /// Equality of everything except timing.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.key == other.key
            && self.scenario == other.scenario
            && self.n_reps == other.n_reps
            && self.n_rejections == other.n_rejections
            && self.n_errors == other.n_errors
            && self.rejection_rate == other.rejection_rate
    }

    /// Binomial standard error of the rate.
    pub fn std_error(&self) -> f64 {
        let p = self.rejection_rate;
        (p * (1.0 - p) / self.n_reps as f64).sqrt()
    }
}

/// Seed of replication `rep` of the cell with the given key digest.
pub fn replication_seed(master_seed: u64, key_hash: u64, rep: usize) -> u64 {
    mix(master_seed, &[REPLICATION, key_hash, rep as u64])
}

/// Runs one replication: simulate a panel and apply the test.
pub fn run_replication<S: Scalar>(
    scenario: &Scenario<S>,
    test: TestKind,
    settings: &CellSettings,
    rep_seed: u64,
) -> Result<bool> {
    let mut sc = scenario.clone();
    sc.seed = rep_seed;
    let sim = simulate_panel(&sc)?;
    let config = TestConfig {
        seed: mix(rep_seed, &[TEST]),
        ..settings.test_config
    };
    let report = match test {
        TestKind::Temporal => test_constant_temporal(&sim.panel, &config)?,
        TestKind::Spatial => test_spatial_on_panel(&sim.panel, &config, settings.te_source, settings.efficiency)?,
    };
    Ok(report.reject)
}

/// Replicates `test` on `scenario` `n_reps` times. Errored replications
/// are excluded from the rate; more than 1% of them fails the cell.
pub fn run_power_cell<S: Scalar>(
    key: CellKey,
    scenario: &Scenario<S>,
    n_reps: usize,
    master_seed: u64,
    settings: &CellSettings,
) -> Result<PowerCell<S>> {
    if n_reps == 0 {
        return Err(Error::Invalid("n_reps must be at least 1".into()));
    }
    scenario.validate()?;
    settings.test_config.validate()?;
    let start = Instant::now();
    let key_hash = key.hash();
    let outcomes: Vec<Result<bool>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| run_replication(scenario, key.test, settings, replication_seed(master_seed, key_hash, rep)))
        .collect();
    let n_rejections = outcomes.iter().filter(|o| matches!(o, Ok(true))).count();
    let n_errors = outcomes.iter().filter(|o| o.is_err()).count();
    if n_errors * 100 > n_reps {
        let first = outcomes.into_iter().find_map(|o| o.err()).expect("at least one error");
        return Err(Error::CellFailed {
            key: key.to_string(),
            errors: n_errors,
            attempted: n_reps,
            first: first.to_string(),
        });
    }
    let done = n_reps - n_errors;
    Ok(PowerCell {
        key,
        scenario: scenario.clone(),
        n_reps: done,
        n_rejections,
        n_errors,
        rejection_rate: n_rejections as f64 / done as f64,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub key: CellKey,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PowerTable<S> {
    pub cells: Vec<PowerCell<S>>,
    pub failures: Vec<CellFailure>,
    pub grid_spec: GridSpec<S>,
    pub master_seed: u64,
}

impl<S: Scalar> PowerTable<S> {
    /// Equality of everything except timing.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.master_seed == other.master_seed
            && self.grid_spec == other.grid_spec
            && self.failures == other.failures
            && self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| a.same_outcome(b))
    }

    pub fn cell(&self, key: &CellKey) -> Option<&PowerCell<S>> {
        self.cells.iter().find(|c| c.key == *key)
    }
}

/// Runs every cell of the grid. Failed cells are listed in
/// [`PowerTable::failures`] and do not stop the run.
pub fn run_grid<S: Scalar>(spec: &GridSpec<S>, master_seed: u64) -> Result<PowerTable<S>> {
    spec.validate()?;
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for key in spec.cell_keys() {
        let scenario = key.scenario(&spec.base_params);
        match run_power_cell(key, &scenario, spec.n_reps, master_seed, &spec.settings) {
            Ok(cell) => cells.push(cell),
            Err(e) => failures.push(CellFailure {
                key,
                message: e.to_string(),
            }),
        }
    }
    Ok(PowerTable {
        cells,
        failures,
        grid_spec: spec.clone(),
        master_seed,
    })
}

/// Writes `test,n,T,dominance,fraction,shift,reps,rejections,rate` rows.
pub fn write_power_csv<S: Scalar, W: Write>(table: &PowerTable<S>, out: W, comments: &[String]) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["test", "n", "T", "dominance", "fraction", "shift", "reps", "rejections", "rate"])?;
    for c in &table.cells {
        w.write_record([
            c.key.test.label().to_string(),
            c.key.n_units.to_string(),
            c.key.n_periods.to_string(),
            c.key.dominance.label().to_string(),
            c.key.fraction.to_string(),
            c.key.shift.to_string(),
            c.n_reps.to_string(),
            c.n_rejections.to_string(),
            c.rejection_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Text table with one row per (n, T, dominance): the size column followed
/// by one power column per (fraction, shift).
pub fn format_summary<S: Scalar>(table: &PowerTable<S>) -> String {
    let spec = &table.grid_spec;
    let mut s = String::new();
    for &test in &spec.tests {
        let letter = match test {
            TestKind::Temporal => 'r',
            TestKind::Spatial => 'g',
        };
        let _ = writeln!(
            s,
            "{} test: empirical size and power ({} replications per cell, master seed {})",
            test.label(),
            spec.n_reps,
            table.master_seed
        );
        let mut header = format!("{:>5} {:>4} {:<10}", "n", "T", "dominance");
        if spec.include_size {
            header.push_str(&format!(" {:>7}", "size"));
        }
        for &f in &spec.fractions {
            for &sh in &spec.shifts {
                header.push_str(&format!(" {:>11}", format!("{:.0}%,{letter}={sh}", f * 100.0)));
            }
        }
        let _ = writeln!(s, "{header}");
        for &n in &spec.n_units {
            for &t in &spec.n_periods {
                for &d in &spec.dominance {
                    let mut row = format!("{:>5} {:>4} {:<10}", n, t, d.label());
                    let base = CellKey {
                        test,
                        n_units: n,
                        n_periods: t,
                        dominance: d,
                        fraction: 0.0,
                        shift: 0.0,
                    };
                    let fmt = |k: CellKey| {
                        table
                            .cell(&k)
                            .map(|c| format!("{:.3}", c.rejection_rate))
                            .unwrap_or_else(|| "failed".into())
                    };
                    if spec.include_size {
                        row.push_str(&format!(" {:>7}", fmt(base)));
                    }
                    for &fraction in &spec.fractions {
                        for &shift in &spec.shifts {
                            row.push_str(&format!(" {:>11}", fmt(CellKey { fraction, shift, ..base })));
                        }
                    }
                    let _ = writeln!(s, "{row}");
                }
            }
        }
        s.push('\n');
    }
    for f in &table.failures {
        let _ = writeln!(s, "cell {} failed: {}", f.key, f.message);
    }
    s
}
