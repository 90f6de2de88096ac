//! Experiment drivers behind the CLI subcommands.

mod dual_check;
mod exact_check;
mod fluct_sweep;
mod hydro_sweep;

use std::sync::Arc;

use anyhow::Result;
use fieldslab_core::lattice::{Configuration, ModelParams};
use fieldslab_core::registry::Registry;
use fieldslab_core::testfn::{factor_registry, FactorSpec, ProductTestFunction};
use rayon::prelude::*;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::emit::Table;

pub use dual_check::DualCheck;
pub use exact_check::ExactCheck;
pub use fluct_sweep::FluctSweep;
pub use hydro_sweep::HydroSweep;

/// Output of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tables: Vec<Table>,
    /// Overall verdict for experiments with hard tolerances.
    pub passed: Option<bool>,
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, cfg: &ExperimentConfig) -> Result<Report>;
}

pub type ExperimentRegistry = Registry<dyn Experiment>;

pub fn experiment_registry() -> ExperimentRegistry {
    let mut r = ExperimentRegistry::new("experiment");
    r.register("exact-check", Arc::new(ExactCheck));
    r.register("hydro-sweep", Arc::new(HydroSweep));
    r.register("fluct-sweep", Arc::new(FluctSweep));
    r.register("dual-check", Arc::new(DualCheck));
    r
}

/// Runs `f` for `0..m` in parallel and returns the results in index order.
pub(crate) fn par_collect<T: Send>(m: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..m as u64).into_par_iter().map(f).collect()
}

pub(crate) fn sigma_label(p: &ModelParams) -> i32 {
    p.sigma()
}

/// Test functions from the config, or a small built-in set.
pub(crate) fn test_functions_or_default(cfg: &ExperimentConfig) -> Result<Vec<(String, ProductTestFunction)>> {
    let d = cfg.model.d;
    if !cfg.test_functions.is_empty() {
        return cfg.test_functions(d);
    }
    let reg = factor_registry();
    let sin = FactorSpec::new("trig", json!({"mode": 1, "shape": "sin"}));
    let cos = FactorSpec::new("trig", json!({"mode": 2, "offset": 0.5}));
    let bump = FactorSpec::new("bump", json!({"center": 0.3, "width": 0.15}));
    Ok(vec![
        ("sin".into(), ProductTestFunction::from_specs(std::slice::from_ref(&sin), &reg, d)?),
        ("bump_cos".into(), ProductTestFunction::from_specs(&[bump, cos], &reg, d)?),
    ])
}

pub(crate) fn tuple_label(x: &[usize]) -> String {
    x.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

pub(crate) fn check_initial(initial: &[u32], p: &ModelParams) -> Result<Configuration> {
    anyhow::ensure!(initial.len() == p.torus.num_sites(), "dual.initial has {} sites, torus has {}", initial.len(), p.torus.num_sites());
    let eta = Configuration::from_occupancy(initial.to_vec());
    eta.check_admissible(p)?;
    Ok(eta)
}
