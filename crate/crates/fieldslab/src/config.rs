//! Experiment configuration: parsing, validation and hashing.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use fieldslab_core::exact::{RatePerturbation, DEFAULT_STATE_CAP};
use fieldslab_core::lattice::{Interaction, ModelParams, Torus};
use fieldslab_core::measures::{Profile, ProfileSpec};
use fieldslab_core::testfn::{factor_registry, FactorSpec, ProductTestFunction};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Published JSON Schema for [`ExperimentConfig`].
pub const SCHEMA: &str = include_str!("../schema/experiment.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelGrid {
    pub sigma: Vec<i32>,
    pub alpha: Vec<u32>,
    #[serde(default = "default_dim")]
    pub d: usize,
    pub n: Vec<usize>,
}

fn default_dim() -> usize {
    1
}

/// One product test function `g_1 ⊗ ... ⊗ g_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub factors: Vec<FactorSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    Duality,
    DetailedBalance,
    ProductExpansion,
    ExpectationExpansion,
}

impl Identity {
    pub const ALL: [Identity; 4] =
        [Identity::Duality, Identity::DetailedBalance, Identity::ProductExpansion, Identity::ExpectationExpansion];

    pub fn name(self) -> &'static str {
        match self {
            Identity::Duality => "duality",
            Identity::DetailedBalance => "detailed_balance",
            Identity::ProductExpansion => "product_expansion",
            Identity::ExpectationExpansion => "expectation_expansion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactOptions {
    pub identities: Vec<Identity>,
    /// Dual orders `k` for the duality grid.
    pub orders: Vec<usize>,
    pub max_particles: u32,
    pub thetas: Vec<f64>,
    /// Random configurations per grid point for the product expansion.
    pub configs_per_point: usize,
    /// Occupancy bound for random configurations of unbounded models.
    pub max_occupancy: u32,
    pub tolerance: f64,
    pub state_cap: usize,
    pub perturbation: Option<RatePerturbation>,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            identities: Identity::ALL.to_vec(),
            orders: vec![1, 2],
            max_particles: 3,
            thetas: vec![0.3, 0.7],
            configs_per_point: 50,
            max_occupancy: 4,
            tolerance: 1e-10,
            state_cap: DEFAULT_STATE_CAP,
            perturbation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluctOptions {
    /// Batches for the time-averaged carré du champ.
    pub batches: usize,
    pub horizon: f64,
    /// Evaluation times per trajectory on `(0, horizon]`.
    pub gamma_points: usize,
    /// Trajectories for the carré du champ average; `0` disables it.
    pub gamma_samples: usize,
    /// Also report covariances between distinct test functions.
    pub pairs: bool,
}

impl Default for FluctOptions {
    fn default() -> Self {
        Self { batches: 20, horizon: 0.1, gamma_points: 100, gamma_samples: 200, pairs: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualOptions {
    pub tuples: Vec<Vec<usize>>,
    /// Explicit initial occupancies; sampled from `μ_θ` when absent.
    pub initial: Option<Vec<u32>>,
    /// Largest torus on which the forward semigroup is evolved exactly.
    pub exact_max_sites: usize,
    pub state_cap: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self { tuples: vec![vec![0], vec![0, 1]], initial: None, exact_max_sites: 4, state_cap: DEFAULT_STATE_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelGrid,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionSpec>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub exact: ExactOptions,
    #[serde(default)]
    pub fluct: FluctOptions,
    #[serde(default)]
    pub dual: DualOptions,
}

fn default_samples() -> usize {
    100
}

/// A model on one grid point.
#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    pub index: usize,
    pub params: ModelParams,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("config does not match the schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Checks every field that the type system does not.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        ensure!((1..=3).contains(&m.d), "model.d must be 1, 2 or 3");
        for &s in &m.sigma {
            Interaction::from_sigma(s)?;
        }
        ensure!(m.alpha.iter().all(|&a| a >= 1), "model.alpha entries must be positive");
        ensure!(m.n.iter().all(|&n| n >= 2), "model.n entries must be at least 2");
        if let Some(th) = self.theta {
            ensure!(th.is_finite() && th >= 0.0, "theta must be finite and non-negative");
        }
        ensure!(self.times.iter().all(|t| t.is_finite() && *t >= 0.0), "times must be finite and non-negative");
        ensure!(self.times.windows(2).all(|w| w[0] <= w[1]), "times must be sorted");
        ensure!(self.samples >= 2, "samples must be at least 2");
        let e = &self.exact;
        ensure!(e.tolerance > 0.0, "exact.tolerance must be positive");
        ensure!(e.orders.iter().all(|&k| (1..=4).contains(&k)), "exact.orders must lie in 1..=4");
        ensure!(e.thetas.iter().all(|t| t.is_finite() && *t >= 0.0), "exact.thetas must be non-negative");
        let f = &self.fluct;
        ensure!(f.horizon > 0.0 && f.horizon.is_finite(), "fluct.horizon must be positive");
        ensure!(f.gamma_samples == 0 || (f.batches >= 2 && f.gamma_samples >= f.batches), "fluct.gamma_samples must be 0 or at least fluct.batches >= 2");
        ensure!(f.gamma_points >= 1, "fluct.gamma_points must be positive");
        ensure!(self.dual.tuples.iter().all(|t| !t.is_empty()), "dual.tuples must be non-empty");
        self.test_functions(m.d)?;
        if let Some(p) = &self.profile {
            p.build(&factor_registry(), m.d)?;
        }
        Ok(())
    }

    pub fn interactions(&self) -> Vec<Interaction> {
        self.model.sigma.iter().map(|&s| Interaction::from_sigma(s).expect("validated")).collect()
    }

    /// Every `(σ, α, N)` combination in declaration order.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let mut out = Vec::new();
        for i in self.interactions() {
            for &a in &self.model.alpha {
                for &n in &self.model.n {
                    let params = ModelParams::new(i, a, Torus::new(self.model.d, n)?)?;
                    out.push(GridPoint { index: out.len(), params });
                }
            }
        }
        if out.is_empty() {
            bail!("no instances: the model grid is empty");
        }
        Ok(out)
    }

    pub fn test_functions(&self, d: usize) -> Result<Vec<(String, ProductTestFunction)>> {
        let reg = factor_registry();
        self.test_functions
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                ensure!(!spec.factors.is_empty(), "test function {i} has no factors");
                let g = ProductTestFunction::from_specs(&spec.factors, &reg, d)?;
                Ok((spec.name.clone().unwrap_or_else(|| format!("G{i}")), g))
            })
            .collect()
    }

    pub fn profile(&self) -> Result<Profile> {
        match (&self.profile, self.theta) {
            (Some(p), _) => Ok(p.build(&factor_registry(), self.model.d)?),
            (None, Some(th)) => Ok(Profile::constant(th)),
            (None, None) => bail!("either theta or profile is required"),
        }
    }

    pub fn constant_theta(&self) -> Result<f64> {
        match (self.theta, &self.profile) {
            (Some(th), None) => Ok(th),
            (_, Some(_)) => bail!("this subcommand needs a constant theta, not a profile"),
            (None, None) => bail!("theta is required"),
        }
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": {"sigma": [0], "alpha": [1], "n": [8]}, "theta": 0.5}"#;

    #[test]
    fn defaults_are_filled_in() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.model.d, 1);
        assert_eq!(c.samples, 100);
        assert_eq!(c.fluct.batches, 20);
        assert_eq!(c.exact.identities.len(), 4);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"model": {"sigma": [0], "alpha": [1], "n": [8]}, "thta": 0.5}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"model": {"sigma": [2], "alpha": [1], "n": [8]}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"model": {"sigma": [0], "alpha": [1], "n": [1]}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"model": {"sigma": [0], "alpha": [1], "n": [8]}, "times": [0.2, 0.1]}"#).is_err());
        let bad_factor = r#"{"model": {"sigma": [0], "alpha": [1], "n": [8]},
            "test_functions": [{"factors": [{"family": "trig", "params": {"mod": 1}}]}]}"#;
        assert!(ExperimentConfig::from_json(bad_factor).is_err());
    }

    #[test]
    fn hash_tracks_every_resolved_field() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.fluct.horizon = 0.2;
        assert_ne!(a.hash(), c.hash());
        let explicit = ExperimentConfig::from_json(
            r#"{"model": {"sigma": [0], "alpha": [1], "n": [8], "d": 1}, "theta": 0.5, "samples": 100}"#,
        )
        .unwrap();
        assert_eq!(a.hash(), explicit.hash());
    }

    #[test]
    fn empty_grid_is_reported() {
        let c = ExperimentConfig::from_json(r#"{"model": {"sigma": [], "alpha": [1], "n": [8]}}"#).unwrap();
        assert!(c.grid().unwrap_err().to_string().contains("no instances"));
    }

    #[test]
    fn schema_lists_every_top_level_field() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        let props = schema["properties"].as_object().unwrap();
        let c = serde_json::to_value(ExperimentConfig::from_json(MINIMAL).unwrap()).unwrap();
        let mut fields: Vec<&String> = c.as_object().unwrap().keys().collect();
        let mut listed: Vec<&String> = props.keys().collect();
        fields.sort();
        listed.sort();
        assert_eq!(fields, listed);
        for section in ["exact", "fluct", "dual", "model"] {
            let mut f: Vec<&String> = c[section].as_object().unwrap().keys().collect();
            let mut l: Vec<&String> = props[section]["properties"].as_object().unwrap().keys().collect();
            f.sort();
            l.sort();
            assert_eq!(f, l, "{section}");
        }
    }
}
