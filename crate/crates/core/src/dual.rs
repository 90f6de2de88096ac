//! The labelled `k`-particle dual process, the weight `π` and the duality
//! function `D(x, η) = [η]_x / π(x)`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Simulator, SimulatorOptions};
use crate::error::{Error, Result};
use crate::exact::{build_dual_generator, evolve, DEFAULT_STATE_CAP};
use crate::fields::falling_factorial_joint;
use crate::lattice::{Configuration, Interaction, LabeledTuple, ModelParams, Site};
use crate::registry::Registry;
use crate::rng::StreamKey;

/// `π(x) = α(α + σ c_2)⋯(α + σ c_k)` with `c_j = #{i < j : x_i = x_j}`.
pub fn pi_weight(x: &LabeledTuple, interaction: Interaction, alpha: u32) -> f64 {
    let sigma = interaction.sigma() as f64;
    let mut w = 1.0;
    for (j, s) in x.sites.iter().enumerate() {
        let c = x.sites[..j].iter().filter(|&t| t == s).count() as f64;
        w *= (alpha as f64 + sigma * c).max(0.0);
    }
    w
}

/// `D(x, η) = [η]_x / π(x)`; undefined when `π(x) = 0`.
pub fn duality_fn(x: &LabeledTuple, eta: &Configuration, interaction: Interaction, alpha: u32) -> Result<f64> {
    let pi = pi_weight(x, interaction, alpha);
    if pi == 0.0 {
        return Err(Error::UndefinedInput("pi(x) = 0: tuple lies in the excluded set".into()));
    }
    Ok(falling_factorial_joint(eta, x) as f64 / pi)
}

/// One possible jump of the dual process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualMove {
    pub label: usize,
    pub target: Site,
    pub rate: f64,
}

/// Every labelled move with its rate `(N²/2)(α + σ #{j ≠ i : x_j = y})`,
/// one entry per directed edge.
pub fn dual_jump_rates(x: &LabeledTuple, params: &ModelParams) -> Result<Vec<DualMove>> {
    if !x.is_admissible(params.interaction, params.alpha) {
        return Err(Error::UndefinedInput("dual state is not admissible".into()));
    }
    let torus = &params.torus;
    let scale = params.rate_scale();
    let mut out = Vec::with_capacity(x.len() * 2 * torus.dim());
    for (i, &xi) in x.sites.iter().enumerate() {
        for y in torus.neighbors(xi) {
            let stacked = x.sites.iter().enumerate().filter(|&(j, &s)| j != i && s == y).count();
            let rate = scale * params.target_factor(stacked as u32).max(0) as f64;
            out.push(DualMove { label: i, target: y, rate });
        }
    }
    Ok(out)
}

/// Runs the labelled dual process from `x0` to time `t`.
///
/// The unlabelled occupation numbers follow the particle dynamics; at each
/// jump the moving label is chosen uniformly among those at the source site.
pub fn simulate_dual<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    x0: &LabeledTuple,
    t: f64,
    params: &ModelParams,
    rng: &mut R1,
    label_rng: &mut R2,
) -> Result<LabeledTuple> {
    if !x0.is_admissible(params.interaction, params.alpha) {
        return Err(Error::UndefinedInput("dual state is not admissible".into()));
    }
    let mut x = x0.clone();
    let mut sim = Simulator::new(*params, x0.counts(&params.torus), SimulatorOptions::default())?;
    sim.advance(t, rng, |ev, _| {
        let here: Vec<usize> = (0..x.len()).filter(|&i| x.sites[i] == ev.from).collect();
        let pick = here[label_rng.random_range(0..here.len())];
        x.sites[pick] = ev.to;
        Ok(())
    })?;
    Ok(x)
}

/// Value of a dual-semigroup expectation, with a standard error when it was
/// estimated by sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupEstimate {
    pub value: f64,
    pub std_error: Option<f64>,
    pub samples: usize,
}

pub type DualObservable<'a> = dyn Fn(&LabeledTuple) -> f64 + Sync + 'a;

/// Strategy for `Ê_x[f(X_t)]`.
pub trait SemigroupMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn expect(&self, x0: &LabeledTuple, f: &DualObservable<'_>, t: f64, params: &ModelParams) -> Result<SemigroupEstimate>;
}

/// Exact evaluation on the enumerated dual state space.
pub struct Uniformization {
    pub cap: usize,
}

impl Default for Uniformization {
    fn default() -> Self {
        Self { cap: DEFAULT_STATE_CAP }
    }
}

impl SemigroupMethod for Uniformization {
    fn name(&self) -> &'static str {
        "uniformization"
    }
    fn expect(&self, x0: &LabeledTuple, f: &DualObservable<'_>, t: f64, params: &ModelParams) -> Result<SemigroupEstimate> {
        if !x0.is_admissible(params.interaction, params.alpha) {
            return Err(Error::UndefinedInput("dual state is not admissible".into()));
        }
        let space = build_dual_generator(&params.torus, x0.len(), params, self.cap)?;
        let values: Vec<f64> =
            space.index.states().iter().map(|x| f(&LabeledTuple::from_indices(x))).collect();
        let start = space
            .index
            .index_of(&x0.sites.iter().map(|s| s.0).collect())
            .expect("admissible tuple is enumerated");
        let u = evolve(&space.generator, &values, t)?;
        Ok(SemigroupEstimate { value: u[start], std_error: None, samples: 0 })
    }
}

/// Plain Monte Carlo over independent dual trajectories.
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

impl SemigroupMethod for MonteCarlo {
    fn name(&self) -> &'static str {
        "montecarlo"
    }
    fn expect(&self, x0: &LabeledTuple, f: &DualObservable<'_>, t: f64, params: &ModelParams) -> Result<SemigroupEstimate> {
        if self.samples < 2 {
            return Err(Error::InvalidParameter("Monte Carlo needs at least two samples".into()));
        }
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for m in 0..self.samples {
            let key = StreamKey::new(self.seed, m as u64);
            let xt = simulate_dual(x0, t, params, &mut key.dynamics(), &mut key.aux())?;
            let v = f(&xt);
            sum += v;
            sum2 += v * v;
        }
        let n = self.samples as f64;
        let mean = sum / n;
        let var = ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0);
        Ok(SemigroupEstimate { value: mean, std_error: Some((var / n).sqrt()), samples: self.samples })
    }
}

pub type SemigroupRegistry = Registry<dyn SemigroupMethod>;

/// `uniformization` plus a `montecarlo` entry with the given budget.
pub fn semigroup_registry(samples: usize, seed: u64) -> SemigroupRegistry {
    let mut r = SemigroupRegistry::new("semigroup method");
    r.register("uniformization", Arc::new(Uniformization::default()));
    r.register("montecarlo", Arc::new(MonteCarlo { samples, seed }));
    r
}

pub fn dual_semigroup_expect(
    x0: &LabeledTuple,
    f: &DualObservable<'_>,
    t: f64,
    params: &ModelParams,
    method: &dyn SemigroupMethod,
) -> Result<SemigroupEstimate> {
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!("time must be non-negative, got {t}")));
    }
    method.expect(x0, f, t, params)
}

/// `E_{η0}[[η_t]_x] = π(x) Ê_x[D(X_t, η0)]`.
pub fn expected_factorial_moment(
    eta0: &Configuration,
    x: &LabeledTuple,
    t: f64,
    params: &ModelParams,
    method: &dyn SemigroupMethod,
) -> Result<SemigroupEstimate> {
    let pi = pi_weight(x, params.interaction, params.alpha);
    if pi == 0.0 {
        return Err(Error::UndefinedInput("pi(x) = 0: tuple lies in the excluded set".into()));
    }
    let (interaction, alpha) = (params.interaction, params.alpha);
    let d = move |y: &LabeledTuple| duality_fn(y, eta0, interaction, alpha).unwrap_or(0.0);
    let est = dual_semigroup_expect(x, &d, t, params, method)?;
    Ok(SemigroupEstimate { value: pi * est.value, std_error: est.std_error.map(|s| pi * s), samples: est.samples })
}
