//! Reversible product measures `μ_θ` and slowly varying product profiles.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Configuration, Interaction, ModelParams, Torus};
use crate::rng::StreamKey;
use crate::testfn::{Factor, FactorRegistry, FactorSpec};

/// `π_a = α(α + σ)⋯(α + (a-1)σ)`, the weight of `a` coinciding labels.
pub fn block_weight(sigma: i32, alpha: u32, a: usize) -> f64 {
    (0..a).map(|j| alpha as f64 + sigma as f64 * j as f64).product()
}

/// Site marginal of `μ_θ`: Binomial(α, θ), Poisson(αθ) or Negative-Binomial
/// with mean `αθ` and variance `αθ(1 + θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub interaction: Interaction,
    pub alpha: u32,
    pub theta: f64,
}

pub fn check_theta(interaction: Interaction, theta: f64) -> Result<()> {
    let ok = theta.is_finite() && theta >= 0.0 && (interaction != Interaction::Exclusion || theta <= 1.0);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("theta={theta} outside the parameter range for {interaction:?}")))
    }
}

impl MarginalSpec {
    pub fn new(interaction: Interaction, alpha: u32, theta: f64) -> Result<Self> {
        if alpha == 0 {
            return Err(Error::InvalidParameter("alpha must be a positive integer".into()));
        }
        check_theta(interaction, theta)?;
        Ok(Self { interaction, alpha, theta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha as f64 * self.theta
    }

    pub fn variance(&self) -> f64 {
        self.mean() * (1.0 + self.interaction.sigma() as f64 * self.theta)
    }

    /// Draws one occupation number.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let alpha = self.alpha as f64;
        match self.interaction {
            Interaction::Exclusion => {
                let p = self.theta.clamp(0.0, 1.0);
                Binomial::new(self.alpha as u64, p).expect("valid binomial").sample(rng) as u32
            }
            Interaction::Independent => poisson(alpha * self.theta, rng),
            Interaction::Inclusion => {
                if self.theta == 0.0 {
                    return 0;
                }
                let lambda = Gamma::new(alpha, self.theta).expect("valid gamma").sample(rng);
                poisson(lambda, rng)
            }
        }
    }

    /// Probability of `n` particles at one site.
    pub fn weight(&self, n: u32) -> f64 {
        let alpha = self.alpha as f64;
        let th = self.theta;
        match self.interaction {
            Interaction::Exclusion => {
                if n > self.alpha {
                    0.0
                } else {
                    binomial_coefficient(alpha, n) * th.powi(n as i32) * (1.0 - th).powi((self.alpha - n) as i32)
                }
            }
            Interaction::Independent => (-alpha * th).exp() * (alpha * th).powi(n as i32) / factorial(n),
            Interaction::Inclusion => {
                let p = th / (1.0 + th);
                binomial_coefficient(alpha + n as f64 - 1.0, n) * p.powi(n as i32) * (1.0 - p).powf(alpha)
            }
        }
    }
}

fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let v: f64 = Poisson::new(lambda).expect("valid poisson").sample(rng);
    v as u32
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `C(a, n)` for real `a`.
fn binomial_coefficient(a: f64, n: u32) -> f64 {
    (0..n).map(|j| (a - j as f64) / (j + 1) as f64).product()
}

/// `E[(η)_r] = θ^r π_r` under the site marginal.
pub fn marginal_falling_moment(r: usize, spec: &MarginalSpec) -> f64 {
    spec.theta.powi(r as i32) * block_weight(spec.interaction.sigma(), spec.alpha, r)
}

/// Smooth density-parameter profile `θ(u) = base + Σ_j f_j(u)`.
#[derive(Debug, Clone)]
pub struct Profile {
    pub base: f64,
    pub terms: Vec<Arc<dyn Factor>>,
}

/// Config-file form of a [`Profile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default)]
    pub base: f64,
    #[serde(default)]
    pub terms: Vec<FactorSpec>,
}

impl ProfileSpec {
    pub fn constant(theta: f64) -> Self {
        Self { base: theta, terms: Vec::new() }
    }

    pub fn build(&self, registry: &FactorRegistry, d: usize) -> Result<Profile> {
        let terms = self.terms.iter().map(|t| t.build(registry, d)).collect::<Result<_>>()?;
        Ok(Profile { base: self.base, terms })
    }
}

impl Profile {
    pub fn constant(theta: f64) -> Self {
        Self { base: theta, terms: Vec::new() }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.family() == "constant")
    }

    pub fn theta(&self, u: &[f64]) -> f64 {
        self.base + self.terms.iter().map(|t| t.value(u)).sum::<f64>()
    }

    pub fn on_lattice(&self, torus: &Torus) -> Vec<f64> {
        torus.sites().map(|s| self.theta(&torus.position(s))).collect()
    }

    /// Checks the admissible range at every lattice site.
    pub fn validate(&self, params: &ModelParams) -> Result<Vec<f64>> {
        let values = self.on_lattice(&params.torus);
        for &v in &values {
            check_theta(params.interaction, v)?;
        }
        Ok(values)
    }
}

/// Independent site draws with parameter `θ(x/N)`; site `x` uses stream `x`
/// of `key`, so the result does not depend on visiting order.
pub fn sample_configuration(theta: &[f64], interaction: Interaction, alpha: u32, key: StreamKey) -> Result<Configuration> {
    let mut occ = Vec::with_capacity(theta.len());
    for (z, &th) in theta.iter().enumerate() {
        let spec = MarginalSpec::new(interaction, alpha, th)?;
        occ.push(spec.sample(&mut key.stream(z as u64)));
    }
    Ok(Configuration::from_occupancy(occ))
}

/// Draw from `μ_θ` for constant `θ`.
pub fn sample_equilibrium(params: &ModelParams, theta: f64, key: StreamKey) -> Result<Configuration> {
    sample_configuration(&vec![theta; params.torus.num_sites()], params.interaction, params.alpha, key)
}
