//! Smooth periodic test functions on the macroscopic torus and the discrete
//! operators that act on them.

mod discrete;
pub mod families;

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lattice::{Site, Torus};
use crate::registry::Registry;

pub use discrete::{
    continuum_generator_apply, discrete_generator_apply, discrete_gradient_pair,
    generator_consistency_gap, GeneratorGap,
};

/// One smooth periodic function on `[0,1)^d` with exact derivatives.
pub trait Factor: Send + Sync + Debug {
    fn family(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn value(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64]) -> Vec<f64>;
    fn laplacian(&self, u: &[f64]) -> f64;

    /// Values at every lattice site `x/N`, indexed by flat site index.
    fn on_lattice(&self, torus: &Torus) -> Vec<f64> {
        torus.sites().map(|s| self.value(&torus.position(s))).collect()
    }
}

/// Constructs factors of one family from JSON parameters.
pub trait FactorFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, params: &Value, d: usize) -> Result<Arc<dyn Factor>>;
}

pub type FactorRegistry = Registry<dyn FactorFamily>;

pub fn factor_registry() -> FactorRegistry {
    let mut r = FactorRegistry::new("test-function family");
    let families: [Arc<dyn FactorFamily>; 4] = [
        Arc::new(families::ConstantFamily),
        Arc::new(families::TrigFamily),
        Arc::new(families::BumpFamily),
        Arc::new(families::HermiteFamily),
    ];
    for f in families {
        r.register(f.name(), f);
    }
    r
}

/// Config-file description of one factor: a family name plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub family: String,
    #[serde(default)]
    pub params: Value,
}

impl FactorSpec {
    pub fn new(family: &str, params: Value) -> Self {
        Self { family: family.to_string(), params }
    }

    pub fn build(&self, registry: &FactorRegistry, d: usize) -> Result<Arc<dyn Factor>> {
        registry.get(&self.family)?.build(&self.params, d)
    }
}

/// `G = g_1 ⊗ .. ⊗ g_k`.
#[derive(Debug, Clone)]
pub struct ProductTestFunction {
    pub factors: Vec<Arc<dyn Factor>>,
}

impl ProductTestFunction {
    pub fn new(factors: Vec<Arc<dyn Factor>>) -> Self {
        Self { factors }
    }

    pub fn from_specs(specs: &[FactorSpec], registry: &FactorRegistry, d: usize) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidParameter("test function needs at least one factor".into()));
        }
        let factors = specs.iter().map(|s| s.build(registry, d)).collect::<Result<_>>()?;
        Ok(Self { factors })
    }

    /// `k` copies of the same factor.
    pub fn power(f: Arc<dyn Factor>, k: usize) -> Self {
        Self { factors: vec![f; k] }
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn value(&self, points: &[Vec<f64>]) -> f64 {
        assert_eq!(points.len(), self.order());
        self.factors.iter().zip(points).map(|(g, u)| g.value(u)).product()
    }

    /// `G(x/N)` for a tuple of lattice sites.
    pub fn at_sites(&self, torus: &Torus, x: &[Site]) -> f64 {
        assert_eq!(x.len(), self.order());
        self.factors.iter().zip(x).map(|(g, &s)| g.value(&torus.position(s))).product()
    }

    /// Per-factor lattice tables.
    pub fn on_lattice(&self, torus: &Torus) -> Vec<Vec<f64>> {
        self.factors.iter().map(|g| g.on_lattice(torus)).collect()
    }

    /// Reorders factors: entry `i` of the result is factor `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { factors: perm.iter().map(|&p| self.factors[p].clone()).collect() }
    }

    /// `G ⊗ H`.
    pub fn tensor(&self, other: &Self) -> Self {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Self { factors }
    }

    fn identity_key(&self) -> Vec<usize> {
        self.factors.iter().map(|f| Arc::as_ptr(f) as *const () as usize).collect()
    }
}

/// Pointwise product `u ↦ Π_p f_p(u)` of factors sharing one argument.
#[derive(Debug, Clone)]
pub struct PointwiseProduct {
    pub parts: Vec<Arc<dyn Factor>>,
}

impl PointwiseProduct {
    /// Collapses to the single part when there is only one.
    pub fn of(parts: Vec<Arc<dyn Factor>>) -> Arc<dyn Factor> {
        assert!(!parts.is_empty(), "empty pointwise product");
        if parts.len() == 1 {
            parts.into_iter().next().unwrap()
        } else {
            Arc::new(Self { parts })
        }
    }

    fn others(values: &[f64], skip: &[usize]) -> f64 {
        values.iter().enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, v)| v).product()
    }
}

impl Factor for PointwiseProduct {
    fn family(&self) -> &'static str {
        "product"
    }
    fn dim(&self) -> usize {
        self.parts[0].dim()
    }
    fn value(&self, u: &[f64]) -> f64 {
        self.parts.iter().map(|f| f.value(u)).product()
    }
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let values: Vec<f64> = self.parts.iter().map(|f| f.value(u)).collect();
        let mut out = vec![0.0; u.len()];
        for (p, f) in self.parts.iter().enumerate() {
            let w = Self::others(&values, &[p]);
            for (o, g) in out.iter_mut().zip(f.gradient(u)) {
                *o += w * g;
            }
        }
        out
    }
    fn laplacian(&self, u: &[f64]) -> f64 {
        let values: Vec<f64> = self.parts.iter().map(|f| f.value(u)).collect();
        let grads: Vec<Vec<f64>> = self.parts.iter().map(|f| f.gradient(u)).collect();
        let mut out = 0.0;
        for (p, f) in self.parts.iter().enumerate() {
            out += f.laplacian(u) * Self::others(&values, &[p]);
            for q in 0..self.parts.len() {
                if q != p {
                    let dot: f64 = grads[p].iter().zip(&grads[q]).map(|(a, b)| a * b).sum();
                    out += dot * Self::others(&values, &[p, q]);
                }
            }
        }
        out
    }
}

/// Finite linear combination of product test functions of a common order.
#[derive(Debug, Clone)]
pub struct TestFunctionSum {
    pub terms: Vec<(f64, ProductTestFunction)>,
}

impl TestFunctionSum {
    pub fn single(g: ProductTestFunction) -> Self {
        Self { terms: vec![(1.0, g)] }
    }

    pub fn order(&self) -> Option<usize> {
        self.terms.first().map(|(_, g)| g.order())
    }

    pub fn at_sites(&self, torus: &Torus, x: &[Site]) -> f64 {
        self.terms.iter().map(|(c, g)| c * g.at_sites(torus, x)).sum()
    }

    /// `G^sym = (1/k!) Σ_ς G∘ς`, with terms built from identical factor
    /// sequences merged.
    pub fn symmetrize(&self) -> Result<Self> {
        let k = self.order().unwrap_or(0);
        if k > 6 {
            return Err(Error::Unsupported(format!("symmetrisation of order {k} > 6")));
        }
        if self.terms.iter().any(|(_, g)| g.order() != k) {
            return Err(Error::InvalidParameter("terms of mixed order".into()));
        }
        let perms = permutations(k);
        let weight = 1.0 / perms.len() as f64;
        let mut out: Vec<(f64, ProductTestFunction)> = Vec::new();
        let mut keys: Vec<Vec<usize>> = Vec::new();
        for (c, g) in &self.terms {
            for p in &perms {
                let h = g.permuted(p);
                let key = h.identity_key();
                match keys.iter().position(|k| *k == key) {
                    Some(i) => out[i].0 += c * weight,
                    None => {
                        keys.push(key);
                        out.push((c * weight, h));
                    }
                }
            }
        }
        Ok(Self { terms: out })
    }
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}
