//! Higher-order fields `⟨G, X^{(k)N}⟩ = N^{-kd} Σ_x G(x/N) [η]_x`.
//!
//! The fast evaluator groups the tuple sum by coincidence pattern. Writing
//! `m_a(z)` for the single-site weight of a block of size `a` at `z`
//! (`(η(z))_a` for a configuration, `θ(z)^a π_a` for an expectation) and
//! `κ_a(z)` for the associated cumulants,
//!
//! ```text
//! Σ_x G(x) Π_z m_{n_z(x)}(z) = Σ_{Q partition of [k]} Π_{C ∈ Q} S(C),
//! S(C) = Σ_z κ_{|C|}(z) Π_{i ∈ C} g_i(z/N),
//! ```
//!
//! which costs `O(2^k N^d + Bell(k) k)` instead of `N^{kd}`.

mod carre;
mod coincidence;
mod fluctuation;
mod partition;
mod state;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{Configuration, LabeledTuple, ModelParams, Site, Torus};
use crate::measures::block_weight;
use crate::registry::Registry;
use crate::testfn::{ProductTestFunction, TestFunctionSum};

pub use carre::{carre_du_champ, carre_du_champ_bruteforce};
pub use coincidence::{
    check_product_expansion, coincidence_functions, eval_coincidence_term, expected_coincidence_term,
    ExpansionResidual,
};
pub use fluctuation::{equilibrium_field_mean, fluctuation_field_y, fluctuation_field_z};
pub use partition::{moments_to_cumulants, Compensated, PartitionPlan, MAX_ORDER};
pub use state::FieldState;

/// Largest order accepted by the fast evaluator.
pub const MAX_FAST_ORDER: usize = 6;
/// Default cap on the number of tuples visited by brute-force sums.
pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 100_000_000;

/// `[η]_x = η(x_1)(η(x_2) - 1{x_2 = x_1}) ⋯`.
pub fn falling_factorial_joint(eta: &Configuration, x: &LabeledTuple) -> u128 {
    let mut out: u128 = 1;
    for (i, s) in x.sites.iter().enumerate() {
        let before = x.sites[..i].iter().filter(|&t| t == s).count() as u128;
        let avail = eta.get(*s) as u128;
        if avail <= before {
            return 0;
        }
        out *= avail - before;
    }
    out
}

/// `(n)_a = n (n - 1) ⋯ (n - a + 1)` as a float.
pub fn falling_factorial(n: u32, a: usize) -> f64 {
    (0..a).map(|j| n as f64 - j as f64).product::<f64>().max(0.0)
}

/// Per-site weights `m_0 = 1, m_1, .., m_k` whose products over coincidence
/// blocks give the weight of a tuple.
pub trait MomentSource: Sync {
    fn num_sites(&self) -> usize;
    /// Writes `m_a(z)` for `a = 0..out.len()`.
    fn site_moments(&self, z: usize, out: &mut [f64]);
    /// Sites with `m_a(z) = 0` for every `a ≥ 1` may be skipped.
    fn is_vacant(&self, _z: usize) -> bool {
        false
    }

    /// `Π_{distinct sites z of x} m_{n_z}(z)`.
    fn tuple_weight(&self, x: &[usize]) -> f64 {
        let mut buf = vec![0.0; x.len() + 1];
        let mut w = 1.0;
        for (i, &z) in x.iter().enumerate() {
            if x[..i].contains(&z) {
                continue;
            }
            let n = x.iter().filter(|&&y| y == z).count();
            self.site_moments(z, &mut buf[..=n]);
            w *= buf[n];
            if w == 0.0 {
                return 0.0;
            }
        }
        w
    }
}

/// Falling factorials of a configuration.
pub struct ConfigurationMoments<'a>(pub &'a Configuration);

impl MomentSource for ConfigurationMoments<'_> {
    fn num_sites(&self) -> usize {
        self.0.len()
    }
    fn site_moments(&self, z: usize, out: &mut [f64]) {
        let n = self.0.occupancy()[z];
        let mut acc = 1.0;
        for (a, slot) in out.iter_mut().enumerate() {
            *slot = acc;
            acc *= n as f64 - a as f64;
            if acc < 0.0 {
                acc = 0.0;
            }
        }
    }
    fn is_vacant(&self, z: usize) -> bool {
        self.0.occupancy()[z] == 0
    }
}

/// Expected falling factorials under a product measure with site parameters
/// `θ(z/N)`: `m_a(z) = θ(z/N)^a π_a`.
pub struct ProfileMoments {
    theta: Vec<f64>,
    pi: Vec<f64>,
}

impl ProfileMoments {
    pub fn new(theta: Vec<f64>, sigma: i32, alpha: u32, max_order: usize) -> Self {
        let pi = (0..=max_order).map(|a| block_weight(sigma, alpha, a)).collect();
        Self { theta, pi }
    }

    pub fn constant(theta: f64, params: &ModelParams, max_order: usize) -> Self {
        Self::new(vec![theta; params.torus.num_sites()], params.sigma(), params.alpha, max_order)
    }
}

impl MomentSource for ProfileMoments {
    fn num_sites(&self) -> usize {
        self.theta.len()
    }
    fn site_moments(&self, z: usize, out: &mut [f64]) {
        assert!(out.len() <= self.pi.len(), "profile moments built for a lower order");
        let th = self.theta[z];
        let mut p = 1.0;
        for (a, slot) in out.iter_mut().enumerate() {
            *slot = p * self.pi[a];
            p *= th;
        }
    }
    fn is_vacant(&self, z: usize) -> bool {
        self.theta[z] == 0.0
    }
}

/// `N^{-kd}` for a torus.
pub fn field_norm(torus: &Torus, k: usize) -> f64 {
    (torus.num_sites() as f64).powi(-(k as i32))
}

/// `N^{-kd} Σ_x G(x/N) w(x)` by direct `k`-fold summation.
pub fn weighted_sum_bruteforce(
    g: &ProductTestFunction,
    torus: &Torus,
    source: &dyn MomentSource,
    cap: u128,
) -> Result<f64> {
    let k = g.order();
    let sites = torus.num_sites();
    let size = (sites as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::CapExceeded { what: "brute-force tuple sum", size, cap });
    }
    let tables = g.on_lattice(torus);
    let mut x = vec![0usize; k];
    let mut acc = Compensated::default();
    'outer: loop {
        let gv: f64 = (0..k).map(|i| tables[i][x[i]]).product();
        if gv != 0.0 {
            acc.add(gv * source.tuple_weight(&x));
        }
        for i in 0..k {
            x[i] += 1;
            if x[i] < sites {
                continue 'outer;
            }
            x[i] = 0;
        }
        break;
    }
    Ok(acc.value() * field_norm(torus, k))
}

/// Accumulators `S(C)` for every nonempty block bitmask `C`.
pub(crate) fn block_sums(tables: &[Vec<f64>], source: &dyn MomentSource) -> Vec<f64> {
    let k = tables.len();
    let nmask = 1usize << k;
    let mut acc = vec![Compensated::default(); nmask];
    let mut m = vec![0.0; k + 1];
    let mut kappa = vec![0.0; k + 1];
    let mut prod = vec![0.0; nmask];
    for z in 0..source.num_sites() {
        if source.is_vacant(z) {
            continue;
        }
        source.site_moments(z, &mut m);
        moments_to_cumulants(&m, &mut kappa);
        subset_products(tables, z, &mut prod);
        for mask in 1..nmask {
            acc[mask].add(kappa[mask.count_ones() as usize] * prod[mask]);
        }
    }
    let mut out: Vec<f64> = acc.iter().map(Compensated::value).collect();
    out[0] = 1.0;
    out
}

/// `prod[C] = Π_{i ∈ C} g_i(z)`.
pub(crate) fn subset_products(tables: &[Vec<f64>], z: usize, prod: &mut [f64]) {
    prod[0] = 1.0;
    for mask in 1..prod.len() {
        let low = mask.trailing_zeros() as usize;
        prod[mask] = prod[mask & (mask - 1)] * tables[low][z];
    }
}

/// `N^{-kd} Σ_x G(x/N) w(x)` by the partition algorithm.
pub fn weighted_sum_fast(g: &ProductTestFunction, torus: &Torus, source: &dyn MomentSource) -> Result<f64> {
    let k = g.order();
    if k > MAX_FAST_ORDER {
        return Err(Error::Unsupported(format!("fast field evaluation of order {k} > {MAX_FAST_ORDER}")));
    }
    let tables = g.on_lattice(torus);
    let s = block_sums(&tables, source);
    Ok(PartitionPlan::new(k).evaluate(&s) * field_norm(torus, k))
}

/// Strategy for evaluating `⟨G, X^{(k)N}⟩` on a configuration.
pub trait FieldEvaluator: Send + Sync {
    fn name(&self) -> &'static str;
    fn eval(&self, g: &ProductTestFunction, eta: &Configuration, torus: &Torus) -> Result<f64>;

    /// `N^{-kd} Σ_x G(x/N) θ^k π(x)` with site parameters `theta`.
    fn expected(&self, g: &ProductTestFunction, moments: &ProfileMoments, torus: &Torus) -> Result<f64>;
}

pub struct PartitionEvaluator;

pub struct BruteForceEvaluator {
    pub cap: u128,
}

impl Default for BruteForceEvaluator {
    fn default() -> Self {
        Self { cap: DEFAULT_BRUTE_FORCE_CAP }
    }
}

impl FieldEvaluator for PartitionEvaluator {
    fn name(&self) -> &'static str {
        "partition"
    }
    fn eval(&self, g: &ProductTestFunction, eta: &Configuration, torus: &Torus) -> Result<f64> {
        weighted_sum_fast(g, torus, &ConfigurationMoments(eta))
    }
    fn expected(&self, g: &ProductTestFunction, moments: &ProfileMoments, torus: &Torus) -> Result<f64> {
        weighted_sum_fast(g, torus, moments)
    }
}

impl FieldEvaluator for BruteForceEvaluator {
    fn name(&self) -> &'static str {
        "bruteforce"
    }
    fn eval(&self, g: &ProductTestFunction, eta: &Configuration, torus: &Torus) -> Result<f64> {
        weighted_sum_bruteforce(g, torus, &ConfigurationMoments(eta), self.cap)
    }
    fn expected(&self, g: &ProductTestFunction, moments: &ProfileMoments, torus: &Torus) -> Result<f64> {
        weighted_sum_bruteforce(g, torus, moments, self.cap)
    }
}

pub type EvaluatorRegistry = Registry<dyn FieldEvaluator>;

pub fn evaluator_registry() -> EvaluatorRegistry {
    let mut r = EvaluatorRegistry::new("field evaluator");
    r.register("partition", Arc::new(PartitionEvaluator));
    r.register("bruteforce", Arc::new(BruteForceEvaluator::default()));
    r
}

/// `⟨G, X^{(k)N}⟩` by direct summation.
pub fn eval_field_bruteforce(g: &ProductTestFunction, eta: &Configuration, torus: &Torus) -> Result<f64> {
    BruteForceEvaluator::default().eval(g, eta, torus)
}

/// `⟨G, X^{(k)N}⟩` by the partition algorithm.
pub fn eval_field(g: &ProductTestFunction, eta: &Configuration, torus: &Torus) -> Result<f64> {
    PartitionEvaluator.eval(g, eta, torus)
}

/// Field of a linear combination of product test functions.
pub fn eval_field_sum(g: &TestFunctionSum, eta: &Configuration, torus: &Torus) -> Result<f64> {
    let mut acc = Compensated::default();
    for (c, h) in &g.terms {
        acc.add(c * eval_field(h, eta, torus)?);
    }
    Ok(acc.value())
}

/// Helper used by tests and the exact engine: tuple as flat indices.
pub fn tuple_indices(x: &LabeledTuple) -> Vec<usize> {
    x.sites.iter().map(|s: &Site| s.0).collect()
}
