use serde::{Deserialize, Serialize};

use super::{Factor, ProductTestFunction};
use crate::lattice::{LabeledTuple, ModelParams, Site, Torus};

/// `A^{(k)N} G(·/N)(x)`: the dual generator applied to `G` sampled on the lattice.
///
/// Label `i` jumps along each directed edge `x_i -> y` at rate
/// `(N²/2)(α + σ #{j ≠ i : x_j = y})`.
pub fn discrete_generator_apply(g: &ProductTestFunction, x: &LabeledTuple, params: &ModelParams) -> f64 {
    let torus = &params.torus;
    assert_eq!(g.order(), x.len(), "tuple length must match the order of G");
    let values: Vec<f64> =
        g.factors.iter().zip(&x.sites).map(|(f, &s)| f.value(&torus.position(s))).collect();
    let base: f64 = values.iter().product();
    let scale = params.rate_scale();
    let mut acc = 0.0;
    for (i, &xi) in x.sites.iter().enumerate() {
        let others: f64 = values.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).product();
        for y in torus.neighbors(xi) {
            let stacked = x.sites.iter().enumerate().filter(|&(j, &s)| j != i && s == y).count();
            let rate = scale * params.target_factor(stacked as u32) as f64;
            if rate == 0.0 {
                continue;
            }
            let moved = g.factors[i].value(&torus.position(y)) * others;
            acc += rate * (moved - base);
        }
    }
    acc
}

/// `Σ_i (α/2) Δ_i G(u)` for product `G`.
pub fn continuum_generator_apply(g: &ProductTestFunction, u: &[Vec<f64>], alpha: f64) -> f64 {
    assert_eq!(g.order(), u.len());
    let values: Vec<f64> = g.factors.iter().zip(u).map(|(f, p)| f.value(p)).collect();
    (0..g.order())
        .map(|i| {
            let others: f64 =
                values.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).product();
            0.5 * alpha * g.factors[i].laplacian(&u[i]) * others
        })
        .sum()
}

/// `N (g(x_j/N) - g(x_i/N)) 1{x_i ~ x_j}`.
pub fn discrete_gradient_pair(g: &dyn Factor, xi: Site, xj: Site, torus: &Torus) -> f64 {
    if !torus.are_neighbors(xi, xj) {
        return 0.0;
    }
    let n = torus.side() as f64;
    n * (g.value(&torus.position(xj)) - g.value(&torus.position(xi)))
}

/// Size of `f_i = 𝒜^{(1)N} g_i - (α/2) Δ g_i` on the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorGap {
    /// `max_i sup_x |f_i(x/N)|`.
    pub sup: f64,
    /// `max_i N^{-d} Σ_x |f_i(x/N)|`.
    pub l1: f64,
    /// `(sup, l1)` for each factor separately.
    pub per_factor: Vec<(f64, f64)>,
}

pub fn generator_consistency_gap(g: &ProductTestFunction, params: &ModelParams) -> GeneratorGap {
    let torus = &params.torus;
    let alpha = params.alpha as f64;
    let scale = params.rate_scale() * alpha;
    let nb = torus.neighbor_table();
    let deg = 2 * torus.dim();
    let mut per_factor = Vec::with_capacity(g.order());
    for f in &g.factors {
        let table = f.on_lattice(torus);
        let (mut sup, mut sum) = (0.0f64, 0.0);
        for s in torus.sites() {
            let here = table[s.0];
            let discrete: f64 = nb[deg * s.0..deg * (s.0 + 1)].iter().map(|&y| table[y] - here).sum::<f64>() * scale;
            let continuum = 0.5 * alpha * f.laplacian(&torus.position(s));
            let gap = (discrete - continuum).abs();
            sup = sup.max(gap);
            sum += gap;
        }
        per_factor.push((sup, sum / torus.num_sites() as f64));
    }
    GeneratorGap {
        sup: per_factor.iter().map(|p| p.0).fold(0.0, f64::max),
        l1: per_factor.iter().map(|p| p.1).fold(0.0, f64::max),
        per_factor,
    }
}
