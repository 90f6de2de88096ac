use super::{eval_field, weighted_sum_fast, Compensated, ProfileMoments};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, ModelParams};
use crate::testfn::ProductTestFunction;

/// `E_{μ_θ}[⟨G, X^{(k)N}⟩] = N^{-kd} Σ_x G(x/N) θ^k π(x)`.
pub fn equilibrium_field_mean(g: &ProductTestFunction, params: &ModelParams, theta: f64) -> Result<f64> {
    let moments = ProfileMoments::constant(theta, params, g.order());
    weighted_sum_fast(g, &params.torus, &moments)
}

/// `⟨G, Y^{(k,θ)N}⟩ = N^{d/2}(⟨G, X^{(k)N}⟩ - E_{μ_θ}[⟨G, X^{(k)N}⟩])`.
pub fn fluctuation_field_y(g: &ProductTestFunction, eta: &Configuration, params: &ModelParams, theta: f64) -> Result<f64> {
    let torus = &params.torus;
    let field = eval_field(g, eta, torus)?;
    let mean = equilibrium_field_mean(g, params, theta)?;
    Ok((torus.num_sites() as f64).sqrt() * (field - mean))
}

/// `⟨G, Z^{(k,θ)N}⟩ = N^{kd/2} Σ_ℓ C(k,ℓ)(-θ)^{k-ℓ} ⟨K^{(k:ℓ)N} G, X^{(ℓ)N}⟩` for `k ≤ 2`.
pub fn fluctuation_field_z(g: &ProductTestFunction, eta: &Configuration, params: &ModelParams, theta: f64) -> Result<f64> {
    let torus = &params.torus;
    let nd = torus.num_sites() as f64;
    let alpha = params.alpha as f64;
    let sigma = params.sigma() as f64;
    match g.order() {
        1 => {
            let table = g.factors[0].on_lattice(torus);
            let k10: f64 = table.iter().map(|v| v * alpha).collect::<Compensated>().value() / nd;
            let field = eval_field(g, eta, torus)?;
            Ok(nd.sqrt() * (field - theta * k10))
        }
        2 => {
            let g1 = g.factors[0].on_lattice(torus);
            let g2 = g.factors[1].on_lattice(torus);
            let sym = |x: usize, y: usize| 0.5 * (g1[x] * g2[y] + g2[x] * g1[y]);
            let sites = torus.num_sites();
            let mut k21 = vec![0.0; sites];
            let mut k20 = Compensated::default();
            for (x, slot) in k21.iter_mut().enumerate() {
                let mut row = Compensated::default();
                for y in 0..sites {
                    let ratio = alpha + if y == x { sigma } else { 0.0 };
                    row.add(sym(x, y) * ratio);
                }
                *slot = row.value() / nd;
                k20.add(alpha * row.value());
            }
            let k20 = k20.value() / (nd * nd);
            let first: f64 = eta
                .occupancy()
                .iter()
                .zip(&k21)
                .map(|(&n, &v)| n as f64 * v)
                .collect::<Compensated>()
                .value()
                / nd;
            let second = eval_field(g, eta, torus)?;
            Ok(nd * (second - 2.0 * theta * first + theta * theta * k20))
        }
        k => Err(Error::Unsupported(format!("Z-field of order {k}; only k <= 2 is implemented"))),
    }
}
