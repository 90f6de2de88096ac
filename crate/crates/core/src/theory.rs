//! Closed-form scaling-limit targets.
//!
//! Continuum integrals over `[0,1)^d` use the trapezoid rule on a uniform
//! periodic grid, which is spectrally accurate for smooth periodic
//! integrands (and exact for trigonometric polynomials of low degree).

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fields::{expected_coincidence_term, ExpansionResidual, FieldEvaluator, PartitionEvaluator, ProfileMoments};
use crate::lattice::{Interaction, ModelParams, Torus};
use crate::measures::Profile;
use crate::testfn::{Factor, ProductTestFunction};

/// Uniform periodic grid on `[0,1)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadrature {
    pub d: usize,
    pub per_axis: usize,
}

impl Quadrature {
    /// `2^12` points in one dimension, fewer per axis in higher dimensions.
    pub fn for_dim(d: usize) -> Self {
        let per_axis = match d {
            1 => 4096,
            2 => 256,
            3 => 64,
            _ => 16,
        };
        Self { d, per_axis }
    }

    pub fn len(&self) -> usize {
        self.per_axis.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let h = 1.0 / self.per_axis as f64;
        let mut rest = idx;
        (0..self.d)
            .map(|_| {
                let c = rest % self.per_axis;
                rest /= self.per_axis;
                c as f64 * h
            })
            .collect()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = crate::fields::Compensated::default();
        for i in 0..self.len() {
            acc.add(f(&self.point(i)));
        }
        acc.value() / self.len() as f64
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }
}

/// In-place `d`-dimensional DFT on an `n^d` array (first axis fastest).
fn fft_nd(data: &mut [Complex64], n: usize, d: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut stride = 1;
    for _ in 0..d {
        let block = stride * n;
        for start in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + offset + j * stride];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    data[start + offset + j * stride] = *v;
                }
            }
        }
        stride *= n;
    }
}

/// Signed frequency of DFT index `j` on `n` points.
fn frequency(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Fourier representation of `ρ(0,·) = α θ0(·)` evolved by `∂_t ρ = (α/2) Δρ`.
#[derive(Debug, Clone)]
pub struct HeatProfile {
    quad: Quadrature,
    coeffs: Vec<Complex64>,
    pub diffusivity: f64,
}

impl HeatProfile {
    pub fn new(theta0: &Profile, alpha: f64, d: usize) -> Self {
        let quad = Quadrature::for_dim(d);
        let mut data: Vec<Complex64> =
            quad.sample(|u| alpha * theta0.theta(u)).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut data, quad.per_axis, d, false);
        let scale = 1.0 / quad.len() as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
        Self { quad, coeffs: data, diffusivity: 0.5 * alpha }
    }

    fn mode(&self, idx: usize) -> Vec<i64> {
        let n = self.quad.per_axis;
        let mut rest = idx;
        (0..self.quad.d)
            .map(|_| {
                let c = rest % n;
                rest /= n;
                frequency(c, n)
            })
            .collect()
    }

    fn decay(&self, m: &[i64], t: f64) -> f64 {
        let m2: f64 = m.iter().map(|&v| (v * v) as f64).sum();
        (-self.diffusivity * 4.0 * std::f64::consts::PI.powi(2) * m2 * t).exp()
    }

    /// `ρ(t, u)`.
    pub fn value(&self, t: f64, u: &[f64]) -> f64 {
        let cutoff = 1e-16 * self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut acc = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.norm() <= cutoff {
                continue;
            }
            let m = self.mode(i);
            let phase: f64 = std::f64::consts::TAU * m.iter().zip(u).map(|(&k, &x)| k as f64 * x).sum::<f64>();
            acc += self.decay(&m, t) * (c * Complex64::from_polar(1.0, phase)).re;
        }
        acc
    }

    /// `ρ(t, ·)` on the quadrature grid.
    pub fn on_grid(&self, t: f64) -> Vec<f64> {
        let mut data: Vec<Complex64> =
            self.coeffs.iter().enumerate().map(|(i, c)| c * self.decay(&self.mode(i), t)).collect();
        fft_nd(&mut data, self.quad.per_axis, self.quad.d, true);
        data.into_iter().map(|c| c.re).collect()
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quad
    }
}

/// `ρ(t, u)` for initial density `α θ0`.
pub fn heat_solution(theta0: &Profile, t: f64, u: &[f64], alpha: f64) -> f64 {
    HeatProfile::new(theta0, alpha, u.len()).value(t, u)
}

/// `⟨G, γ^{(k)}_t⟩ = Π_i ∫ g_i(u) ρ(t,u) du`.
pub fn hydro_prediction(g: &ProductTestFunction, t: f64, theta0: &Profile, alpha: f64, d: usize) -> f64 {
    let heat = HeatProfile::new(theta0, alpha, d);
    let quad = heat.quadrature();
    let rho = heat.on_grid(t);
    g.factors
        .iter()
        .map(|f| {
            let vals = quad.sample(|u| f.value(u));
            vals.iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>() / quad.len() as f64
        })
        .product()
}

fn integral(f: &dyn Factor, quad: &Quadrature) -> f64 {
    quad.integrate(|u| f.value(u))
}

fn integral_pair(f: &dyn Factor, g: &dyn Factor, quad: &Quadrature) -> f64 {
    quad.integrate(|u| f.value(u) * g.value(u))
}

fn integral_gradients(f: &dyn Factor, g: &dyn Factor, quad: &Quadrature) -> f64 {
    quad.integrate(|u| f.gradient(u).iter().zip(g.gradient(u)).map(|(a, b)| a * b).sum())
}

fn mobility(interaction: Interaction, theta: f64) -> f64 {
    theta * (1.0 + interaction.sigma() as f64 * theta)
}

fn dim_of(g: &ProductTestFunction) -> usize {
    g.factors.first().map_or(1, |f| f.dim())
}

/// Generic `Σ_{i,j} pair(g_i, h_j) Π_{l≠i} αθ∫g_l Π_{l'≠j} αθ∫h_l'`.
fn double_sum(g: &ProductTestFunction, h: &ProductTestFunction, alpha: f64, theta: f64, pair: impl Fn(&dyn Factor, &dyn Factor) -> f64) -> f64 {
    let quad = Quadrature::for_dim(dim_of(g));
    let gi: Vec<f64> = g.factors.iter().map(|f| alpha * theta * integral(f.as_ref(), &quad)).collect();
    let hj: Vec<f64> = h.factors.iter().map(|f| alpha * theta * integral(f.as_ref(), &quad)).collect();
    let without = |v: &[f64], skip: usize| -> f64 {
        v.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, x)| x).product()
    };
    let mut acc = 0.0;
    for i in 0..g.order() {
        let wi = without(&gi, i);
        for j in 0..h.order() {
            acc += pair(g.factors[i].as_ref(), h.factors[j].as_ref()) * wi * without(&hj, j);
        }
    }
    acc
}

/// Limiting covariance of `⟨G, Y⟩` and `⟨H, Y⟩` under `μ_θ`.
pub fn equilibrium_covariance(g: &ProductTestFunction, h: &ProductTestFunction, interaction: Interaction, alpha: u32, theta: f64) -> f64 {
    let a = alpha as f64;
    let m = mobility(interaction, theta);
    let quad = Quadrature::for_dim(dim_of(g));
    double_sum(g, h, a, theta, |f, k| a * m * integral_pair(f, k, &quad))
}

/// Limiting quadratic variation rate of the martingale of `⟨G, Y⟩`.
pub fn quadratic_variation_u(g: &ProductTestFunction, interaction: Interaction, alpha: u32, theta: f64) -> f64 {
    let a = alpha as f64;
    let m = mobility(interaction, theta);
    let quad = Quadrature::for_dim(dim_of(g));
    double_sum(g, g, a, theta, |f, k| a * a * m * integral_gradients(f, k, &quad))
}

fn ordered<'a>(g: &'a ProductTestFunction, h: &'a ProductTestFunction) -> (&'a ProductTestFunction, &'a ProductTestFunction) {
    if h.order() <= g.order() {
        (g, h)
    } else {
        (h, g)
    }
}

/// Exact finite-`N` covariance `E_{μ_θ}[⟨G, Y⟩⟨H, Y⟩]`.
pub fn stationary_cov_finite_n(g: &ProductTestFunction, h: &ProductTestFunction, params: &ModelParams, theta: f64) -> Result<f64> {
    let (g, h) = ordered(g, h);
    let torus = &params.torus;
    let nd = torus.num_sites() as f64;
    let moments = ProfileMoments::constant(theta, params, g.order() + h.order());
    let x = -(params.sigma() as f64) * theta;
    let mut acc = 0.0;
    for c in 1..=h.order() {
        let weight = 1.0 - x.powi(c as i32);
        if weight == 0.0 {
            continue;
        }
        let e = expected_coincidence_term(g, h, c, &moments, torus, &PartitionEvaluator)?;
        acc += weight * nd.powi(-(c as i32)) * e;
    }
    Ok(nd * acc)
}

/// Residual of `E[⟨G,X⟩]E[⟨H,X⟩] = Σ_h (-σθ)^h N^{-hd} E[⟨{G⊗H}^{(k+ℓ-h)}, X⟩]`.
pub fn check_expectation_expansion(
    g: &ProductTestFunction,
    h: &ProductTestFunction,
    params: &ModelParams,
    theta: f64,
    evaluator: &dyn FieldEvaluator,
) -> Result<ExpansionResidual> {
    let (g, h) = ordered(g, h);
    let torus = &params.torus;
    let moments = ProfileMoments::constant(theta, params, g.order() + h.order());
    let lhs = evaluator.expected(g, &moments, torus)? * evaluator.expected(h, &moments, torus)?;
    let nd = torus.num_sites() as f64;
    let x = -(params.sigma() as f64) * theta;
    let mut rhs = 0.0;
    for c in 0..=h.order() {
        let w = x.powi(c as i32);
        if w == 0.0 {
            continue;
        }
        rhs += w * nd.powi(-(c as i32)) * expected_coincidence_term(g, h, c, &moments, torus, evaluator)?;
    }
    Ok(ExpansionResidual::new(lhs, rhs))
}

/// `E[⟨G, X^{(k)N}⟩]` under the product measure with site parameters `θ0(x/N)`.
pub fn expected_field_under_profile(g: &ProductTestFunction, theta0: &Profile, params: &ModelParams) -> Result<f64> {
    let theta = theta0.validate(params)?;
    let moments = ProfileMoments::new(theta, params.sigma(), params.alpha, g.order());
    PartitionEvaluator.expected(g, &moments, &params.torus)
}

/// `E[⟨g, X^{(1)N}_t⟩]` from the profile measure, exact at finite `N`:
/// the mean density follows the discrete heat semigroup `e^{t (α/2) Δ_N}`.
pub fn finite_n_first_order_mean(g: &dyn Factor, theta0: &Profile, params: &ModelParams, t: f64) -> Result<f64> {
    let torus: &Torus = &params.torus;
    let n = torus.side();
    let d = torus.dim();
    let alpha = params.alpha as f64;
    if t < 0.0 {
        return Err(Error::InvalidParameter("time must be non-negative".into()));
    }
    let mut data: Vec<Complex64> =
        theta0.on_lattice(torus).into_iter().map(|v| Complex64::new(alpha * v, 0.0)).collect();
    fft_nd(&mut data, n, d, false);
    let scale = params.rate_scale() * alpha;
    for (idx, c) in data.iter_mut().enumerate() {
        let mut rest = idx;
        let mut eig = 0.0;
        for _ in 0..d {
            let m = rest % n;
            rest /= n;
            eig += 2.0 * (std::f64::consts::TAU * m as f64 / n as f64).cos() - 2.0;
        }
        *c *= (scale * eig * t).exp();
    }
    fft_nd(&mut data, n, d, true);
    let sites = torus.num_sites() as f64;
    let gv = g.on_lattice(torus);
    Ok(data.iter().zip(&gv).map(|(r, gx)| r.re / sites * gx).sum::<f64>() / sites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::families::{Constant, Trig};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn sin_profile(c: f64, eps: f64) -> Profile {
        Profile { base: c, terms: vec![Arc::new(Trig { amplitude: eps, mode: vec![1], phase: -PI / 2.0, offset: 0.0 })] }
    }

    #[test]
    fn heat_single_mode() {
        let p = sin_profile(0.4, 0.1);
        for &(alpha, t) in &[(1.0, 0.0), (1.0, 0.05), (2.0, 0.1), (3.0, 0.02)] {
            let heat = HeatProfile::new(&p, alpha, 1);
            for u in [0.0, 0.13, 0.25, 0.6] {
                let want = alpha * 0.4 + alpha * 0.1 * (-2.0 * alpha * PI * PI * t).exp() * (2.0 * PI * u).sin();
                assert!((heat.value(t, &[u]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heat_conserves_mass_and_relaxes() {
        let p = sin_profile(0.4, 0.3);
        let heat = HeatProfile::new(&p, 1.0, 1);
        let mass = |t: f64| heat.on_grid(t).iter().sum::<f64>() / 4096.0;
        assert!((mass(0.0) - 0.4).abs() < 1e-14);
        assert!((mass(0.7) - 0.4).abs() < 1e-14);
        assert!((heat.value(50.0, &[0.3]) - 0.4).abs() < 1e-14);
    }

    #[test]
    fn limit_examples() {
        let s = ProductTestFunction::new(vec![Arc::new(Trig::sin(1))]);
        let c = equilibrium_covariance(&s, &s, Interaction::Independent, 1, 0.5);
        assert!((c - 0.25).abs() < 1e-13);
        let u = quadratic_variation_u(&s, Interaction::Independent, 1, 0.5);
        assert!((u - PI * PI).abs() < 1e-11);
        assert_eq!(quadratic_variation_u(&s, Interaction::Exclusion, 1, 1.0), 0.0);
        let one = ProductTestFunction::new(vec![Arc::new(Constant { value: 1.0, d: 1 })]);
        assert_eq!(quadratic_variation_u(&one, Interaction::Inclusion, 2, 0.3), 0.0);
        let h = hydro_prediction(&s, 0.05, &sin_profile(0.5, 0.2), 1.0, 1);
        assert!((h - 0.2 * (-2.0 * PI * PI * 0.05f64).exp() / 2.0).abs() < 1e-13);
    }
}
