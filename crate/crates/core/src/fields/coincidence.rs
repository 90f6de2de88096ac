//! The coincidence terms `{G ⊗ H}^{(k+ℓ-h)}` of the product expansion
//! `⟨G, X^{(k)}⟩⟨H, X^{(ℓ)}⟩ = Σ_h N^{-hd} ⟨{G ⊗ H}^{(k+ℓ-h)}, X^{(k+ℓ-h)}⟩`.
//!
//! The term for a given `h` pairs `h` of the `y`-coordinates with distinct
//! `x`-coordinates. Each pairing `(J, i)` contributes an ordinary product
//! field of order `k + ℓ - h` whose factors are `g_m Π_{j : i_j = m} h_j` at
//! `x_m` and `h_j` at each free `y_j`.

use serde::{Deserialize, Serialize};

use super::{FieldEvaluator, ProfileMoments};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Torus};
use crate::testfn::{PointwiseProduct, ProductTestFunction};

/// Ordered selections of `h` distinct elements of `0..k`.
fn injections(h: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(h: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == h {
            out.push(cur.clone());
            return;
        }
        for m in 0..k {
            if !cur.contains(&m) {
                cur.push(m);
                rec(h, k, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(h, k, &mut Vec::with_capacity(h), &mut out);
    out
}

/// Product test functions whose fields sum to `⟨{G ⊗ H}^{(k+ℓ-h)}, X⟩`.
pub fn coincidence_functions(g: &ProductTestFunction, h: &ProductTestFunction, coincide: usize) -> Result<Vec<ProductTestFunction>> {
    let (k, l) = (g.order(), h.order());
    if l > k {
        return Err(Error::InvalidParameter(format!("product expansion needs l <= k, got k={k}, l={l}")));
    }
    if coincide > l {
        return Err(Error::InvalidParameter(format!("coincidence count {coincide} exceeds l={l}")));
    }
    let maps = injections(coincide, k);
    let mut out = Vec::new();
    for jmask in 0u32..(1 << l) {
        if jmask.count_ones() as usize != coincide {
            continue;
        }
        let members: Vec<usize> = (0..l).filter(|&j| jmask & (1 << j) != 0).collect();
        for map in &maps {
            let mut factors = Vec::with_capacity(k + l - coincide);
            for m in 0..k {
                let mut parts = vec![g.factors[m].clone()];
                for (pos, &j) in members.iter().enumerate() {
                    if map[pos] == m {
                        parts.push(h.factors[j].clone());
                    }
                }
                factors.push(PointwiseProduct::of(parts));
            }
            for j in (0..l).filter(|j| jmask & (1 << j) == 0) {
                factors.push(h.factors[j].clone());
            }
            out.push(ProductTestFunction::new(factors));
        }
    }
    Ok(out)
}

/// `⟨{G ⊗ H}^{(k+ℓ-h)}, X^{(k+ℓ-h)N}⟩` on a configuration.
pub fn eval_coincidence_term(
    g: &ProductTestFunction,
    h: &ProductTestFunction,
    coincide: usize,
    eta: &Configuration,
    torus: &Torus,
    evaluator: &dyn FieldEvaluator,
) -> Result<f64> {
    let mut acc = super::Compensated::default();
    for f in coincidence_functions(g, h, coincide)? {
        acc.add(evaluator.eval(&f, eta, torus)?);
    }
    Ok(acc.value())
}

/// Expectation of the coincidence term under a product measure.
pub fn expected_coincidence_term(
    g: &ProductTestFunction,
    h: &ProductTestFunction,
    coincide: usize,
    moments: &ProfileMoments,
    torus: &Torus,
    evaluator: &dyn FieldEvaluator,
) -> Result<f64> {
    let mut acc = super::Compensated::default();
    for f in coincidence_functions(g, h, coincide)? {
        acc.add(evaluator.expected(&f, moments, torus)?);
    }
    Ok(acc.value())
}

/// Both sides of an exact identity and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl ExpansionResidual {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, residual: (lhs - rhs).abs() }
    }

    /// `residual / (1 + |lhs|)`.
    pub fn relative(&self) -> f64 {
        self.residual / (1.0 + self.lhs.abs())
    }
}

/// Residual of the per-configuration product expansion.
pub fn check_product_expansion(
    g: &ProductTestFunction,
    h: &ProductTestFunction,
    eta: &Configuration,
    torus: &Torus,
    evaluator: &dyn FieldEvaluator,
) -> Result<ExpansionResidual> {
    let (g, h) = if h.order() > g.order() { (h, g) } else { (g, h) };
    let lhs = evaluator.eval(g, eta, torus)? * evaluator.eval(h, eta, torus)?;
    let nd = torus.num_sites() as f64;
    let mut rhs = super::Compensated::default();
    for c in 0..=h.order() {
        rhs.add(nd.powi(-(c as i32)) * eval_coincidence_term(g, h, c, eta, torus, evaluator)?);
    }
    Ok(ExpansionResidual::new(lhs, rhs.value()))
}
