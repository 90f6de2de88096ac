//! Small-system exact engine: enumerated state spaces, sparse generators,
//! uniformization, and the matrix forms of duality and detailed balance.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::dual::{duality_fn, pi_weight};
use crate::error::{Error, Result};
use crate::fields::falling_factorial_joint;
use crate::lattice::{Configuration, LabeledTuple, ModelParams, Site, Torus};
use crate::measures::MarginalSpec;

pub const DEFAULT_STATE_CAP: usize = 200_000;
/// Truncation target for the Poisson series in [`evolve`].
pub const UNIFORMIZATION_TOL: f64 = 1e-13;

/// Bijection between a finite list of states and `0..len`.
#[derive(Debug, Clone)]
pub struct StateIndex<S> {
    states: Vec<S>,
    index: HashMap<S, usize>,
}

impl<S: Clone + Eq + Hash> StateIndex<S> {
    pub fn from_states(states: Vec<S>) -> Self {
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { states, index }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &S {
        &self.states[i]
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }
}

fn binomial_u128(n: u128, k: u128) -> u128 {
    let mut r: u128 = 1;
    for j in 0..k {
        r = r.saturating_mul(n - j) / (j + 1);
    }
    r
}

/// All configurations with `n` particles (respecting the exclusion cap).
pub fn enumerate_sector(torus: &Torus, n: u32, params: &ModelParams, cap: usize) -> Result<StateIndex<Vec<u32>>> {
    let sites = torus.num_sites();
    let bound = binomial_u128((n as u128) + sites as u128 - 1, sites as u128 - 1);
    if params.occupancy_cap().is_none() && bound > cap as u128 {
        return Err(Error::CapExceeded { what: "configuration sector", size: bound, cap: cap as u128 });
    }
    let max_site = params.occupancy_cap().unwrap_or(n).min(n);
    let mut out = Vec::new();
    let mut cur = vec![0u32; sites];
    fn rec(pos: usize, left: u32, max_site: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>, cap: usize) -> Result<()> {
        if pos + 1 == cur.len() {
            if left <= max_site {
                cur[pos] = left;
                if out.len() >= cap {
                    return Err(Error::CapExceeded { what: "configuration sector", size: cap as u128 + 1, cap: cap as u128 });
                }
                out.push(cur.clone());
            }
            return Ok(());
        }
        for v in 0..=left.min(max_site) {
            cur[pos] = v;
            rec(pos + 1, left - v, max_site, cur, out, cap)?;
        }
        cur[pos] = 0;
        Ok(())
    }
    rec(0, n, max_site, &mut cur, &mut out, cap)?;
    Ok(StateIndex::from_states(out))
}

/// All admissible `k`-tuples of sites.
pub fn enumerate_tuples(torus: &Torus, k: usize, params: &ModelParams, cap: usize) -> Result<StateIndex<Vec<usize>>> {
    let sites = torus.num_sites();
    let size = (sites as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if size > cap as u128 {
        return Err(Error::CapExceeded { what: "dual state space", size, cap: cap as u128 });
    }
    let mut out = Vec::new();
    let mut x = vec![0usize; k];
    'outer: loop {
        let t = LabeledTuple::from_indices(&x);
        if t.is_admissible(params.interaction, params.alpha) {
            out.push(x.clone());
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
    Ok(StateIndex::from_states(out))
}

/// Conservative generator: non-negative off-diagonal rows plus diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGenerator {
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl SparseGenerator {
    fn from_rows(mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut diag = Vec::with_capacity(rows.len());
        for row in rows.iter_mut() {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, r) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += r,
                    _ => merged.push((j, r)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            diag.push(-merged.iter().map(|e| e.1).sum::<f64>());
            *row = merged;
        }
        Self { rows, diag }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().map(|d| -d).fold(0.0, f64::max)
    }

    /// Largest `|Σ_j Q(i,j)|`.
    pub fn max_row_sum(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.diag)
            .map(|(r, d)| (r.iter().map(|e| e.1).sum::<f64>() + d).abs())
            .fold(0.0, f64::max)
    }

    /// `Q v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.diag)
            .enumerate()
            .map(|(i, (r, d))| d * v[i] + r.iter().map(|&(j, q)| q * v[j]).sum::<f64>())
            .collect()
    }

    /// `μ^T Q`.
    pub fn apply_transpose(&self, mu: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.diag.iter().zip(mu).map(|(d, m)| d * m).collect();
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, q) in r {
                out[j] += mu[i] * q;
            }
        }
        out
    }

    /// Dense copy, row-major (oracle support).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            for &(j, q) in &self.rows[i] {
                m[i][j] += q;
            }
        }
        m
    }
}

/// Test fixture: multiplies every rate out of `site` by `1 + epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePerturbation {
    pub site: usize,
    pub epsilon: f64,
}

/// Generator of the configuration process on one particle-number sector.
#[derive(Debug, Clone)]
pub struct ConfigSector {
    pub index: StateIndex<Vec<u32>>,
    pub generator: SparseGenerator,
}

pub fn build_config_generator(
    torus: &Torus,
    n_particles: u32,
    params: &ModelParams,
    cap: usize,
    perturbation: Option<RatePerturbation>,
) -> Result<ConfigSector> {
    let index = enumerate_sector(torus, n_particles, params, cap)?;
    let scale = params.rate_scale();
    let mut rows = Vec::with_capacity(index.len());
    for eta in index.states() {
        let mut row = Vec::new();
        for (x, &nx) in eta.iter().enumerate() {
            if nx == 0 {
                continue;
            }
            let bump = match perturbation {
                Some(p) if p.site == x => 1.0 + p.epsilon,
                _ => 1.0,
            };
            for y in torus.neighbors(Site(x)) {
                let f = params.target_factor(eta[y.0]);
                if f <= 0 {
                    continue;
                }
                let mut next = eta.clone();
                next[x] -= 1;
                next[y.0] += 1;
                let j = index.index_of(&next).expect("sector is closed under moves");
                row.push((j, bump * scale * nx as f64 * f as f64));
            }
        }
        rows.push(row);
    }
    Ok(ConfigSector { generator: SparseGenerator::from_rows(rows), index })
}

/// Generator of the labelled `k`-particle dual process on admissible tuples.
#[derive(Debug, Clone)]
pub struct DualSpace {
    pub index: StateIndex<Vec<usize>>,
    pub generator: SparseGenerator,
}

pub fn build_dual_generator(torus: &Torus, k: usize, params: &ModelParams, cap: usize) -> Result<DualSpace> {
    let index = enumerate_tuples(torus, k, params, cap)?;
    let scale = params.rate_scale();
    let mut rows = Vec::with_capacity(index.len());
    for x in index.states() {
        let mut row = Vec::new();
        for i in 0..k {
            for y in torus.neighbors(Site(x[i])) {
                let stacked = (0..k).filter(|&j| j != i && x[j] == y.0).count();
                let f = params.target_factor(stacked as u32);
                if f <= 0 {
                    continue;
                }
                let mut next = x.clone();
                next[i] = y.0;
                let j = index.index_of(&next).expect("admissible moves stay admissible");
                row.push((j, scale * f as f64));
            }
        }
        rows.push(row);
    }
    Ok(DualSpace { generator: SparseGenerator::from_rows(rows), index })
}

/// `e^{tQ} v` by uniformization with Poisson-tail control.
pub fn evolve(q: &SparseGenerator, v: &[f64], t: f64) -> Result<Vec<f64>> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidParameter(format!("time must be non-negative, got {t}")));
    }
    let lambda = q.max_exit_rate();
    if t == 0.0 || lambda == 0.0 {
        return Ok(v.to_vec());
    }
    let total = lambda * t;
    let pieces = (total / 30.0).ceil().max(1.0) as usize;
    let mu = total / pieces as f64;
    let tol = UNIFORMIZATION_TOL / pieces as f64;
    let mut cur = v.to_vec();
    for _ in 0..pieces {
        let mut term = cur.clone();
        let mut w = (-mu).exp();
        let mut acc: Vec<f64> = term.iter().map(|x| w * x).collect();
        let mut n = 0usize;
        loop {
            n += 1;
            let qv = q.apply(&term);
            for (t, d) in term.iter_mut().zip(qv) {
                *t += d / lambda;
            }
            w *= mu / n as f64;
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += w * t;
            }
            let r = mu / (n + 1) as f64;
            if r < 0.5 && w * r / (1.0 - r) < tol {
                break;
            }
        }
        cur = acc;
    }
    Ok(cur)
}

/// `E_initial[f(η_t)]`.
pub fn evolve_exact(q: &SparseGenerator, initial: &[f64], f: &[f64], t: f64) -> Result<f64> {
    let u = evolve(q, f, t)?;
    Ok(initial.iter().zip(&u).map(|(a, b)| a * b).sum())
}

/// `Γ_i = (Q F²)_i - 2 F_i (Q F)_i`.
pub fn carre_du_champ_matrix(q: &SparseGenerator, f: &[f64]) -> Vec<f64> {
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    let qsq = q.apply(&sq);
    let qf = q.apply(f);
    qsq.iter().zip(&qf).zip(f).map(|((a, b), v)| a - 2.0 * v * b).collect()
}

/// Outcome of the generator-level duality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `max |A D - D L^T|` over admissible tuples and enumerated configurations.
    pub residual: f64,
    /// Largest magnitude of either side.
    pub scale: f64,
    /// For exclusion: largest `|[η]_x|` or `|L [·]_x (η)|` with `x` excluded.
    pub excluded: f64,
    pub pairs: usize,
}

impl DualityReport {
    pub fn relative(&self) -> f64 {
        self.residual / self.scale.max(1.0)
    }
}

pub fn check_duality_identity(
    torus: &Torus,
    k: usize,
    params: &ModelParams,
    max_particles: u32,
    cap: usize,
    perturbation: Option<RatePerturbation>,
) -> Result<DualityReport> {
    let dual = build_dual_generator(torus, k, params, cap)?;
    let mut report = DualityReport { residual: 0.0, scale: 0.0, excluded: 0.0, pairs: 0 };
    let excluded: Vec<Vec<usize>> = if params.occupancy_cap().is_some() {
        let all = (torus.num_sites() as u128).pow(k as u32);
        if all > cap as u128 {
            return Err(Error::CapExceeded { what: "dual state space", size: all, cap: cap as u128 });
        }
        let full = ModelParams { interaction: crate::lattice::Interaction::Independent, ..*params };
        enumerate_tuples(torus, k, &full, cap)?
            .states()
            .iter()
            .filter(|x| dual.index.index_of(x).is_none())
            .cloned()
            .collect()
    } else {
        Vec::new()
    };
    for n in 0..=max_particles {
        let sector = build_config_generator(torus, n, params, cap, perturbation)?;
        let configs: Vec<Configuration> =
            sector.index.states().iter().map(|e| Configuration::from_occupancy(e.clone())).collect();
        let m = configs.len();
        // D[x][η]
        let d: Vec<Vec<f64>> = dual
            .index
            .states()
            .iter()
            .map(|x| {
                let t = LabeledTuple::from_indices(x);
                configs.iter().map(|eta| duality_fn(&t, eta, params.interaction, params.alpha)).collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        for (xi, drow) in d.iter().enumerate() {
            let lhs_row: Vec<f64> = {
                let mut col = vec![0.0; m];
                for (e, out) in col.iter_mut().enumerate() {
                    let mut s = dual.generator.diagonal()[xi] * drow[e];
                    for &(xj, r) in dual.generator.row(xi) {
                        s += r * d[xj][e];
                    }
                    *out = s;
                }
                col
            };
            let rhs_row = sector.generator.apply(drow);
            for (a, b) in lhs_row.iter().zip(&rhs_row) {
                report.residual = report.residual.max((a - b).abs());
                report.scale = report.scale.max(a.abs()).max(b.abs());
                report.pairs += 1;
            }
        }
        for x in &excluded {
            let t = LabeledTuple::from_indices(x);
            let f: Vec<f64> = configs.iter().map(|eta| falling_factorial_joint(eta, &t) as f64).collect();
            let lf = sector.generator.apply(&f);
            for (a, b) in f.iter().zip(&lf) {
                report.excluded = report.excluded.max(a.abs()).max(b.abs());
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// `max |μ(η) Q(η,η') - μ(η') Q(η',η)|` with `μ` normalised per sector.
    pub residual: f64,
    /// `max |(μ^T Q)(η)|`.
    pub stationarity: f64,
    pub states: usize,
}

/// Detailed balance of the product measure `μ_θ` restricted to each sector.
pub fn check_detailed_balance(
    torus: &Torus,
    params: &ModelParams,
    theta: f64,
    max_particles: u32,
    cap: usize,
    perturbation: Option<RatePerturbation>,
) -> Result<BalanceReport> {
    let marginal = MarginalSpec::new(params.interaction, params.alpha, theta)?;
    let mut report = BalanceReport { residual: 0.0, stationarity: 0.0, states: 0 };
    for n in 0..=max_particles {
        let sector = build_config_generator(torus, n, params, cap, perturbation)?;
        let mut w: Vec<f64> = sector
            .index
            .states()
            .iter()
            .map(|eta| eta.iter().map(|&v| marginal.weight(v)).product())
            .collect();
        let total: f64 = w.iter().sum();
        report.states += w.len();
        if total == 0.0 {
            continue;
        }
        for v in w.iter_mut() {
            *v /= total;
        }
        let q = &sector.generator;
        for i in 0..q.len() {
            for &(j, r) in q.row(i) {
                let back = q.entry(j, i);
                report.residual = report.residual.max((w[i] * r - w[j] * back).abs());
            }
        }
        let flux = q.apply_transpose(&w);
        report.stationarity = report.stationarity.max(flux.iter().fold(0.0, |a, b| a.max(b.abs())));
    }
    Ok(report)
}

/// `E_{η0}[[η_t]_x]` by evolving the configuration process exactly.
pub fn forward_factorial_moment(eta0: &Configuration, x: &LabeledTuple, t: f64, params: &ModelParams, cap: usize) -> Result<f64> {
    let torus = &params.torus;
    eta0.check_admissible(params)?;
    let sector = build_config_generator(torus, eta0.total() as u32, params, cap, None)?;
    let f: Vec<f64> = sector
        .index
        .states()
        .iter()
        .map(|e| falling_factorial_joint(&Configuration::from_occupancy(e.clone()), x) as f64)
        .collect();
    let start = sector.index.index_of(&eta0.occupancy().to_vec()).expect("initial state enumerated");
    Ok(evolve(&sector.generator, &f, t)?[start])
}

/// `π(x)` for every enumerated tuple (used by the self-adjointness test).
pub fn pi_vector(space: &DualSpace, params: &ModelParams) -> Vec<f64> {
    space
        .index
        .states()
        .iter()
        .map(|x| pi_weight(&LabeledTuple::from_indices(x), params.interaction, params.alpha))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Interaction;

    fn params(i: Interaction, alpha: u32, n: usize) -> ModelParams {
        ModelParams::new(i, alpha, Torus::new(1, n).unwrap()).unwrap()
    }

    #[test]
    fn single_particle_is_a_circulant() {
        for i in Interaction::ALL {
            let p = params(i, 2, 3);
            let s = build_config_generator(&p.torus, 1, &p, DEFAULT_STATE_CAP, None).unwrap();
            assert_eq!(s.generator.len(), 3);
            for a in 0..3 {
                for b in 0..3 {
                    let want = if a == b { -18.0 } else { 9.0 };
                    assert_eq!(s.generator.entry(a, b), want);
                }
            }
        }
    }

    #[test]
    fn frozen_exclusion_sector() {
        let p = params(Interaction::Exclusion, 1, 2);
        let s = build_config_generator(&p.torus, 2, &p, DEFAULT_STATE_CAP, None).unwrap();
        assert_eq!(s.index.states(), &[vec![1, 1]]);
        assert_eq!(s.generator.entry(0, 0), 0.0);
    }

    #[test]
    fn sector_sizes() {
        let p = params(Interaction::Inclusion, 1, 4);
        assert_eq!(enumerate_sector(&p.torus, 3, &p, 1000).unwrap().len(), 20);
        let p = params(Interaction::Exclusion, 1, 4);
        assert_eq!(enumerate_sector(&p.torus, 2, &p, 1000).unwrap().len(), 6);
        let p = params(Interaction::Independent, 1, 10);
        assert!(enumerate_sector(&p.torus, 10, &p, 1000).is_err());
    }

    #[test]
    fn evolve_preserves_constants_and_time_zero() {
        let p = params(Interaction::Inclusion, 1, 4);
        let s = build_config_generator(&p.torus, 3, &p, DEFAULT_STATE_CAP, None).unwrap();
        let ones = vec![1.0; s.generator.len()];
        for t in [0.0, 0.01, 0.3, 2.0] {
            for v in evolve(&s.generator, &ones, t).unwrap() {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
        let f: Vec<f64> = (0..s.generator.len()).map(|i| i as f64).collect();
        assert_eq!(evolve(&s.generator, &f, 0.0).unwrap(), f);
    }
}
