use super::partition::{moments_to_cumulants, Compensated, PartitionPlan};
use super::{field_norm, subset_products, MAX_FAST_ORDER};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Site, Torus};
use crate::testfn::ProductTestFunction;

/// A configuration together with the block accumulators `S(C)` of one
/// product test function, updated in `O(2^k)` per particle move.
#[derive(Debug, Clone)]
pub struct FieldState {
    torus: Torus,
    eta: Configuration,
    k: usize,
    plan: PartitionPlan,
    tables: Vec<Vec<f64>>,
    prods: Vec<f64>,
    sums: Vec<Compensated>,
    norm: f64,
    moves: u64,
    refresh_every: u64,
}

fn cumulants_for(n: u32, k: usize, m: &mut [f64], kappa: &mut [f64]) {
    let mut acc = 1.0;
    for (a, slot) in m.iter_mut().enumerate().take(k + 1) {
        *slot = acc;
        acc = (acc * (n as f64 - a as f64)).max(0.0);
    }
    moments_to_cumulants(&m[..=k], &mut kappa[..=k]);
}

impl FieldState {
    pub fn new(g: &ProductTestFunction, eta: Configuration, torus: &Torus) -> Result<Self> {
        let k = g.order();
        if k == 0 || k > MAX_FAST_ORDER {
            return Err(Error::Unsupported(format!("field order {k} outside 1..={MAX_FAST_ORDER}")));
        }
        if eta.len() != torus.num_sites() {
            return Err(Error::InvalidParameter("configuration does not match the torus".into()));
        }
        let tables = g.on_lattice(torus);
        let nmask = 1usize << k;
        let mut prods = vec![0.0; torus.num_sites() * nmask];
        for z in 0..torus.num_sites() {
            subset_products(&tables, z, &mut prods[z * nmask..(z + 1) * nmask]);
        }
        let mut state = Self {
            torus: *torus,
            eta,
            k,
            plan: PartitionPlan::new(k),
            tables,
            prods,
            sums: vec![Compensated::default(); nmask],
            norm: field_norm(torus, k),
            moves: 0,
            refresh_every: 64 * torus.num_sites() as u64,
        };
        state.refresh();
        Ok(state)
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn eta(&self) -> &Configuration {
        &self.eta
    }

    /// `g_i(z/N)` for factor `i`.
    pub fn factor_table(&self, i: usize) -> &[f64] {
        &self.tables[i]
    }

    fn nmask(&self) -> usize {
        1 << self.k
    }

    fn current_sums(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.sums.iter().map(Compensated::value).collect();
        s[0] = 1.0;
        s
    }

    /// Recomputes every accumulator from the configuration.
    pub fn refresh(&mut self) {
        let k = self.k;
        let nmask = self.nmask();
        let mut m = vec![0.0; k + 1];
        let mut kappa = vec![0.0; k + 1];
        let mut sums = vec![Compensated::default(); nmask];
        for (z, &n) in self.eta.occupancy().iter().enumerate() {
            if n == 0 {
                continue;
            }
            cumulants_for(n, k, &mut m, &mut kappa);
            let p = &self.prods[z * nmask..(z + 1) * nmask];
            for mask in 1..nmask {
                sums[mask].add(kappa[mask.count_ones() as usize] * p[mask]);
            }
        }
        self.sums = sums;
        self.moves = 0;
    }

    /// Largest absolute difference between a cached accumulator and its
    /// recomputation.
    pub fn cache_error(&self) -> f64 {
        let mut fresh = self.clone();
        fresh.refresh();
        self.sums
            .iter()
            .zip(&fresh.sums)
            .skip(1)
            .map(|(a, b)| (a.value() - b.value()).abs())
            .fold(0.0, f64::max)
    }

    /// `⟨G, X^{(k)N}⟩` for the current configuration.
    pub fn value(&self) -> f64 {
        self.norm * self.plan.evaluate(&self.current_sums())
    }

    /// Accumulator changes caused by moving one particle from `z` to `w`.
    fn sum_changes(&self, z: Site, w: Site) -> Result<Vec<f64>> {
        let nz = self.eta.get(z);
        if nz == 0 {
            return Err(Error::UndefinedInput(format!("no particle at source site {}", z.0)));
        }
        let nmask = self.nmask();
        let mut delta = vec![0.0; nmask];
        if z == w {
            return Ok(delta);
        }
        let k = self.k;
        let mut m = vec![0.0; k + 1];
        let mut before = vec![0.0; k + 1];
        let mut after = vec![0.0; k + 1];
        for (site, old, new) in [(z, nz, nz - 1), (w, self.eta.get(w), self.eta.get(w) + 1)] {
            cumulants_for(old, k, &mut m, &mut before);
            cumulants_for(new, k, &mut m, &mut after);
            let p = &self.prods[site.0 * nmask..(site.0 + 1) * nmask];
            for mask in 1..nmask {
                let c = mask.count_ones() as usize;
                delta[mask] += (after[c] - before[c]) * p[mask];
            }
        }
        Ok(delta)
    }

    /// Field change under `η -> η^{z,w}` without committing the move.
    pub fn delta_on_move(&self, z: Site, w: Site) -> Result<f64> {
        let delta = self.sum_changes(z, w)?;
        if self.k == 1 {
            return Ok(self.norm * delta[1]);
        }
        let old = self.current_sums();
        let new: Vec<f64> = old.iter().zip(&delta).map(|(a, b)| a + b).collect();
        Ok(self.norm * (self.plan.evaluate(&new) - self.plan.evaluate(&old)))
    }

    /// Commits `η -> η^{z,w}` and returns the field change.
    pub fn apply_move(&mut self, z: Site, w: Site) -> Result<f64> {
        let before = self.value();
        let delta = self.sum_changes(z, w)?;
        for (acc, d) in self.sums.iter_mut().zip(&delta).skip(1) {
            if *d != 0.0 {
                acc.add(*d);
            }
        }
        self.eta.move_particle(z, w)?;
        self.moves += 1;
        if self.moves >= self.refresh_every {
            self.refresh();
        }
        Ok(self.value() - before)
    }

    /// Replaces the configuration and rebuilds the accumulators.
    pub fn reset(&mut self, eta: Configuration) -> Result<()> {
        if eta.len() != self.torus.num_sites() {
            return Err(Error::InvalidParameter("configuration does not match the torus".into()));
        }
        self.eta = eta;
        self.refresh();
        Ok(())
    }
}
