//! Torus geometry, particle configurations and model parameters.
//!
//! Sites of the discrete torus `{0, .., N-1}^d` are stored as flat indices
//! `x = c_0 + c_1 N + .. + c_{d-1} N^{d-1}`; site `x` sits at the macroscopic
//! position `c / N` in `[0, 1)^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete periodic lattice `{0, .., N-1}^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Torus {
    d: usize,
    n: usize,
}

/// Flat site index on a [`Torus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site(pub usize);

impl Torus {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "torus needs d >= 1 and N >= 1, got d={d}, N={n}"
            )));
        }
        let sites = (n as u128).checked_pow(d as u32);
        match sites {
            Some(s) if s <= usize::MAX as u128 / 4 => Ok(Self { d, n }),
            _ => Err(Error::InvalidParameter(format!("N^d overflows for d={d}, N={n}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn num_sites(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Lattice spacing `1/N` in macroscopic units.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> {
        (0..self.num_sites()).map(Site)
    }

    pub fn coords(&self, s: Site) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.d);
        let mut rest = s.0;
        for _ in 0..self.d {
            c.push(rest % self.n);
            rest /= self.n;
        }
        c
    }

    /// Site from integer coordinates, reduced modulo `N` componentwise.
    pub fn site(&self, coords: &[i64]) -> Site {
        assert_eq!(coords.len(), self.d, "coordinate vector has wrong length");
        let n = self.n as i64;
        let mut idx = 0usize;
        for &c in coords.iter().rev() {
            idx = idx * self.n + c.rem_euclid(n) as usize;
        }
        Site(idx)
    }

    /// Macroscopic position `x / N` of a site.
    pub fn position(&self, s: Site) -> Vec<f64> {
        let h = self.spacing();
        self.coords(s).into_iter().map(|c| c as f64 * h).collect()
    }

    /// The `2d` nearest neighbours, `+e_j` before `-e_j` for each axis `j`.
    ///
    /// On a torus with `N = 2` both directions of an axis land on the same
    /// site; the duplicate is kept so that every site has `2d` directed edges.
    pub fn neighbors(&self, s: Site) -> Vec<Site> {
        let mut out = Vec::with_capacity(2 * self.d);
        let mut stride = 1usize;
        let mut rest = s.0;
        for _ in 0..self.d {
            let c = rest % self.n;
            rest /= self.n;
            let base = s.0 - c * stride;
            let up = (c + 1) % self.n;
            let down = (c + self.n - 1) % self.n;
            out.push(Site(base + up * stride));
            out.push(Site(base + down * stride));
            stride *= self.n;
        }
        out
    }

    /// Flat neighbour table: entry `2d * x + j` is the `j`-th neighbour of `x`.
    pub fn neighbor_table(&self) -> Vec<usize> {
        let mut t = Vec::with_capacity(self.num_sites() * 2 * self.d);
        for s in self.sites() {
            t.extend(self.neighbors(s).into_iter().map(|y| y.0));
        }
        t
    }

    /// Number of directed nearest-neighbour edges from `x` to `y`
    /// (0, 1, or 2 when `N = 2`).
    pub fn edge_multiplicity(&self, x: Site, y: Site) -> usize {
        self.neighbors(x).into_iter().filter(|&z| z == y).count()
    }

    pub fn are_neighbors(&self, x: Site, y: Site) -> bool {
        self.edge_multiplicity(x, y) > 0
    }
}

/// Interaction type, the sign `σ` in the jump rate `η(x)(α + σ η(y))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interaction {
    /// Symmetric exclusion, `σ = -1`.
    Exclusion,
    /// Independent random walkers, `σ = 0`.
    Independent,
    /// Symmetric inclusion, `σ = +1`.
    Inclusion,
}

impl Interaction {
    pub const ALL: [Interaction; 3] = [Self::Exclusion, Self::Independent, Self::Inclusion];

    pub fn sigma(self) -> i32 {
        match self {
            Self::Exclusion => -1,
            Self::Independent => 0,
            Self::Inclusion => 1,
        }
    }

    pub fn from_sigma(sigma: i32) -> Result<Self> {
        match sigma {
            -1 => Ok(Self::Exclusion),
            0 => Ok(Self::Independent),
            1 => Ok(Self::Inclusion),
            _ => Err(Error::InvalidParameter(format!("sigma must be -1, 0 or 1, got {sigma}"))),
        }
    }
}

/// Everything that fixes one instance of the microscopic dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelParams {
    pub interaction: Interaction,
    pub alpha: u32,
    pub torus: Torus,
}

impl ModelParams {
    pub fn new(interaction: Interaction, alpha: u32, torus: Torus) -> Result<Self> {
        if alpha == 0 {
            return Err(Error::InvalidParameter("alpha must be a positive integer".into()));
        }
        Ok(Self { interaction, alpha, torus })
    }

    pub fn sigma(&self) -> i32 {
        self.interaction.sigma()
    }

    /// Prefactor `N²/2` multiplying every directed-edge rate.
    ///
    /// With this normalisation a single particle performs a walk whose
    /// macroscopic generator is `(α/2) Δ`.
    pub fn rate_scale(&self) -> f64 {
        let n = self.torus.side() as f64;
        0.5 * n * n
    }

    /// Per-site occupancy cap (`α` for exclusion, none otherwise).
    pub fn occupancy_cap(&self) -> Option<u32> {
        match self.interaction {
            Interaction::Exclusion => Some(self.alpha),
            _ => None,
        }
    }

    /// Integer part `α + σ n` of the rate for jumping onto a site holding `n`.
    pub fn target_factor(&self, n: u32) -> i64 {
        self.alpha as i64 + self.sigma() as i64 * n as i64
    }
}

/// Occupation numbers `η(x)` with the cached total particle number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    occupancy: Vec<u32>,
    total: u64,
}

impl Configuration {
    pub fn empty(torus: &Torus) -> Self {
        Self { occupancy: vec![0; torus.num_sites()], total: 0 }
    }

    pub fn from_occupancy(occupancy: Vec<u32>) -> Self {
        let total = occupancy.iter().map(|&v| v as u64).sum();
        Self { occupancy, total }
    }

    pub fn constant(torus: &Torus, value: u32) -> Self {
        Self::from_occupancy(vec![value; torus.num_sites()])
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn get(&self, s: Site) -> u32 {
        self.occupancy[s.0]
    }

    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn set(&mut self, s: Site, value: u32) {
        self.total = self.total - self.occupancy[s.0] as u64 + value as u64;
        self.occupancy[s.0] = value;
    }

    pub fn add(&mut self, s: Site) {
        self.occupancy[s.0] = self.occupancy[s.0].checked_add(1).expect("occupancy overflow");
        self.total += 1;
    }

    /// `η -> η^{from,to}`: one particle moves from `from` to `to`.
    pub fn move_particle(&mut self, from: Site, to: Site) -> Result<()> {
        if self.occupancy[from.0] == 0 {
            return Err(Error::UndefinedInput(format!("no particle at source site {}", from.0)));
        }
        self.occupancy[from.0] -= 1;
        self.occupancy[to.0] = self.occupancy[to.0].checked_add(1).expect("occupancy overflow");
        Ok(())
    }

    pub fn check_admissible(&self, params: &ModelParams) -> Result<()> {
        if let Some(cap) = params.occupancy_cap() {
            if let Some((site, &occupancy)) =
                self.occupancy.iter().enumerate().find(|(_, &v)| v > cap)
            {
                return Err(Error::Inadmissible { site, occupancy, cap });
            }
        }
        Ok(())
    }
}

/// True iff no site exceeds the exclusion cap (always true for `σ ∈ {0, 1}`).
pub fn is_admissible(eta: &Configuration, interaction: Interaction, alpha: u32) -> bool {
    interaction != Interaction::Exclusion || eta.occupancy().iter().all(|&v| v <= alpha)
}

/// Ordered `k`-tuple of sites: a labelled dual configuration and a field index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledTuple {
    pub sites: Vec<Site>,
}

impl LabeledTuple {
    pub fn new(sites: Vec<Site>) -> Self {
        Self { sites }
    }

    pub fn from_indices(idx: &[usize]) -> Self {
        Self { sites: idx.iter().map(|&i| Site(i)).collect() }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Largest number of labels sharing a site.
    pub fn max_stack(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.sites.iter().enumerate() {
            let c = self.sites[i..].iter().filter(|&t| t == s).count();
            best = best.max(c);
        }
        best
    }

    /// Admissible for exclusion iff no site carries more than `α` labels.
    pub fn is_admissible(&self, interaction: Interaction, alpha: u32) -> bool {
        interaction != Interaction::Exclusion || self.max_stack() <= alpha as usize
    }

    /// Occupation numbers of the unlabelled projection.
    pub fn counts(&self, torus: &Torus) -> Configuration {
        let mut c = Configuration::empty(torus);
        for &s in &self.sites {
            c.add(s);
        }
        c
    }
}
