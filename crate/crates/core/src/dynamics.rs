//! Continuous-time simulation of the particle system.
//!
//! A particle at `x` jumps to each neighbour `y` at rate
//! `(N²/2) η(x)(α + σ η(y))`. Sites carry the integer weight
//! `η(x) Σ_{y ~ x} (α + σ η(y))` in a Fenwick tree, so an event is drawn in
//! `O(log N^d)` and a move refreshes `O(d)` weights.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Configuration, ModelParams, Site};

/// Total rate of the directed edges from `x` to `y` in configuration `η`.
///
/// When `N = 2` the two edges joining `x` and `y` both count.
pub fn jump_rate(eta: &Configuration, x: Site, y: Site, params: &ModelParams) -> f64 {
    let mult = params.torus.edge_multiplicity(x, y);
    if mult == 0 || x == y {
        return 0.0;
    }
    let f = params.target_factor(eta.get(y)).max(0);
    mult as f64 * params.rate_scale() * eta.get(x) as f64 * f as f64
}

#[derive(Debug, Clone)]
struct Fenwick {
    tree: Vec<i64>,
    top: usize,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        let top = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        Self { tree: vec![0; n + 1], top }
    }

    fn add(&mut self, i: usize, delta: i64) {
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    fn total(&self) -> i64 {
        let mut j = self.tree.len() - 1;
        let mut s = 0;
        while j > 0 {
            s += self.tree[j];
            j &= j - 1;
        }
        s
    }

    /// Smallest index `i` with `prefix(i) > target`, for `0 <= target < total`.
    fn find(&self, mut target: i64) -> usize {
        let mut pos = 0usize;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

pub const DEFAULT_OCCUPANCY_CEILING: u32 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatorOptions {
    /// Hard cap on any single occupation number.
    pub occupancy_ceiling: u32,
}

impl Default for SimulatorOptions {
    fn default() -> Self {
        Self { occupancy_ceiling: DEFAULT_OCCUPANCY_CEILING }
    }
}

/// One jump of the process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub from: Site,
    pub to: Site,
}

/// Event-driven simulator holding the current state and macroscopic time.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ModelParams,
    nb: Vec<usize>,
    deg: usize,
    eta: Configuration,
    weights: Vec<i64>,
    tree: Fenwick,
    time: f64,
    events: u64,
    options: SimulatorOptions,
}

impl Simulator {
    pub fn new(params: ModelParams, eta: Configuration, options: SimulatorOptions) -> Result<Self> {
        let torus = params.torus;
        if eta.len() != torus.num_sites() {
            return Err(Error::InvalidParameter("configuration does not match the torus".into()));
        }
        eta.check_admissible(&params)?;
        if let Some((site, _)) = eta.occupancy().iter().enumerate().find(|(_, &v)| v > options.occupancy_ceiling) {
            return Err(Error::OccupancyCeiling { site, ceiling: options.occupancy_ceiling });
        }
        let n = torus.num_sites();
        let mut sim = Self {
            params,
            nb: torus.neighbor_table(),
            deg: 2 * torus.dim(),
            eta,
            weights: vec![0; n],
            tree: Fenwick::new(n),
            time: 0.0,
            events: 0,
            options,
        };
        for x in 0..n {
            sim.refresh_site(x);
        }
        Ok(sim)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn eta(&self) -> &Configuration {
        &self.eta
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    /// Sum of all jump rates out of the current state.
    pub fn total_rate(&self) -> f64 {
        self.params.rate_scale() * self.tree.total() as f64
    }

    fn neighbors(&self, x: usize) -> &[usize] {
        &self.nb[self.deg * x..self.deg * (x + 1)]
    }

    fn site_weight(&self, x: usize) -> i64 {
        let n = self.eta.occupancy()[x];
        if n == 0 {
            return 0;
        }
        let out: i64 = self
            .neighbors(x)
            .iter()
            .map(|&y| self.params.target_factor(self.eta.occupancy()[y]).max(0))
            .sum();
        n as i64 * out
    }

    fn refresh_site(&mut self, x: usize) {
        let w = self.site_weight(x);
        let delta = w - self.weights[x];
        if delta != 0 {
            self.weights[x] = w;
            self.tree.add(x, delta);
        }
    }

    fn pick_event<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let total = self.tree.total();
        let x = self.tree.find(rng.random_range(0..total));
        let out: i64 = self.weights[x] / self.eta.occupancy()[x] as i64;
        let mut r = rng.random_range(0..out);
        for &y in self.neighbors(x) {
            let f = self.params.target_factor(self.eta.occupancy()[y]).max(0);
            if r < f {
                return (x, y);
            }
            r -= f;
        }
        unreachable!("neighbour weights do not add up to the site weight")
    }

    fn apply(&mut self, x: usize, y: usize) -> Result<()> {
        let before = self.eta.total();
        self.eta.move_particle(Site(x), Site(y))?;
        debug_assert_eq!(self.eta.total(), before, "particle number changed");
        debug_assert!(
            self.params.occupancy_cap().is_none_or(|cap| self.eta.occupancy()[y] <= cap),
            "exclusion cap violated at site {y}"
        );
        if self.eta.occupancy()[y] > self.options.occupancy_ceiling {
            return Err(Error::OccupancyCeiling { site: y, ceiling: self.options.occupancy_ceiling });
        }
        let deg = self.deg;
        for &s in [x, y].iter() {
            self.refresh_site(s);
            for j in 0..deg {
                let z = self.nb[deg * s + j];
                self.refresh_site(z);
            }
        }
        self.events += 1;
        Ok(())
    }

    /// Runs to macroscopic time `t_target`, calling `on_move` after each jump
    /// with the event and the post-jump configuration.
    ///
    /// The holding time is redrawn at every call; by memorylessness the
    /// state at `t_target` has the law of the process.
    pub fn advance<R, F>(&mut self, t_target: f64, rng: &mut R, mut on_move: F) -> Result<()>
    where
        R: Rng + ?Sized,
        F: FnMut(&Event, &Configuration) -> Result<()>,
    {
        if t_target < self.time {
            return Err(Error::InvalidParameter(format!("cannot go back from t={} to t={t_target}", self.time)));
        }
        let scale = self.params.rate_scale();
        loop {
            let total = self.tree.total();
            if total == 0 {
                self.time = t_target;
                return Ok(());
            }
            let dt = Exp::new(scale * total as f64).expect("positive rate").sample(rng);
            if self.time + dt > t_target {
                self.time = t_target;
                return Ok(());
            }
            self.time += dt;
            let (x, y) = self.pick_event(rng);
            self.apply(x, y)?;
            let ev = Event { time: self.time, from: Site(x), to: Site(y) };
            on_move(&ev, &self.eta)?;
        }
    }

    /// Full consistency check of the cached weights (test support).
    pub fn check_weights(&self) -> bool {
        (0..self.weights.len()).all(|x| self.weights[x] == self.site_weight(x))
            && self.tree.total() == self.weights.iter().sum::<i64>()
    }
}

/// Callbacks invoked while a trajectory is generated.
pub trait Observer {
    fn on_move(&mut self, _event: &Event, _eta: &Configuration) -> Result<()> {
        Ok(())
    }
    fn on_snapshot(&mut self, _index: usize, _time: f64, _eta: &Configuration) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: Configuration,
    /// Present only when the event log was requested.
    pub events: Option<Vec<Event>>,
    pub terminal: Configuration,
    pub event_count: u64,
}

/// Simulates from `eta0` up to `t_end`, with snapshots at the (sorted)
/// `snapshot_times`.
pub fn simulate<R: Rng + ?Sized>(
    eta0: &Configuration,
    t_end: f64,
    params: &ModelParams,
    rng: &mut R,
    snapshot_times: &[f64],
    observer: &mut dyn Observer,
    record_events: bool,
) -> Result<Trajectory> {
    if t_end.is_nan() || t_end < 0.0 {
        return Err(Error::InvalidParameter(format!("t_end must be non-negative, got {t_end}")));
    }
    if snapshot_times.windows(2).any(|w| w[1] < w[0]) || snapshot_times.iter().any(|&t| t < 0.0 || t > t_end) {
        return Err(Error::InvalidParameter("snapshot times must be sorted and within [0, t_end]".into()));
    }
    let mut sim = Simulator::new(*params, eta0.clone(), SimulatorOptions::default())?;
    let mut log = record_events.then(Vec::new);
    for (i, &t) in snapshot_times.iter().enumerate() {
        sim.advance(t, rng, |ev, eta| {
            if let Some(l) = log.as_mut() {
                l.push(*ev);
            }
            observer.on_move(ev, eta)
        })?;
        observer.on_snapshot(i, t, sim.eta())?;
    }
    sim.advance(t_end, rng, |ev, eta| {
        if let Some(l) = log.as_mut() {
            l.push(*ev);
        }
        observer.on_move(ev, eta)
    })?;
    Ok(Trajectory { initial: eta0.clone(), events: log, terminal: sim.eta().clone(), event_count: sim.event_count() })
}
