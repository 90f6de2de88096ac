use super::{eval_field, FieldState};
use crate::error::Result;
use crate::lattice::{Configuration, ModelParams, Site};
use crate::testfn::ProductTestFunction;

impl FieldState {
    /// `Γ = Σ_{directed edges} rate · (field change)²`.
    pub fn carre_du_champ(&self, params: &ModelParams) -> Result<f64> {
        let torus = self.torus();
        let scale = params.rate_scale();
        let mut acc = super::Compensated::default();
        for (z, &n) in self.eta().occupancy().iter().enumerate() {
            if n == 0 {
                continue;
            }
            for y in torus.neighbors(Site(z)) {
                let factor = params.target_factor(self.eta().get(y));
                if factor <= 0 {
                    continue;
                }
                let delta = self.delta_on_move(Site(z), y)?;
                acc.add(scale * n as f64 * factor as f64 * delta * delta);
            }
        }
        Ok(acc.value())
    }
}

pub fn carre_du_champ(g: &ProductTestFunction, eta: &Configuration, params: &ModelParams) -> Result<f64> {
    FieldState::new(g, eta.clone(), &params.torus)?.carre_du_champ(params)
}

/// `Γ` with every moved field value recomputed from scratch.
pub fn carre_du_champ_bruteforce(g: &ProductTestFunction, eta: &Configuration, params: &ModelParams) -> Result<f64> {
    let torus = &params.torus;
    let base = eval_field(g, eta, torus)?;
    let scale = params.rate_scale();
    let mut acc = 0.0;
    for z in torus.sites() {
        let n = eta.get(z);
        if n == 0 {
            continue;
        }
        for y in torus.neighbors(z) {
            let factor = params.target_factor(eta.get(y));
            if factor <= 0 {
                continue;
            }
            let mut moved = eta.clone();
            moved.move_particle(z, y)?;
            let d = eval_field(g, &moved, torus)? - base;
            acc += scale * n as f64 * factor as f64 * d * d;
        }
    }
    Ok(acc)
}
