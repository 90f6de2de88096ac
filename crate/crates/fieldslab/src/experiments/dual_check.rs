use anyhow::{ensure, Result};
use fieldslab_core::dual::{expected_factorial_moment, pi_weight, MonteCarlo, SemigroupEstimate, Uniformization};
use fieldslab_core::dynamics::{simulate, Observer};
use fieldslab_core::exact::forward_factorial_moment;
use fieldslab_core::fields::falling_factorial_joint;
use fieldslab_core::lattice::{Configuration, LabeledTuple};
use fieldslab_core::measures::sample_equilibrium;
use fieldslab_core::rng::{derive_seed, StreamKey};

use super::{check_initial, par_collect, sigma_label, tuple_label, Experiment, Report};
use crate::config::ExperimentConfig;
use crate::emit::{Cell, Table};
use crate::stats::{z_score, Summary};

pub struct DualCheck;

pub(crate) const COLUMNS: [&str; 13] = [
    "sigma", "alpha", "n", "t", "tuple", "method", "estimate", "std_error", "samples", "reference", "z", "abs_error",
    "initial",
];

/// `[η_t]_x` for every tuple at each snapshot.
struct MomentRecorder<'a> {
    tuples: &'a [LabeledTuple],
    values: Vec<f64>,
}

impl Observer for MomentRecorder<'_> {
    fn on_snapshot(&mut self, _index: usize, _time: f64, eta: &Configuration) -> fieldslab_core::Result<()> {
        self.values.extend(self.tuples.iter().map(|x| falling_factorial_joint(eta, x) as f64));
        Ok(())
    }
}

impl Experiment for DualCheck {
    fn name(&self) -> &'static str {
        "dual-check"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Report> {
        ensure!(!cfg.times.is_empty(), "dual-check needs at least one time");
        let opts = &cfg.dual;
        let t_end = *cfg.times.last().expect("non-empty");
        let mut table = Table::new("dual", &COLUMNS);
        for gp in cfg.grid()? {
            let p = gp.params;
            let sites = p.torus.num_sites();
            let eta0 = match &opts.initial {
                Some(init) => check_initial(init, &p)?,
                None => sample_equilibrium(&p, cfg.constant_theta()?, StreamKey::new(derive_seed(cfg.seed, &[gp.index as u64, 3]), 0))?,
            };
            let tuples: Vec<LabeledTuple> = opts
                .tuples
                .iter()
                .filter(|x| x.iter().all(|&s| s < sites))
                .map(|x| LabeledTuple::from_indices(x))
                .filter(|x| pi_weight(x, p.interaction, p.alpha) > 0.0)
                .collect();
            ensure!(!tuples.is_empty(), "no instances: no admissible tuple fits the torus with N={}", p.torus.side());
            let seed = derive_seed(cfg.seed, &[gp.index as u64, 0]);
            let runs = par_collect(cfg.samples, |m| {
                let mut rec = MomentRecorder { tuples: &tuples, values: Vec::new() };
                simulate(&eta0, t_end, &p, &mut StreamKey::new(seed, m).dynamics(), &cfg.times, &mut rec, false)?;
                Ok(rec.values)
            })?;
            let initial: String = eta0.occupancy().iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
            for (ti, &t) in cfg.times.iter().enumerate() {
                for (xi, x) in tuples.iter().enumerate() {
                    let label = tuple_label(&fieldslab_core::fields::tuple_indices(x));
                    let exact = match expected_factorial_moment(&eta0, x, t, &p, &Uniformization { cap: opts.state_cap }) {
                        Ok(e) => Some(e.value),
                        Err(fieldslab_core::Error::CapExceeded { .. }) => None,
                        Err(e) => return Err(e.into()),
                    };
                    let mut push = |method: &str, est: f64, se: Option<f64>, samples: usize| {
                        table.push(vec![
                            sigma_label(&p).into(),
                            p.alpha.into(),
                            p.torus.side().into(),
                            t.into(),
                            label.as_str().into(),
                            method.into(),
                            est.into(),
                            se.into(),
                            samples.into(),
                            exact.into(),
                            exact.zip(se).and_then(|(r, s)| z_score(est, s, r)).map_or(Cell::Null, Cell::from),
                            exact.map(|r| (est - r).abs()).into(),
                            initial.as_str().into(),
                        ]);
                    };
                    let col: Vec<f64> = runs.iter().map(|r| r[ti * tuples.len() + xi]).collect();
                    let fwd = Summary::of(&col);
                    push("forward_mc", fwd.mean, Some(fwd.se), fwd.n);
                    let mc = MonteCarlo { samples: cfg.samples, seed: derive_seed(cfg.seed, &[gp.index as u64, 2, ti as u64, xi as u64]) };
                    let SemigroupEstimate { value, std_error, samples } = expected_factorial_moment(&eta0, x, t, &p, &mc)?;
                    push("backward_mc", value, std_error, samples);
                    if let Some(e) = exact {
                        push("backward_exact", e, None, 0);
                    }
                    if sites <= opts.exact_max_sites {
                        let f = forward_factorial_moment(&eta0, x, t, &p, opts.state_cap)?;
                        push("forward_exact", f, None, 0);
                    }
                }
            }
        }
        Ok(Report { tables: vec![table], passed: None })
    }
}
