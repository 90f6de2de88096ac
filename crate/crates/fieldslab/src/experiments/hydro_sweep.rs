use anyhow::{ensure, Result};
use fieldslab_core::dynamics::{simulate, Observer};
use fieldslab_core::fields::eval_field;
use fieldslab_core::lattice::{Configuration, Torus};
use fieldslab_core::measures::sample_configuration;
use fieldslab_core::rng::{derive_seed, StreamKey};
use fieldslab_core::testfn::ProductTestFunction;
use fieldslab_core::theory::{expected_field_under_profile, finite_n_first_order_mean, hydro_prediction};

use super::{par_collect, sigma_label, Experiment, Report};
use crate::config::ExperimentConfig;
use crate::emit::{Cell, Table};
use crate::stats::{EstimateRecord, Summary};

pub struct HydroSweep;

pub(crate) const COLUMNS: [&str; 15] = [
    "sigma", "alpha", "n", "t", "function", "k", "estimate", "std_error", "samples", "target", "z", "abs_error",
    "finite_n_target", "finite_n_gap", "error_scale",
];

/// Field values of every test function at each snapshot, time-major.
struct FieldRecorder<'a> {
    fns: &'a [(String, ProductTestFunction)],
    torus: Torus,
    values: Vec<f64>,
}

impl Observer for FieldRecorder<'_> {
    fn on_snapshot(&mut self, _index: usize, _time: f64, eta: &Configuration) -> fieldslab_core::Result<()> {
        for (_, g) in self.fns {
            self.values.push(eval_field(g, eta, &self.torus)?);
        }
        Ok(())
    }
}

impl Experiment for HydroSweep {
    fn name(&self) -> &'static str {
        "hydro-sweep"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Report> {
        ensure!(!cfg.times.is_empty(), "hydro-sweep needs at least one time");
        ensure!(!cfg.test_functions.is_empty(), "hydro-sweep needs at least one test function");
        let profile = cfg.profile()?;
        let fns = cfg.test_functions(cfg.model.d)?;
        let t_end = *cfg.times.last().expect("non-empty");
        let mut table = Table::new("hydro", &COLUMNS);
        for gp in cfg.grid()? {
            let p = gp.params;
            let theta = profile.validate(&p)?;
            let seed = derive_seed(cfg.seed, &[gp.index as u64]);
            let runs = par_collect(cfg.samples, |m| {
                let key = StreamKey::new(seed, m);
                let eta0 = sample_configuration(&theta, p.interaction, p.alpha, key)?;
                let mut rec = FieldRecorder { fns: &fns, torus: p.torus, values: Vec::with_capacity(cfg.times.len() * fns.len()) };
                simulate(&eta0, t_end, &p, &mut key.dynamics(), &cfg.times, &mut rec, false)?;
                Ok(rec.values)
            })?;
            let n = p.torus.side() as f64;
            let error_scale = 1.0 / n + 1.0 / (cfg.samples as f64).sqrt();
            for (ti, &t) in cfg.times.iter().enumerate() {
                for (fi, (name, g)) in fns.iter().enumerate() {
                    let col: Vec<f64> = runs.iter().map(|r| r[ti * fns.len() + fi]).collect();
                    let target = hydro_prediction(g, t, &profile, p.alpha as f64, cfg.model.d);
                    let s = Summary::of(&col);
                    let rec = EstimateRecord::new(name.clone(), s.mean, s.se, s.n, Some(target));
                    let finite = if t == 0.0 {
                        Some(expected_field_under_profile(g, &profile, &p)?)
                    } else if g.order() == 1 {
                        Some(finite_n_first_order_mean(g.factors[0].as_ref(), &profile, &p, t)?)
                    } else {
                        None
                    };
                    table.push(vec![
                        sigma_label(&p).into(),
                        p.alpha.into(),
                        p.torus.side().into(),
                        t.into(),
                        name.as_str().into(),
                        g.order().into(),
                        rec.estimate.into(),
                        rec.std_error.into(),
                        rec.samples.into(),
                        target.into(),
                        rec.z.map_or(Cell::Null, Cell::from),
                        (rec.estimate - target).abs().into(),
                        finite.into(),
                        finite.map(|f| (f - target).abs()).into(),
                        error_scale.into(),
                    ]);
                }
            }
        }
        Ok(Report { tables: vec![table], passed: None })
    }
}
