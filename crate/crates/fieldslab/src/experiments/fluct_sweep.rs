use anyhow::{ensure, Result};
use fieldslab_core::dynamics::{simulate, Observer};
use fieldslab_core::fields::{fluctuation_field_y, fluctuation_field_z, FieldState};
use fieldslab_core::lattice::{Configuration, ModelParams};
use fieldslab_core::measures::sample_equilibrium;
use fieldslab_core::rng::{derive_seed, StreamKey};
use fieldslab_core::testfn::ProductTestFunction;
use fieldslab_core::theory::{equilibrium_covariance, quadratic_variation_u, stationary_cov_finite_n};

use super::{par_collect, sigma_label, Experiment, Report};
use crate::config::ExperimentConfig;
use crate::emit::{Cell, Table};
use crate::stats::{batch_means, covariance_with_se, normality, variance_with_se, z_score, Summary};

pub struct FluctSweep;

pub(crate) const MOMENT_COLUMNS: [&str; 16] = [
    "sigma", "alpha", "n", "theta", "t", "quantity", "function", "k", "estimate", "std_error", "samples",
    "target_finite_n", "z_finite_n", "target_limit", "z_limit", "finite_n_rel_gap",
];
pub(crate) const GAMMA_COLUMNS: [&str; 13] = [
    "sigma", "alpha", "n", "theta", "function", "k", "estimate", "std_error", "batches", "trajectories", "horizon",
    "target", "z",
];
pub(crate) const NORMALITY_COLUMNS: [&str; 11] =
    ["sigma", "alpha", "n", "theta", "t", "function", "k", "skewness", "excess_kurtosis", "jarque_bera", "p_value"];

/// `Y` (and `Z` when defined) for every test function at each snapshot.
struct FieldSampler<'a> {
    fns: &'a [(String, ProductTestFunction)],
    params: ModelParams,
    theta: f64,
    y: Vec<f64>,
    z: Vec<Option<f64>>,
}

impl Observer for FieldSampler<'_> {
    fn on_snapshot(&mut self, _index: usize, _time: f64, eta: &Configuration) -> fieldslab_core::Result<()> {
        for (_, g) in self.fns {
            self.y.push(fluctuation_field_y(g, eta, &self.params, self.theta)?);
            self.z.push(if g.order() <= 2 { Some(fluctuation_field_z(g, eta, &self.params, self.theta)?) } else { None });
        }
        Ok(())
    }
}

/// Running sum of `N^d Γ` for every test function at each snapshot.
struct GammaSampler<'a> {
    fns: &'a [(String, ProductTestFunction)],
    params: ModelParams,
    sums: Vec<f64>,
}

impl Observer for GammaSampler<'_> {
    fn on_snapshot(&mut self, _index: usize, _time: f64, eta: &Configuration) -> fieldslab_core::Result<()> {
        let nd = self.params.torus.num_sites() as f64;
        for ((_, g), acc) in self.fns.iter().zip(self.sums.iter_mut()) {
            *acc += nd * FieldState::new(g, eta.clone(), &self.params.torus)?.carre_du_champ(&self.params)?;
        }
        Ok(())
    }
}

fn rel_gap(a: f64, b: f64) -> Option<f64> {
    if b != 0.0 {
        Some(((a - b) / b).abs())
    } else if a == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

impl Experiment for FluctSweep {
    fn name(&self) -> &'static str {
        "fluct-sweep"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Report> {
        let theta = cfg.constant_theta()?;
        ensure!(!cfg.test_functions.is_empty(), "fluct-sweep needs at least one test function");
        let fns = cfg.test_functions(cfg.model.d)?;
        let nf = fns.len();
        let mut snaps = vec![0.0];
        snaps.extend(cfg.times.iter().copied().filter(|&t| t > 0.0));
        let t_end = *snaps.last().expect("non-empty");
        let opts = &cfg.fluct;

        let mut moments = Table::new("moments", &MOMENT_COLUMNS);
        let mut gamma = Table::new("carre_du_champ", &GAMMA_COLUMNS);
        let mut norm = Table::new("normality", &NORMALITY_COLUMNS);
        for gp in cfg.grid()? {
            let p = gp.params;
            fieldslab_core::measures::check_theta(p.interaction, theta)?;
            let head = |t: f64| -> Vec<Cell> {
                vec![sigma_label(&p).into(), p.alpha.into(), p.torus.side().into(), theta.into(), t.into()]
            };
            let seed = derive_seed(cfg.seed, &[gp.index as u64, 0]);
            let runs = par_collect(cfg.samples, |m| {
                let key = StreamKey::new(seed, m);
                let eta = sample_equilibrium(&p, theta, key)?;
                let mut s = FieldSampler { fns: &fns, params: p, theta, y: Vec::new(), z: Vec::new() };
                simulate(&eta, t_end, &p, &mut key.dynamics(), &snaps, &mut s, false)?;
                Ok((s.y, s.z))
            })?;

            let cov_finite: Vec<Vec<f64>> = fns
                .iter()
                .map(|(_, g)| fns.iter().map(|(_, h)| stationary_cov_finite_n(g, h, &p, theta)).collect::<Result<_, _>>())
                .collect::<Result<_, _>>()?;
            let cov_limit: Vec<Vec<f64>> = fns
                .iter()
                .map(|(_, g)| fns.iter().map(|(_, h)| equilibrium_covariance(g, h, p.interaction, p.alpha, theta)).collect())
                .collect();

            for (ti, &t) in snaps.iter().enumerate() {
                let y = |fi: usize| -> Vec<f64> { runs.iter().map(|r| r.0[ti * nf + fi]).collect() };
                for (fi, (name, g)) in fns.iter().enumerate() {
                    let yi = y(fi);
                    let mut push = |quantity: &str, function: String, est: f64, se: f64, finite: Option<f64>, limit: Option<f64>| {
                        let mut row = head(t);
                        row.extend([
                            quantity.into(),
                            function.into(),
                            g.order().into(),
                            est.into(),
                            se.into(),
                            cfg.samples.into(),
                            finite.into(),
                            finite.and_then(|v| z_score(est, se, v)).into(),
                            limit.into(),
                            limit.and_then(|v| z_score(est, se, v)).into(),
                            finite.zip(limit).and_then(|(a, b)| rel_gap(a, b)).into(),
                        ]);
                        moments.push(row);
                    };
                    let s = Summary::of(&yi);
                    push("mean_y", name.clone(), s.mean, s.se, Some(0.0), Some(0.0));
                    let (v, vse) = variance_with_se(&yi);
                    push("var_y", name.clone(), v, vse, Some(cov_finite[fi][fi]), Some(cov_limit[fi][fi]));
                    if runs[0].1[ti * nf + fi].is_some() {
                        let zi: Vec<f64> = runs.iter().map(|r| r.1[ti * nf + fi].expect("defined")).collect();
                        let s = Summary::of(&zi);
                        push("mean_z", name.clone(), s.mean, s.se, Some(0.0), Some(0.0));
                        let (v, vse) = variance_with_se(&zi);
                        push("var_z", name.clone(), v, vse, None, None);
                    }
                    if opts.pairs {
                        for fj in fi + 1..nf {
                            let (c, cse) = covariance_with_se(&yi, &y(fj));
                            push("cov_y", format!("{name}|{}", fns[fj].0), c, cse, Some(cov_finite[fi][fj]), Some(cov_limit[fi][fj]));
                        }
                    }
                    let nm = normality(&yi);
                    let mut row = head(t);
                    row.extend([
                        name.as_str().into(),
                        g.order().into(),
                        nm.skewness.into(),
                        nm.excess_kurtosis.into(),
                        nm.jarque_bera.into(),
                        nm.p_value.into(),
                    ]);
                    norm.push(row);
                }
            }

            if opts.gamma_samples > 0 {
                let grid: Vec<f64> =
                    (1..=opts.gamma_points).map(|j| opts.horizon * j as f64 / opts.gamma_points as f64).collect();
                let gseed = derive_seed(cfg.seed, &[gp.index as u64, 1]);
                let avgs = par_collect(opts.gamma_samples, |m| {
                    let key = StreamKey::new(gseed, m);
                    let eta = sample_equilibrium(&p, theta, key)?;
                    let mut s = GammaSampler { fns: &fns, params: p, sums: vec![0.0; nf] };
                    simulate(&eta, opts.horizon, &p, &mut key.dynamics(), &grid, &mut s, false)?;
                    Ok(s.sums.into_iter().map(|v| v / grid.len() as f64).collect::<Vec<f64>>())
                })?;
                for (fi, (name, g)) in fns.iter().enumerate() {
                    let series: Vec<f64> = avgs.iter().map(|a| a[fi]).collect();
                    let b = batch_means(&series, opts.batches);
                    let target = quadratic_variation_u(g, p.interaction, p.alpha, theta);
                    let mut row: Vec<Cell> = vec![sigma_label(&p).into(), p.alpha.into(), p.torus.side().into(), theta.into()];
                    row.extend([
                        name.as_str().into(),
                        g.order().into(),
                        b.mean.into(),
                        b.se.into(),
                        opts.batches.into(),
                        opts.gamma_samples.into(),
                        opts.horizon.into(),
                        target.into(),
                        z_score(b.mean, b.se, target).into(),
                    ]);
                    gamma.push(row);
                }
            }
        }
        let mut tables = vec![moments, norm];
        if !gamma.rows.is_empty() {
            tables.push(gamma);
        }
        Ok(Report { tables, passed: None })
    }
}
