use anyhow::{bail, Result};
use fieldslab_core::exact::{check_detailed_balance, check_duality_identity};
use fieldslab_core::fields::{check_product_expansion, BruteForceEvaluator, FieldEvaluator, PartitionEvaluator};
use fieldslab_core::lattice::{Configuration, Interaction, ModelParams};
use fieldslab_core::rng::{derive_seed, StreamKey};
use fieldslab_core::testfn::ProductTestFunction;
use fieldslab_core::theory::check_expectation_expansion;
use rand::Rng;
use rayon::prelude::*;

use super::{sigma_label, test_functions_or_default, Experiment, Report};
use crate::config::{ExperimentConfig, Identity};
use crate::emit::{Cell, Table};

pub struct ExactCheck;

const COLUMNS: [&str; 12] =
    ["identity", "sigma", "alpha", "n", "k", "l", "theta", "instances", "residual", "scale", "tolerance", "pass"];

/// Largest `N^{k+ℓ}` summed term by term before switching to the partition algorithm.
const BRUTE_FORCE_TERMS: u128 = 5_000_000;

struct Row {
    identity: Identity,
    params: ModelParams,
    k: usize,
    l: Option<usize>,
    theta: Option<f64>,
    instances: usize,
    residual: f64,
    scale: f64,
}

fn evaluator_for(p: &ModelParams, order: usize) -> Box<dyn FieldEvaluator> {
    let terms = (p.torus.num_sites() as u128).saturating_pow(order as u32);
    if terms <= BRUTE_FORCE_TERMS {
        Box::new(BruteForceEvaluator::default())
    } else {
        Box::new(PartitionEvaluator)
    }
}

fn random_configuration<R: Rng>(p: &ModelParams, max_occupancy: u32, rng: &mut R) -> Configuration {
    let top = p.occupancy_cap().unwrap_or(max_occupancy);
    Configuration::from_occupancy((0..p.torus.num_sites()).map(|_| rng.random_range(0..=top)).collect())
}

fn valid_thetas(p: &ModelParams, thetas: &[f64]) -> Vec<f64> {
    thetas.iter().copied().filter(|&t| p.interaction != Interaction::Exclusion || t <= 1.0).collect()
}

/// Ordered pairs `(G, H)` with `ord(H) <= ord(G)`.
fn pairs(fns: &[(String, ProductTestFunction)], max_order: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..fns.len() {
        for j in 0..fns.len() {
            let (k, l) = (fns[i].1.order(), fns[j].1.order());
            if l <= k && k <= max_order && (l < k || j >= i) {
                out.push((i, j));
            }
        }
    }
    out
}

impl Experiment for ExactCheck {
    fn name(&self) -> &'static str {
        "exact-check"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Report> {
        let opts = &cfg.exact;
        let grid = cfg.grid()?;
        let fns = test_functions_or_default(cfg)?;
        let per_point: Vec<Vec<Row>> = grid
            .par_iter()
            .map(|gp| -> Result<Vec<Row>> {
                let p = gp.params;
                let mut rows = Vec::new();
                for &identity in &opts.identities {
                    match identity {
                        Identity::Duality => {
                            for &k in &opts.orders {
                                let r = check_duality_identity(&p.torus, k, &p, opts.max_particles, opts.state_cap, opts.perturbation)?;
                                rows.push(Row {
                                    identity,
                                    params: p,
                                    k,
                                    l: None,
                                    theta: None,
                                    instances: r.pairs,
                                    residual: r.residual.max(r.excluded),
                                    scale: r.scale.max(1.0),
                                });
                            }
                        }
                        Identity::DetailedBalance => {
                            for th in valid_thetas(&p, &opts.thetas) {
                                let r = check_detailed_balance(&p.torus, &p, th, opts.max_particles, opts.state_cap, opts.perturbation)?;
                                rows.push(Row {
                                    identity,
                                    params: p,
                                    k: 0,
                                    l: None,
                                    theta: Some(th),
                                    instances: r.states,
                                    residual: r.residual.max(r.stationarity),
                                    scale: 1.0,
                                });
                            }
                        }
                        Identity::ProductExpansion => {
                            for (pi, &(i, j)) in pairs(&fns, usize::MAX).iter().enumerate() {
                                let (g, h) = (&fns[i].1, &fns[j].1);
                                let ev = evaluator_for(&p, g.order() + h.order());
                                let seed = derive_seed(cfg.seed, &[gp.index as u64, pi as u64]);
                                let (mut residual, mut scale) = (0.0f64, 1.0f64);
                                for c in 0..opts.configs_per_point {
                                    let mut rng = StreamKey::new(seed, c as u64).stream(0);
                                    let eta = random_configuration(&p, opts.max_occupancy, &mut rng);
                                    let r = check_product_expansion(g, h, &eta, &p.torus, ev.as_ref())?;
                                    if r.relative() > residual / scale {
                                        residual = r.residual;
                                        scale = 1.0 + r.lhs.abs();
                                    }
                                }
                                if opts.configs_per_point > 0 {
                                    rows.push(Row {
                                        identity,
                                        params: p,
                                        k: g.order(),
                                        l: Some(h.order()),
                                        theta: None,
                                        instances: opts.configs_per_point,
                                        residual,
                                        scale,
                                    });
                                }
                            }
                        }
                        Identity::ExpectationExpansion => {
                            for &(i, j) in &pairs(&fns, 2) {
                                let (g, h) = (&fns[i].1, &fns[j].1);
                                let ev = evaluator_for(&p, g.order() + h.order());
                                for th in valid_thetas(&p, &opts.thetas) {
                                    let r = check_expectation_expansion(g, h, &p, th, ev.as_ref())?;
                                    rows.push(Row {
                                        identity,
                                        params: p,
                                        k: g.order(),
                                        l: Some(h.order()),
                                        theta: Some(th),
                                        instances: 1,
                                        residual: r.residual,
                                        scale: 1.0 + r.lhs.abs(),
                                    });
                                }
                            }
                        }
                    }
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        let rows: Vec<Row> = per_point.into_iter().flatten().collect();
        if rows.is_empty() {
            bail!("no instances: the selected identities produced no checks");
        }
        let mut table = Table::new("residuals", &COLUMNS);
        let mut passed = true;
        for r in &rows {
            let ok = r.residual <= opts.tolerance * r.scale;
            passed &= ok;
            table.push(vec![
                r.identity.name().into(),
                sigma_label(&r.params).into(),
                r.params.alpha.into(),
                r.params.torus.side().into(),
                r.k.into(),
                r.l.map_or(Cell::Null, Cell::from),
                r.theta.into(),
                r.instances.into(),
                r.residual.into(),
                r.scale.into(),
                opts.tolerance.into(),
                ok.into(),
            ]);
        }
        let mut summary = Table::new("summary", &["identity", "checks", "max_relative_residual", "tolerance", "pass"]);
        for id in crate::config::Identity::ALL {
            let sel: Vec<&Row> = rows.iter().filter(|r| r.identity == id).collect();
            if sel.is_empty() {
                continue;
            }
            let worst = sel.iter().map(|r| r.residual / r.scale).fold(0.0, f64::max);
            summary.push(vec![id.name().into(), sel.len().into(), worst.into(), opts.tolerance.into(), (worst <= opts.tolerance).into()]);
        }
        Ok(Report { tables: vec![table, summary], passed: Some(passed) })
    }
}
