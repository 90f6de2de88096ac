#![allow(clippy::needless_range_loop)]

use std::sync::Arc;

use fieldslab_core::fields::*;
use fieldslab_core::lattice::*;
use fieldslab_core::measures::MarginalSpec;
use fieldslab_core::testfn::families::{Bump, Hermite, Trig};
use fieldslab_core::testfn::*;
use fieldslab_core::theory::*;
use proptest::prelude::*;

fn interaction() -> impl Strategy<Value = Interaction> {
    prop_oneof![Just(Interaction::Exclusion), Just(Interaction::Independent), Just(Interaction::Inclusion)]
}

fn factor() -> impl Strategy<Value = Arc<dyn Factor>> {
    prop_oneof![
        (1i64..4, -3.0..3.0f64, -1.0..1.0f64, 0.2..2.0f64).prop_map(|(m, ph, off, a)| {
            Arc::new(Trig { amplitude: a, mode: vec![m], phase: ph, offset: off }) as Arc<dyn Factor>
        }),
        (0.0..1.0f64, 0.05..0.4f64, -2.0..2.0f64).prop_map(|(c, w, a)| {
            Arc::new(Bump { amplitude: a, center: vec![c], width: w }) as Arc<dyn Factor>
        }),
        (0usize..4, 0.0..1.0f64, 0.08..0.3f64).prop_map(|(n, c, s)| Arc::new(Hermite::new(n, c, s)) as Arc<dyn Factor>),
    ]
}

fn product(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = ProductTestFunction> {
    prop::collection::vec(factor(), k).prop_map(ProductTestFunction::new)
}

/// Interaction, α, and an admissible configuration on `N ∈ [2, max_n]`.
fn model(max_n: usize) -> impl Strategy<Value = (ModelParams, Configuration)> {
    (interaction(), 1u32..3, 2usize..=max_n).prop_flat_map(|(i, alpha, n)| {
        let cap = if i == Interaction::Exclusion { alpha } else { 4 };
        prop::collection::vec(0..=cap, n).prop_map(move |occ| {
            let p = ModelParams::new(i, alpha, Torus::new(1, n).unwrap()).unwrap();
            (p, Configuration::from_occupancy(occ))
        })
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn fast_field_matches_bruteforce((p, eta) in model(6), g in product(1..=3)) {
        let a = eval_field(&g, &eta, &p.torus).unwrap();
        let b = eval_field_bruteforce(&g, &eta, &p.torus).unwrap();
        prop_assert!(close(a, b, 1e-10), "{} vs {}", a, b);
    }

    #[test]
    fn fast_expectation_matches_bruteforce((p, _eta) in model(5), g in product(1..=3), theta in 0.0..1.0f64) {
        let m = ProfileMoments::constant(theta, &p, 3);
        let a = PartitionEvaluator.expected(&g, &m, &p.torus).unwrap();
        let b = BruteForceEvaluator::default().expected(&g, &m, &p.torus).unwrap();
        prop_assert!(close(a, b, 1e-10));
    }

    #[test]
    fn product_expansion_holds((p, eta) in model(6), g in product(1..=2), h in product(1..=2)) {
        let r = check_product_expansion(&g, &h, &eta, &p.torus, &PartitionEvaluator).unwrap();
        prop_assert!(r.relative() < 1e-10, "{:?}", r);
    }

    #[test]
    fn product_expansion_with_bruteforce_terms((p, eta) in model(4), g in product(1..=2), h in product(1..=1)) {
        let r = check_product_expansion(&g, &h, &eta, &p.torus, &BruteForceEvaluator::default()).unwrap();
        prop_assert!(r.relative() < 1e-10, "{:?}", r);
    }

    #[test]
    fn expectation_expansion_holds(i in interaction(), alpha in 1u32..3, n in prop::sample::select(vec![4usize, 8]),
                                   theta in 0.05..0.95f64, g in product(1..=2), h in product(1..=2)) {
        let p = ModelParams::new(i, alpha, Torus::new(1, n).unwrap()).unwrap();
        let r = check_expectation_expansion(&g, &h, &p, theta, &PartitionEvaluator).unwrap();
        prop_assert!(r.relative() < 1e-10, "{:?}", r);
    }

    #[test]
    fn increments_match_recomputation((p, eta) in model(6), g in product(1..=3), z in 0usize..6, step in prop::bool::ANY) {
        let n = p.torus.num_sites();
        let z = z % n;
        prop_assume!(eta.occupancy()[z] > 0);
        let w = if step { (z + 1) % n } else { (z + n - 1) % n };
        let before = eval_field_bruteforce(&g, &eta, &p.torus).unwrap();
        let mut moved = eta.clone();
        moved.move_particle(Site(z), Site(w)).unwrap();
        let after = eval_field_bruteforce(&g, &moved, &p.torus).unwrap();
        let mut st = FieldState::new(&g, eta, &p.torus).unwrap();
        let d = st.delta_on_move(Site(z), Site(w)).unwrap();
        prop_assert!((d - (after - before)).abs() < 1e-12 * (1.0 + before.abs()));
        st.apply_move(Site(z), Site(w)).unwrap();
        prop_assert!(close(st.value(), after, 1e-12));
    }

    #[test]
    fn carre_du_champ_matches_bruteforce((p, eta) in model(6), g in product(1..=3)) {
        let a = carre_du_champ(&g, &eta, &p).unwrap();
        let b = carre_du_champ_bruteforce(&g, &eta, &p).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!(close(a, b, 1e-10));
    }

    #[test]
    fn first_order_z_equals_y((p, eta) in model(8), g in product(1..=1), theta in 0.0..1.0f64) {
        let y = fluctuation_field_y(&g, &eta, &p, theta).unwrap();
        let z = fluctuation_field_z(&g, &eta, &p, theta).unwrap();
        prop_assert!((y - z).abs() < 1e-12 * (1.0 + y.abs()));
    }

    #[test]
    fn symmetrization_is_idempotent_and_invariant(g in product(2..=3), x in prop::collection::vec(0usize..5, 3)) {
        let t = Torus::new(1, 5).unwrap();
        let sym = TestFunctionSum::single(g.clone()).symmetrize().unwrap();
        let twice = sym.symmetrize().unwrap();
        let sites: Vec<Site> = x[..g.order()].iter().map(|&v| Site(v)).collect();
        let mut rev = sites.clone();
        rev.reverse();
        prop_assert!((sym.at_sites(&t, &sites) - sym.at_sites(&t, &rev)).abs() < 1e-13);
        prop_assert!((sym.at_sites(&t, &sites) - twice.at_sites(&t, &sites)).abs() < 1e-13);
    }

    #[test]
    fn limiting_variances_are_nonnegative(i in interaction(), alpha in 1u32..3, theta in 0.0..1.0f64, g in product(1..=2)) {
        prop_assert!(equilibrium_covariance(&g, &g, i, alpha, theta) >= -1e-12);
        prop_assert!(quadratic_variation_u(&g, i, alpha, theta) >= -1e-12);
        prop_assert_eq!(equilibrium_covariance(&g, &g, Interaction::Exclusion, alpha, 1.0), 0.0);
        prop_assert_eq!(quadratic_variation_u(&g, Interaction::Exclusion, alpha, 1.0), 0.0);
    }

    #[test]
    fn partition_plan_round_trip(k in 1usize..7, vals in prop::collection::vec(-2.0..2.0f64, 7)) {
        let mut kappa = vec![0.0; k + 1];
        moments_to_cumulants(&vals[..=k], &mut kappa);
        let plan = PartitionPlan::new(k);
        let mut s = vec![0.0; 1 << k];
        for (mask, slot) in s.iter_mut().enumerate().skip(1) {
            *slot = kappa[(mask as u32).count_ones() as usize];
        }
        prop_assert!((plan.evaluate(&s) - vals[k]).abs() < 1e-9 * (1.0 + vals[k].abs()));
    }
}

/// Every configuration of a small torus with its product-measure weight.
fn enumerate(p: &ModelParams, theta: f64, max_occ: u32) -> Vec<(Configuration, f64)> {
    let marginal = MarginalSpec::new(p.interaction, p.alpha, theta).unwrap();
    let top = p.occupancy_cap().unwrap_or(max_occ);
    let n = p.torus.num_sites();
    let mut out = Vec::new();
    let mut occ = vec![0u32; n];
    loop {
        let w: f64 = occ.iter().map(|&v| marginal.weight(v)).product();
        out.push((Configuration::from_occupancy(occ.clone()), w));
        let mut i = 0;
        while i < n && occ[i] == top {
            occ[i] = 0;
            i += 1;
        }
        if i == n {
            return out;
        }
        occ[i] += 1;
    }
}

#[test]
fn fluctuation_moments_by_enumeration() {
    let g1 = ProductTestFunction::new(vec![Arc::new(Bump::new(0.2, 0.2))]);
    let g2 = ProductTestFunction::new(vec![Arc::new(Trig::cos(1)), Arc::new(Bump::new(0.6, 0.3))]);
    let theta = 0.3;
    for i in Interaction::ALL {
        let p = ModelParams::new(i, 2, Torus::new(1, 3).unwrap()).unwrap();
        let states = enumerate(&p, theta, 30);
        let mass: f64 = states.iter().map(|s| s.1).sum();
        assert!((mass - 1.0).abs() < 1e-12, "{i:?}: {mass}");
        for g in [&g1, &g2] {
            let (mut ey, mut ez, mut ey2) = (0.0, 0.0, 0.0);
            for (eta, w) in &states {
                let y = fluctuation_field_y(g, eta, &p, theta).unwrap();
                ey += w * y;
                ey2 += w * y * y;
                ez += w * fluctuation_field_z(g, eta, &p, theta).unwrap();
            }
            assert!(ey.abs() < 1e-11, "{i:?} k={}: E[Y]={ey}", g.order());
            assert!(ez.abs() < 1e-11, "{i:?} k={}: E[Z]={ez}", g.order());
            let want = stationary_cov_finite_n(g, g, &p, theta).unwrap();
            assert!((ey2 - want).abs() < 1e-10 * (1.0 + want), "{i:?} k={}: {ey2} vs {want}", g.order());
        }
    }
}
