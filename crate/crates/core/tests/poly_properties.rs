mod common;

use std::sync::Arc;

use common::{catalog_graph, sink_free_catalog_graph};
use fockforge::dilation::minimal_dilation;
use fockforge::family::Operator;
use fockforge::graph::{catalog, enumerate_paths};
use fockforge::linalg::{max_abs_diff, op_norm, C64};
use fockforge::poly::{
    evaluate_matrix, evaluate_star, random_graph_polynomial, sup_norm_estimate, von_neumann_check, GraphPolynomial, NormOptions,
    StarPolynomial, Verdict,
};
use fockforge::synth::{self, ContractionShape};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn evaluation_is_a_homomorphism((_, g) in catalog_graph(), seed in any::<u64>(), re in -2.0..2.0f64, im in -2.0..2.0f64) {
        let mut rng = synth::rng(seed);
        let t = synth::random_row_contraction(g.clone(), ContractionShape::default(), &mut rng);
        let p = random_graph_polynomial(g.clone(), 3, 4, &mut rng);
        let q = random_graph_polynomial(g.clone(), 3, 4, &mut rng);
        let z = C64::new(re, im);
        let (ep, eq) = (evaluate_matrix(&p, &t).unwrap(), evaluate_matrix(&q, &t).unwrap());
        let product = evaluate_matrix(&p.mul(&q), &t).unwrap();
        prop_assert!(max_abs_diff(&product, &(&ep * &eq)) <= 1e-10);
        let combo = evaluate_matrix(&p.add(&q.scale(z)), &t).unwrap();
        prop_assert!(max_abs_diff(&combo, &(&ep + eq * z)) <= 1e-10);
    }

    #[test]
    fn section_norms_never_decrease((_, g) in catalog_graph(), seed in any::<u64>()) {
        let p = random_graph_polynomial(g, 3, 4, &mut synth::rng(seed));
        let est = sup_norm_estimate(&p, NormOptions { budget: 1 << 14, ..NormOptions::default() });
        for pair in est.estimates.windows(2) {
            prop_assert!(pair[1] >= pair[0]);
        }
    }

    #[test]
    fn row_contractions_obey_the_inequality((_, g) in catalog_graph(), seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let t = synth::random_row_contraction(g.clone(), ContractionShape::default(), &mut rng);
        let p = random_graph_polynomial(g, 3, 4, &mut rng);
        prop_assume!(!p.is_zero());
        let report = von_neumann_check(&t, &p, NormOptions { budget: 1 << 16, ..NormOptions::default() }, 1e-8).unwrap();
        prop_assert_ne!(report.verdict, Verdict::Fail);
        if report.estimate.stalled {
            prop_assert!(report.lhs <= report.estimate.value() + 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Sections of `p(S, S*)` for the dilation `S` stay below the Fock-space norm.
    #[test]
    fn starred_polynomials_of_dilations_are_bounded((_, g) in sink_free_catalog_graph(), seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let t = synth::random_row_contraction(g.clone(), ContractionShape { max_dim: 2, row_norm: None }, &mut rng);
        let dr = minimal_dilation(&t, 1e-12).unwrap();
        let paths: Vec<_> = (0..=2).flat_map(|d| enumerate_paths(&g, d)).collect();
        let mut p = StarPolynomial::zero(g.clone());
        for _ in 0..3 {
            let v = &paths[rng.random_range(0..paths.len())];
            let w = &paths[rng.random_range(0..paths.len())];
            p.add_term(v.clone(), w.clone(), synth::gaussian(&mut rng));
        }
        prop_assume!(!p.terms().is_empty());
        let Operator::Local(op) = evaluate_star(&p, &dr.family).unwrap() else {
            panic!("dilations are graded");
        };
        let lhs = op_norm(&op.compress(2, 4).unwrap());
        let est = sup_norm_estimate(&p, NormOptions { budget: 1 << 16, ..NormOptions::default() });
        // Unsettled estimates are only lower bounds, so fall back to the triangle inequality.
        let bound = if est.stalled { est.value() } else { p.terms().values().map(|c| c.norm()).sum() };
        prop_assert!(lhs <= bound + 1e-8, "{} > {} ({:?})", lhs, bound, est.stop);
    }
}

#[test]
fn the_two_cycle_sum_is_strictly_smaller_than_the_bouquet_sum() {
    let norm = |g: fockforge::graph::Graph, text: &str| {
        let p = GraphPolynomial::parse(Arc::new(g), text).unwrap();
        let est = sup_norm_estimate(&p, NormOptions::default());
        assert!(est.stalled);
        est.value()
    };
    let cyc = norm(catalog::cyc2(), "e + f");
    let bouquet = norm(catalog::c2(), "a + b");
    assert_eq!(cyc, 1.0);
    assert!(bouquet - cyc >= 0.4, "{cyc} vs {bouquet}");
}
