mod common;

use std::sync::Arc;

use common::sink_free_catalog_graph;
use fockforge::dilation::phi_iterates;
use fockforge::family::{wandering_subspace, Operator, OperatorFamily};
use fockforge::graph::{catalog, Graph};
use fockforge::linalg::{identity, lambda_max, lambda_min, CMatrix, C64};
use fockforge::synth::{self, ContractionShape};
use fockforge::wold::{commutant_basis, random_commutant_element, similarity_to_unitary, szego_condition, wold_decompose};
use proptest::prelude::*;

fn cycle_graph() -> impl Strategy<Value = Arc<Graph>> {
    prop::sample::select(vec![Arc::new(catalog::c1()), Arc::new(catalog::cyc2()), Arc::new(catalog::cycle3())])
}

/// A pure ampliation plus a CK block when the graph admits one; `None` if both are empty.
fn mixed_family(g: &Arc<Graph>, alpha: &[usize], m: usize, seed: u64) -> Option<OperatorFamily> {
    let pure = alpha.iter().any(|a| *a > 0).then(|| OperatorFamily::pure_ampliation(g.clone(), alpha).unwrap());
    let ck = (synth::admits_finite_ck(g) && m > 0).then(|| synth::random_ck_family(g.clone(), m, &mut synth::rng(seed)).unwrap());
    match (pure, ck) {
        (Some(p), Some(c)) => Some(p.direct_sum(&c).unwrap()),
        (p, c) => p.or(c),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn two_routes_give_the_same_multiplicities(
        (_, g) in sink_free_catalog_graph(),
        alpha in prop::collection::vec(0usize..3, 3),
        m in 0usize..3,
        seed in any::<u64>(),
    ) {
        let alpha = &alpha[..g.vertex_count()];
        let fam = mixed_family(&g, alpha, m, seed);
        prop_assume!(fam.is_some());
        let fam = fam.unwrap();
        let report = wold_decompose(&fam, 4, 1e-9).unwrap();
        let wandering = wandering_subspace(&fam, 4, 1e-10).unwrap();
        let from_wold: Vec<usize> = report.alpha.values().copied().collect();
        prop_assert_eq!(&from_wold, &wandering.alpha);
        prop_assert_eq!(&from_wold[..], alpha);
    }

    #[test]
    fn the_coisometric_part_has_no_pure_part(
        g in cycle_graph(),
        alpha in prop::collection::vec(0usize..3, 3),
        m in 1usize..3,
        seed in any::<u64>(),
    ) {
        let fam = mixed_family(&g, &alpha[..g.vertex_count()], m, seed).unwrap();
        let report = wold_decompose(&fam, 4, 1e-9).unwrap();
        let v = &report.hc_basis;
        prop_assert_eq!(v.ncols(), m * g.vertex_count());
        let cut = |ops: Vec<CMatrix>| ops.iter().map(|s| v.adjoint() * s * v).collect::<Vec<_>>();
        let depth = report.depth.unwrap_or(0);
        let restricted = OperatorFamily::from_matrices(g.clone(), cut(fam.dense_edges(depth)), cut(fam.dense_vertices(depth))).unwrap();
        let again = wold_decompose(&restricted, 4, 1e-9).unwrap();
        prop_assert_eq!(again.dim_hp, 0);
        prop_assert_eq!(again.dim_hc, v.ncols());
    }

    #[test]
    fn backward_iterates_decrease((_, g) in sink_free_catalog_graph(), seed in any::<u64>()) {
        let t = synth::random_row_contraction(g, ContractionShape::default(), &mut synth::rng(seed));
        let iterates = phi_iterates(&t.ts, t.dim(), 6);
        for pair in iterates.windows(2) {
            prop_assert!(lambda_min(&pair[1]) >= -1e-12);
            prop_assert!(lambda_max(&pair[0]) <= 1.0 + 1e-12);
            prop_assert!(lambda_min(&(&pair[0] - &pair[1])) >= -1e-12);
        }
    }

    #[test]
    fn similar_ck_families_are_unitarily_equivalent(g in cycle_graph(), m in 1usize..=2, seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let fam = synth::random_ck_family(g.clone(), m, &mut rng).unwrap();
        let basis = commutant_basis(&fam, 1e-10).unwrap();
        let b = random_commutant_element(&basis, &mut rng).unwrap();
        let w = synth::random_unitary(m * g.vertex_count(), &mut rng);
        let other = fam.conjugate(&w).unwrap();
        let cert = similarity_to_unitary(&fam, &other, &(&w * b), 1e-10).unwrap();
        prop_assert!(cert.unitarity <= 1e-10);
        prop_assert!(cert.intertwining <= 1e-10 * cert.condition_number);
    }

    #[test]
    fn commutant_squares_satisfy_the_szego_condition(g in cycle_graph(), m in 1usize..=2, eps in 0.01f64..1.0, seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let fam = synth::random_ck_family(g.clone(), m, &mut rng).unwrap();
        let basis = commutant_basis(&fam, 1e-10).unwrap();
        let a = random_commutant_element(&basis, &mut rng).unwrap();
        let n = a.nrows();
        let y = a.adjoint() * &a + identity(n) * C64::new(eps, 0.0);
        let report = szego_condition(&fam, &Operator::Matrix(y), 0, 1e-9).unwrap();
        prop_assert!(report.holds, "{:?}", report);
    }
}
