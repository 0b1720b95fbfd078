mod common;

use std::sync::Arc;

use common::{catalog_graph, small_graph};
use fockforge::family::{extract_graph, validate, wandering_by_kernels, wandering_subspace, Mode, OperatorFamily};
use fockforge::graph::{catalog, find_isomorphism};
use fockforge::linalg::subspace_distance;
use fockforge::synth;
use proptest::prelude::*;

fn cycle_graph() -> impl Strategy<Value = Arc<fockforge::graph::Graph>> {
    prop::sample::select(vec![Arc::new(catalog::c1()), Arc::new(catalog::cyc2()), Arc::new(catalog::cycle3())])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn finite_ck_families_have_no_wandering_vectors(g in cycle_graph(), m in 1usize..=3, seed in any::<u64>()) {
        let fam = synth::random_ck_family(g, m, &mut synth::rng(seed)).unwrap();
        prop_assert!(validate(&fam, Mode::Ck, 0, 1e-10).unwrap().valid);
        let w = wandering_subspace(&fam, 0, 1e-10).unwrap();
        prop_assert!(w.alpha.iter().all(|a| *a == 0));
    }

    #[test]
    fn multiplicities_add_under_direct_sums(
        (_, g) in catalog_graph(),
        a in prop::collection::vec(1usize..3, 3),
        b in prop::collection::vec(0usize..3, 3),
    ) {
        let n = g.vertex_count();
        let (a, b) = (&a[..n], &b[..n]);
        let fa = OperatorFamily::pure_ampliation(g.clone(), a).unwrap();
        // An all-zero ampliation has vanishing generators and is rejected.
        let fb = OperatorFamily::pure_ampliation(g.clone(), b);
        prop_assume!(fb.is_ok());
        let fb = fb.unwrap();
        let sum = fa.direct_sum(&fb).unwrap();
        let w = wandering_subspace(&sum, 3, 1e-10).unwrap();
        let expect: Vec<usize> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        prop_assert_eq!(w.alpha, expect);
    }

    #[test]
    fn kernel_and_range_routes_agree((_, g) in catalog_graph(), a in prop::collection::vec(1usize..3, 3), depth in 1usize..4) {
        let fam = OperatorFamily::pure_ampliation(g.clone(), &a[..g.vertex_count()]).unwrap();
        let by_range = wandering_subspace(&fam, depth, 1e-10).unwrap();
        let by_kernel = wandering_by_kernels(&fam, depth, 1e-10);
        prop_assert_eq!(by_range.basis.ncols(), by_kernel.ncols());
        prop_assert!(subspace_distance(&by_range.basis, &by_kernel) < 1e-10);
    }

    #[test]
    fn sections_of_the_pure_model_recover_the_graph(g in small_graph(4)) {
        let fam = OperatorFamily::pure_model(Arc::new(g.clone()));
        let h = extract_graph(&fam.dense_edges(2), &fam.dense_vertices(2), 1e-12).unwrap();
        prop_assert!(find_isomorphism(&g, &h).is_some());
    }

    #[test]
    fn documents_round_trip(g in cycle_graph(), m in 1usize..=2, seed in any::<u64>()) {
        let fam = synth::random_ck_family(g, m, &mut synth::rng(seed)).unwrap();
        let doc = fam.to_document().unwrap();
        let back = fockforge::family::FamilyDocument::parse(&doc.to_json()).unwrap();
        prop_assert_eq!(&back, &doc);
    }
}
