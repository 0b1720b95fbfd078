mod common;

use std::sync::Arc;

use common::{small_graph, source_free_graph};
use fockforge::cstar::vacuum_defect_residual;
use fockforge::family::{validate, Mode, OperatorFamily};
use fockforge::fock::{
    left_creation, right_creation, tree_projection, vertex_projection_left, FockBasis, GradedBasis, LocalOperator,
};
use fockforge::graph::{EdgeId, Graph, VertexId};
use fockforge::linalg::{max_abs_diff, C64};
use proptest::prelude::*;

/// `(kind, index)` picks one of `L_e, L_e*, R_e, R_e*, P_x, Q_x`.
fn factor(b: &Arc<FockBasis>, g: &Graph, kind: usize, index: usize) -> LocalOperator {
    let e = EdgeId(index % g.edge_count());
    let x = VertexId(index % g.vertex_count());
    match kind % 6 {
        0 => left_creation(b, e).unwrap(),
        1 => left_creation(b, e).unwrap().adjoint(),
        2 => right_creation(b, e).unwrap(),
        3 => right_creation(b, e).unwrap().adjoint(),
        4 => vertex_projection_left(b, x).unwrap(),
        _ => tree_projection(b, x).unwrap(),
    }
}

type Word = Vec<(usize, usize)>;

fn expression(b: &Arc<FockBasis>, g: &Graph, terms: &[(Word, (f64, f64))]) -> LocalOperator {
    let ops: Vec<LocalOperator> = terms
        .iter()
        .map(|(word, (re, im))| {
            let mut op = LocalOperator::identity(b.clone());
            for (kind, index) in word {
                op = factor(b, g, *kind, *index).compose(&op).unwrap();
            }
            op.scale(C64::new(*re, *im))
        })
        .collect();
    LocalOperator::sum(b.clone(), &ops).unwrap()
}

fn terms() -> impl Strategy<Value = Vec<(Word, (f64, f64))>> {
    prop::collection::vec((prop::collection::vec((0usize..6, 0usize..4), 1..=3), (-2.0..2.0f64, -2.0..2.0f64)), 1..=3)
}

fn up(op: &LocalOperator) -> usize {
    op.shift().1.max(0) as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn creation_relations_hold_exactly(g in small_graph(4)) {
        let report = validate(&OperatorFamily::pure_model(Arc::new(g)), Mode::Ckt, 5, 0.0).unwrap();
        prop_assert!(report.valid);
        prop_assert_eq!(report.residual(), 0.0);
    }

    #[test]
    fn defect_is_the_vacuum_projection(g in source_free_graph(3)) {
        prop_assert_eq!(vacuum_defect_residual(Arc::new(g), 4), 0.0);
    }

    #[test]
    fn adjoints_are_consistent(g in small_graph(4), t in terms()) {
        let g = Arc::new(g);
        let b = FockBasis::new(g.clone());
        let a = expression(&b, &g, &t);
        let a_star = a.adjoint();
        let n = b.dim_through(3);
        for u in 0..n {
            let col = a.apply(u);
            for v in 0..n {
                let forward: C64 = col.iter().filter(|(i, _)| *i == v).map(|(_, z)| *z).sum();
                let backward: C64 = a_star.apply(v).iter().filter(|(i, _)| *i == u).map(|(_, z)| *z).sum();
                prop_assert!((forward - backward.conj()).norm() <= 1e-12 * (1.0 + forward.norm()));
            }
        }
    }

    #[test]
    fn compression_respects_composition(g in small_graph(4), s in terms(), t in terms(), d in 0usize..3) {
        let g = Arc::new(g);
        let b = FockBasis::new(g.clone());
        let (a, c) = (expression(&b, &g, &s), expression(&b, &g, &t));
        let mid = d + up(&c);
        let top = mid + up(&a);
        let lhs = a.compose(&c).unwrap().compress(d, top).unwrap();
        let rhs = a.compress(mid, top).unwrap() * c.compress(d, mid).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn declared_shifts_bound_the_action(g in small_graph(4), t in terms()) {
        let g = Arc::new(g);
        let b = FockBasis::new(g.clone());
        prop_assert!(expression(&b, &g, &t).respects_shift(4));
    }
}
