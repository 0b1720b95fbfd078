mod common;

use common::{graph_from, small_graph};
use fockforge::graph::{
    catalog, deform, deformation_leq, enumerate_paths, find_isomorphism, uniform_aperiodic_path_property, Path, VertexId,
};
use proptest::prelude::*;

fn partition_from_labels(labels: &[usize]) -> Vec<Vec<VertexId>> {
    let mut blocks: Vec<Vec<VertexId>> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for (v, l) in labels.iter().enumerate() {
        match seen.iter().position(|x| x == l) {
            Some(k) => blocks[k].push(VertexId(v)),
            None => {
                seen.push(*l);
                blocks.push(vec![VertexId(v)]);
            }
        }
    }
    blocks
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paths_are_composable_and_extend_one_edge_at_a_time(g in small_graph(4), d in 0usize..5) {
        let level = enumerate_paths(&g, d);
        for w in &level {
            prop_assert_eq!(w.len(), d);
            if d > 0 {
                prop_assert_eq!(Path::from_edges(&g, w.edges().to_vec()), Some(w.clone()));
            }
        }
        let pairs: usize = level.iter().map(|w| g.edge_ids().filter(|e| w.prepend(&g, *e).is_some()).count()).sum();
        prop_assert_eq!(enumerate_paths(&g, d + 1).len(), pairs);
    }

    #[test]
    fn enumeration_matches_word_filtering(g in small_graph(3), d in 1usize..5) {
        let m = g.edge_count();
        let mut count = 0;
        for code in 0..m.pow(d as u32) {
            let word: Vec<_> = (0..d).map(|k| g.edge_ids().nth(code / m.pow(k as u32) % m).unwrap()).collect();
            count += usize::from(Path::from_edges(&g, word).is_some());
        }
        prop_assert_eq!(enumerate_paths(&g, d).len(), count);
    }

    #[test]
    fn deformation_order_is_reflexive(g in small_graph(3)) {
        prop_assert!(deformation_leq(&g, &g).holds);
    }

    #[test]
    fn deformations_compose(g in small_graph(3), a in prop::collection::vec(0usize..3, 3), b in prop::collection::vec(0usize..3, 3)) {
        let p1 = partition_from_labels(&a[..g.vertex_count()]);
        let h = deform(&g, &p1).unwrap();
        let p2 = partition_from_labels(&b[..h.vertex_count()]);
        let k = deform(&h, &p2).unwrap();
        prop_assert!(deformation_leq(&g, &h).holds);
        prop_assert!(deformation_leq(&h, &k).holds);
        prop_assert!(deformation_leq(&g, &k).holds);
    }

    #[test]
    fn mutual_deformations_are_isomorphic(g in small_graph(3), h in small_graph(3)) {
        if deformation_leq(&g, &h).holds && deformation_leq(&h, &g).holds {
            prop_assert!(find_isomorphism(&g, &h).is_some());
        }
    }
}

#[test]
fn order_is_antisymmetric_on_all_graphs_with_two_vertices_and_two_edges() {
    let pairs: Vec<(usize, usize)> = (0..2).flat_map(|s| (0..2).map(move |r| (s, r))).collect();
    let mut graphs = Vec::new();
    for n in 1..=2 {
        for a in pairs.iter().filter(|(s, r)| *s < n && *r < n) {
            for b in pairs.iter().filter(|(s, r)| *s < n && *r < n) {
                graphs.push(graph_from(n, &[*a, *b]));
            }
        }
    }
    for g in &graphs {
        for h in &graphs {
            let both = deformation_leq(g, h).holds && deformation_leq(h, g).holds;
            assert_eq!(both, find_isomorphism(g, h).is_some(), "{}\n{}", g.to_text(), h.to_text());
        }
    }
}

#[test]
fn bouquets_have_the_aperiodic_path_property_from_two_loops_on() {
    assert!(!uniform_aperiodic_path_property(&catalog::cn(1)).holds);
    for n in 2..=5 {
        assert!(uniform_aperiodic_path_property(&catalog::cn(n)).holds, "C{n}");
    }
}
