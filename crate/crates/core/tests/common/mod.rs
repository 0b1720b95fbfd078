#![allow(dead_code)]

use std::sync::Arc;

use fockforge::graph::{catalog, Graph};
use proptest::prelude::*;

/// Builds a graph on vertices `v0..` from `(source, range)` pairs.
pub fn graph_from(n: usize, edges: &[(usize, usize)]) -> Graph {
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut g = Graph::new();
    for name in &names {
        g.add_vertex(name).unwrap();
    }
    for (k, (s, r)) in edges.iter().enumerate() {
        g.add_edge(&format!("e{k}"), &names[*s], &names[*r]).unwrap();
    }
    g
}

/// Graphs with 1..=3 vertices and 1..=max_edges edges.
pub fn small_graph(max_edges: usize) -> impl Strategy<Value = Graph> {
    (1usize..=3).prop_flat_map(move |n| prop::collection::vec((0..n, 0..n), 1..=max_edges).prop_map(move |edges| graph_from(n, &edges)))
}

/// Small graphs in which every vertex receives an edge.
pub fn source_free_graph(max_extra: usize) -> impl Strategy<Value = Graph> {
    (1usize..=3).prop_flat_map(move |n| {
        (prop::collection::vec(0..n, n), prop::collection::vec((0..n, 0..n), 0..=max_extra)).prop_map(move |(into, extra)| {
            let mut edges: Vec<(usize, usize)> = into.iter().enumerate().map(|(r, s)| (*s, r)).collect();
            edges.extend(extra);
            graph_from(n, &edges)
        })
    })
}

pub fn catalog_graph() -> impl Strategy<Value = (&'static str, Arc<Graph>)> {
    let all: Vec<(&'static str, Arc<Graph>)> = catalog::all().into_iter().map(|(n, g)| (n, Arc::new(g))).collect();
    prop::sample::select(all)
}

pub fn sink_free_catalog_graph() -> impl Strategy<Value = (&'static str, Arc<Graph>)> {
    let all: Vec<(&'static str, Arc<Graph>)> =
        catalog::all().into_iter().filter(|(_, g)| !g.has_sinks()).map(|(n, g)| (n, Arc::new(g))).collect();
    prop::sample::select(all)
}
