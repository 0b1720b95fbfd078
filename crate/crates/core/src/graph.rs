//! Finite directed multigraphs and their free semigroupoids.
//!
//! A [`Graph`] carries named vertices and edges with source/range maps.
//! Parallel edges and loops are allowed. A [`Path`] `w = e_k ... e_1`
//! is stored in application order (`e_1` first), so the canonical order on
//! paths of a fixed length is plain lexicographic order on the stored
//! edge indices.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate vertex `{0}`")]
    DuplicateVertex(String),
    #[error("duplicate edge `{0}`")]
    DuplicateEdge(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("path is not composable: {0}")]
    NotComposable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub name: String,
    pub source: VertexId,
    pub range: VertexId,
}

/// A finite directed multigraph.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    vertex_lookup: HashMap<String, VertexId>,
    edge_lookup: HashMap<String, EdgeId>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.edges == other.edges
    }
}

impl Eq for Graph {}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, name: &str) -> Result<VertexId, GraphError> {
        if self.vertex_lookup.contains_key(name) {
            return Err(GraphError::DuplicateVertex(name.to_string()));
        }
        let id = VertexId(self.vertices.len());
        self.vertices.push(name.to_string());
        self.vertex_lookup.insert(name.to_string(), id);
        self.out_edges.push(Vec::new());
        self.in_edges.push(Vec::new());
        Ok(id)
    }

    pub fn add_edge(&mut self, name: &str, source: &str, range: &str) -> Result<EdgeId, GraphError> {
        if self.edge_lookup.contains_key(name) {
            return Err(GraphError::DuplicateEdge(name.to_string()));
        }
        let s = self.vertex(source)?;
        let r = self.vertex(range)?;
        let id = EdgeId(self.edges.len());
        self.edges.push(Edge { name: name.to_string(), source: s, range: r });
        self.edge_lookup.insert(name.to_string(), id);
        self.out_edges[s.0].push(id);
        self.in_edges[r.0].push(id);
        Ok(id)
    }

    /// Builds a graph from vertex names and `(edge, source, range)` triples.
    pub fn from_parts(vertices: &[&str], edges: &[(&str, &str, &str)]) -> Result<Self, GraphError> {
        let mut g = Graph::new();
        for v in vertices {
            g.add_vertex(v)?;
        }
        for (e, s, r) in edges {
            g.add_edge(e, s, r)?;
        }
        Ok(g)
    }

    pub fn vertex(&self, name: &str) -> Result<VertexId, GraphError> {
        self.vertex_lookup
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownVertex(name.to_string()))
    }

    pub fn edge(&self, name: &str) -> Result<EdgeId, GraphError> {
        self.edge_lookup
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownEdge(name.to_string()))
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertices.len()).map(VertexId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.edges.len()).map(EdgeId)
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        &self.vertices[v.0]
    }

    pub fn edge_name(&self, e: EdgeId) -> &str {
        &self.edges[e.0].name
    }

    pub fn edge_data(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn source(&self, e: EdgeId) -> VertexId {
        self.edges[e.0].source
    }

    pub fn range(&self, e: EdgeId) -> VertexId {
        self.edges[e.0].range
    }

    /// Edges leaving `v`, in increasing edge order.
    pub fn out_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.out_edges[v.0]
    }

    /// Edges landing on `v`, in increasing edge order.
    pub fn in_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.in_edges[v.0]
    }

    pub fn has_sinks(&self) -> bool {
        self.vertex_ids().any(|v| self.out_edges(v).is_empty())
    }

    pub fn has_sources(&self) -> bool {
        self.vertex_ids().any(|v| self.in_edges(v).is_empty())
    }

    /// Renders the graph in the line-oriented text format accepted by [`parse_graph`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("vertex {v}\n"));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "edge {} {} -> {}\n",
                e.name, self.vertices[e.source.0], self.vertices[e.range.0]
            ));
        }
        out
    }

    /// Formats a path as `e_k.….e_1`, or `@x` for the vertex path at `x`.
    pub fn path_name(&self, p: &Path) -> String {
        if p.edges.is_empty() {
            format!("@{}", self.vertex_name(p.base))
        } else {
            p.edges
                .iter()
                .rev()
                .map(|e| self.edge_name(*e))
                .collect::<Vec<_>>()
                .join(".")
        }
    }

    /// Parses `e_k.….e_1` (leftmost edge applied last) or `@x`.
    pub fn parse_path(&self, text: &str) -> Result<Path, GraphError> {
        let text = text.trim();
        if let Some(v) = text.strip_prefix('@') {
            return Ok(Path::vertex(self.vertex(v.trim())?));
        }
        let mut edges = Vec::new();
        for name in text.split('.').rev() {
            edges.push(self.edge(name.trim())?);
        }
        Path::from_edges(self, edges).ok_or_else(|| GraphError::NotComposable(text.to_string()))
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Parses the graph text format: one item per line, `#` starts a comment.
///
/// ```text
/// vertex x
/// edge e x -> y
/// ```
///
/// With `lenient` set, edges may mention vertices that were never declared;
/// they are created in order of first appearance.
pub fn parse_graph(text: &str, lenient: bool) -> Result<Graph, GraphError> {
    let mut g = Graph::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["vertex", id] => {
                g.add_vertex(id)?;
            }
            ["edge", id, s, "->", r] => {
                if lenient {
                    for v in [s, r] {
                        if g.vertex(v).is_err() {
                            g.add_vertex(v)?;
                        }
                    }
                }
                g.add_edge(id, s, r)?;
            }
            ["vertex", ..] => {
                return Err(GraphError::Syntax {
                    line: line_no,
                    message: "expected `vertex <id>`".into(),
                })
            }
            ["edge", ..] => {
                return Err(GraphError::Syntax {
                    line: line_no,
                    message: "expected `edge <id> <source> -> <range>`".into(),
                })
            }
            _ => {
                return Err(GraphError::Syntax {
                    line: line_no,
                    message: format!("unrecognised item `{line}`"),
                })
            }
        }
    }
    Ok(g)
}

/// An element of the free semigroupoid: a vertex or a composable edge sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    base: VertexId,
    edges: Vec<EdgeId>,
}

impl Path {
    pub fn vertex(v: VertexId) -> Self {
        Path { base: v, edges: Vec::new() }
    }

    /// Builds the path `e_k ... e_1` from `[e_1, ..., e_k]`; `None` if not composable.
    pub fn from_edges(g: &Graph, edges: Vec<EdgeId>) -> Option<Self> {
        let first = *edges.first()?;
        for pair in edges.windows(2) {
            if g.source(pair[1]) != g.range(pair[0]) {
                return None;
            }
        }
        Some(Path { base: g.source(first), edges })
    }

    pub fn edge(g: &Graph, e: EdgeId) -> Self {
        Path { base: g.source(e), edges: vec![e] }
    }

    /// Edges in application order, `e_1` first.
    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_vertex(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn source(&self) -> VertexId {
        self.base
    }

    pub fn range(&self, g: &Graph) -> VertexId {
        match self.edges.last() {
            Some(e) => g.range(*e),
            None => self.base,
        }
    }

    /// The last-applied edge `e_k`.
    pub fn leading_edge(&self) -> Option<EdgeId> {
        self.edges.last().copied()
    }

    /// The product `self · other` (apply `other` first), if composable.
    pub fn concat(&self, g: &Graph, other: &Path) -> Option<Path> {
        if self.source() != other.range(g) {
            return None;
        }
        if other.is_vertex() {
            return Some(self.clone());
        }
        let mut edges = other.edges.clone();
        edges.extend_from_slice(&self.edges);
        Some(Path { base: other.base, edges })
    }

    /// `e · self` when `s(e) = r(self)`.
    pub fn prepend(&self, g: &Graph, e: EdgeId) -> Option<Path> {
        Path::edge(g, e).concat(g, self)
    }
}

impl PartialOrd for Path {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical order: by length, then lexicographically on `e_1, e_2, ...`;
/// vertices are ordered by vertex index.
impl Ord for Path {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.edges
            .len()
            .cmp(&other.edges.len())
            .then_with(|| {
                if self.edges.is_empty() {
                    self.base.cmp(&other.base)
                } else {
                    self.edges.cmp(&other.edges)
                }
            })
    }
}

/// Returns `(sources, sinks)`: vertices without incoming, respectively outgoing, edges.
pub fn sources_and_sinks(g: &Graph) -> (Vec<VertexId>, Vec<VertexId>) {
    let sources = g.vertex_ids().filter(|v| g.in_edges(*v).is_empty()).collect();
    let sinks = g.vertex_ids().filter(|v| g.out_edges(*v).is_empty()).collect();
    (sources, sinks)
}

/// All paths of length exactly `d`, in canonical order.
pub fn enumerate_paths(g: &Graph, d: usize) -> Vec<Path> {
    let mut level: Vec<Path> = g.vertex_ids().map(Path::vertex).collect();
    for k in 0..d {
        let mut next = Vec::new();
        if k == 0 {
            next.extend(g.edge_ids().map(|e| Path::edge(g, e)));
        } else {
            for w in &level {
                for &e in g.out_edges(w.range(g)) {
                    let mut edges = w.edges.clone();
                    edges.push(e);
                    next.push(Path { base: w.base, edges });
                }
            }
        }
        level = next;
    }
    level
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleLoop {
    pub path: Path,
    pub has_entrance: bool,
}

/// Every vertex-simple loop, one representative per cyclic rotation class.
///
/// The representative is the rotation that is least in canonical order. A loop
/// has an entrance iff one of its vertices receives an edge outside the loop.
pub fn vertex_simple_loops(g: &Graph) -> Vec<SimpleLoop> {
    let mut found: BTreeSet<Path> = BTreeSet::new();
    for start in g.vertex_ids() {
        let mut stack: Vec<EdgeId> = Vec::new();
        let mut visited = vec![false; g.vertex_count()];
        collect_loops(g, start, start, &mut stack, &mut visited, &mut found);
    }
    found
        .into_iter()
        .map(|path| {
            let has_entrance = path.edges.iter().any(|e| g.in_edges(g.range(*e)).len() > 1);
            SimpleLoop { path, has_entrance }
        })
        .collect()
}

fn collect_loops(
    g: &Graph,
    start: VertexId,
    at: VertexId,
    stack: &mut Vec<EdgeId>,
    visited: &mut [bool],
    found: &mut BTreeSet<Path>,
) {
    for &e in g.out_edges(at) {
        let r = g.range(e);
        if r == start {
            stack.push(e);
            found.insert(least_rotation(g, stack));
            stack.pop();
        } else if !visited[r.0] {
            visited[r.0] = true;
            stack.push(e);
            collect_loops(g, start, r, stack, visited, found);
            stack.pop();
            visited[r.0] = false;
        }
    }
}

fn least_rotation(g: &Graph, edges: &[EdgeId]) -> Path {
    let n = edges.len();
    let best = (0..n)
        .map(|k| edges[k..].iter().chain(&edges[..k]).copied().collect::<Vec<_>>())
        .min()
        .expect("loops are nonempty");
    Path { base: g.source(best[0]), edges: best }
}

/// Vertices reachable from `x` by directed paths, including `x`, in vertex order.
pub fn saturation(g: &Graph, x: VertexId) -> Vec<VertexId> {
    let mut seen = vec![false; g.vertex_count()];
    let mut queue = VecDeque::from([x]);
    seen[x.0] = true;
    while let Some(v) = queue.pop_front() {
        for &e in g.out_edges(v) {
            let r = g.range(e);
            if !seen[r.0] {
                seen[r.0] = true;
                queue.push_back(r);
            }
        }
    }
    g.vertex_ids().filter(|v| seen[v.0]).collect()
}

/// Strongly connected component label for every vertex.
fn strong_components(g: &Graph) -> Vec<usize> {
    let reach: Vec<Vec<VertexId>> = g.vertex_ids().map(|v| saturation(g, v)).collect();
    let reaches = |a: VertexId, b: VertexId| reach[a.0].contains(&b);
    let mut label = vec![usize::MAX; g.vertex_count()];
    let mut next = 0;
    for v in g.vertex_ids() {
        if label[v.0] != usize::MAX {
            continue;
        }
        for u in g.vertex_ids() {
            if reaches(v, u) && reaches(u, v) {
                label[u.0] = next;
            }
        }
        next += 1;
    }
    label
}

#[derive(Debug, Clone, Serialize)]
pub struct UappVertex {
    pub vertex: String,
    pub saturation: Vec<String>,
    /// Up to two distinct loops found inside the saturation.
    pub distinct_loops: Vec<String>,
    /// An aperiodic infinite path exists (two distinct loops share a strong component).
    pub aperiodic_path: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UappReport {
    pub holds: bool,
    pub vertices: Vec<UappVertex>,
}

/// Checks that every vertex's saturation contains two distinct loops or an
/// aperiodic infinite path.
///
/// In a finite graph an infinite path is eventually confined to one strong
/// component; it can avoid being eventually periodic only if that component
/// carries two distinct simple loops.
pub fn uniform_aperiodic_path_property(g: &Graph) -> UappReport {
    let loops = vertex_simple_loops(g);
    let component = strong_components(g);
    let vertices: Vec<UappVertex> = g
        .vertex_ids()
        .map(|x| {
            let sat = saturation(g, x);
            let inside: Vec<&SimpleLoop> =
                loops.iter().filter(|l| sat.contains(&l.path.source())).collect();
            let aperiodic_path = inside.iter().enumerate().any(|(i, a)| {
                inside[i + 1..]
                    .iter()
                    .any(|b| component[a.path.source().0] == component[b.path.source().0])
            });
            UappVertex {
                vertex: g.vertex_name(x).to_string(),
                saturation: sat.iter().map(|v| g.vertex_name(*v).to_string()).collect(),
                distinct_loops: inside.iter().take(2).map(|l| g.path_name(&l.path)).collect(),
                aperiodic_path,
                holds: inside.len() >= 2 || aperiodic_path,
            }
        })
        .collect();
    UappReport { holds: vertices.iter().all(|v| v.holds), vertices }
}

/// A partition of the vertex set into disjoint nonempty blocks.
pub type VertexPartition = Vec<Vec<VertexId>>;

fn check_partition(g: &Graph, partition: &VertexPartition) -> Result<Vec<usize>, GraphError> {
    let mut block_of = vec![usize::MAX; g.vertex_count()];
    for (b, block) in partition.iter().enumerate() {
        if block.is_empty() {
            return Err(GraphError::InvalidPartition(format!("block {b} is empty")));
        }
        for v in block {
            if v.0 >= g.vertex_count() {
                return Err(GraphError::InvalidPartition(format!("vertex index {} out of range", v.0)));
            }
            if block_of[v.0] != usize::MAX {
                return Err(GraphError::InvalidPartition(format!(
                    "vertex `{}` appears in two blocks",
                    g.vertex_name(*v)
                )));
            }
            block_of[v.0] = b;
        }
    }
    if let Some(v) = g.vertex_ids().find(|v| block_of[v.0] == usize::MAX) {
        return Err(GraphError::InvalidPartition(format!(
            "vertex `{}` is not covered",
            g.vertex_name(v)
        )));
    }
    Ok(block_of)
}

/// Resolves a partition given by vertex names.
pub fn partition_by_name(g: &Graph, blocks: &[Vec<&str>]) -> Result<VertexPartition, GraphError> {
    blocks
        .iter()
        .map(|b| b.iter().map(|name| g.vertex(name)).collect())
        .collect()
}

/// The quotient graph obtained by identifying the vertices of each block.
///
/// Singleton blocks keep their vertex name; merged blocks are named by joining
/// member names with `+`. Edges keep their names.
pub fn deform(g: &Graph, partition: &VertexPartition) -> Result<Graph, GraphError> {
    let block_of = check_partition(g, partition)?;
    let mut q = Graph::new();
    let names: Vec<String> = partition
        .iter()
        .map(|block| block.iter().map(|v| g.vertex_name(*v)).collect::<Vec<_>>().join("+"))
        .collect();
    for name in &names {
        q.add_vertex(name)?;
    }
    for e in g.edge_ids() {
        let d = g.edge_data(e);
        q.add_edge(&d.name, &names[block_of[d.source.0]], &names[block_of[d.range.0]])?;
    }
    Ok(q)
}

/// Set partitions of `0..n` as restricted growth strings, in lexicographic order.
fn restricted_growth_strings(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, n: usize, max: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let limit = if prefix.is_empty() { 0 } else { max + 1 };
        for b in 0..=limit {
            prefix.push(b);
            rec(prefix, n, max.max(b), out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
    } else {
        rec(&mut Vec::new(), n, 0, &mut out);
    }
    out
}

fn blocks_from_rgs(rgs: &[usize]) -> VertexPartition {
    let count = rgs.iter().max().map_or(0, |m| m + 1);
    let mut blocks = vec![Vec::new(); count];
    for (v, b) in rgs.iter().enumerate() {
        blocks[*b].push(VertexId(v));
    }
    blocks
}

/// A vertex bijection `a -> b` under which edge multiplicities agree, together
/// with the induced edge bijection (parallel edges matched in index order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Isomorphism {
    pub vertex_map: Vec<VertexId>,
    pub edge_map: Vec<EdgeId>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Brute-force isomorphism search for small multigraphs; edge names are ignored.
pub fn find_isomorphism(a: &Graph, b: &Graph) -> Option<Isomorphism> {
    if a.vertex_count() != b.vertex_count() || a.edge_count() != b.edge_count() {
        return None;
    }
    let n = a.vertex_count();
    let multiplicity = |g: &Graph| {
        let mut m = vec![vec![Vec::new(); g.vertex_count()]; g.vertex_count()];
        for e in g.edge_ids() {
            m[g.source(e).0][g.range(e).0].push(e);
        }
        m
    };
    let ma = multiplicity(a);
    let mb = multiplicity(b);
    'perm: for perm in permutations(n) {
        for s in 0..n {
            for r in 0..n {
                if ma[s][r].len() != mb[perm[s]][perm[r]].len() {
                    continue 'perm;
                }
            }
        }
        let mut edge_map = vec![EdgeId(0); a.edge_count()];
        for s in 0..n {
            for r in 0..n {
                for (ea, eb) in ma[s][r].iter().zip(&mb[perm[s]][perm[r]]) {
                    edge_map[ea.0] = *eb;
                }
            }
        }
        return Some(Isomorphism {
            vertex_map: perm.into_iter().map(VertexId).collect(),
            edge_map,
        });
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeformationWitness {
    /// Partition of the smaller graph's vertices.
    pub partition: VertexPartition,
    /// Isomorphism from the quotient onto the larger graph.
    pub isomorphism: Isomorphism,
}

impl DeformationWitness {
    /// Image in the deformed graph of each edge of the original graph.
    pub fn edge_map(&self) -> &[EdgeId] {
        &self.isomorphism.edge_map
    }
}

#[derive(Debug, Clone)]
pub struct DeformationOrder {
    pub holds: bool,
    pub witness: Option<DeformationWitness>,
    /// Number of partitions examined; when `holds` is false this is the
    /// exhaustive count and serves as the absence certificate.
    pub partitions_examined: usize,
}

/// Decides `g1 <= g2`, i.e. whether `g2` is a deformation of `g1`.
///
/// Partitions are tried in canonical (restricted growth string) order, so the
/// witness is the canonically least one.
pub fn deformation_leq(g1: &Graph, g2: &Graph) -> DeformationOrder {
    let mut examined = 0;
    if g1.edge_count() == g2.edge_count() && g2.vertex_count() <= g1.vertex_count() {
        for rgs in restricted_growth_strings(g1.vertex_count()) {
            let blocks = rgs.iter().max().map_or(0, |m| m + 1);
            if blocks != g2.vertex_count() {
                continue;
            }
            examined += 1;
            let partition = blocks_from_rgs(&rgs);
            let quotient = deform(g1, &partition).expect("generated partitions are valid");
            if let Some(isomorphism) = find_isomorphism(&quotient, g2) {
                return DeformationOrder {
                    holds: true,
                    witness: Some(DeformationWitness { partition, isomorphism }),
                    partitions_examined: examined,
                };
            }
        }
    }
    DeformationOrder { holds: false, witness: None, partitions_examined: examined }
}

/// Small graphs used throughout the tests and the CLI examples.
pub mod catalog {
    use super::Graph;

    /// One vertex, one loop.
    pub fn c1() -> Graph {
        cn(1)
    }

    /// One vertex, `n` loops named `a, b, c, ...` (or `l1..ln` beyond 26).
    pub fn cn(n: usize) -> Graph {
        let mut g = Graph::new();
        g.add_vertex("v").unwrap();
        for i in 0..n {
            let name = if n == 1 {
                "l".to_string()
            } else if n <= 26 {
                ((b'a' + i as u8) as char).to_string()
            } else {
                format!("l{}", i + 1)
            };
            g.add_edge(&name, "v", "v").unwrap();
        }
        g
    }

    pub fn c2() -> Graph {
        cn(2)
    }

    /// Two vertices with `e: x -> y` and `f: y -> x`.
    pub fn cyc2() -> Graph {
        Graph::from_parts(&["x", "y"], &[("e", "x", "y"), ("f", "y", "x")]).unwrap()
    }

    /// `e: x -> y`.
    pub fn single_edge() -> Graph {
        Graph::from_parts(&["x", "y"], &[("e", "x", "y")]).unwrap()
    }

    pub fn cycle3() -> Graph {
        Graph::from_parts(&["x", "y", "z"], &[("e", "x", "y"), ("f", "y", "z"), ("g", "z", "x")])
            .unwrap()
    }

    /// Two parallel edges `a, b: x -> y` and a return edge `c: y -> x`.
    pub fn multi2() -> Graph {
        Graph::from_parts(&["x", "y"], &[("a", "x", "y"), ("b", "x", "y"), ("c", "y", "x")]).unwrap()
    }

    /// The named test catalog.
    pub fn all() -> Vec<(&'static str, Graph)> {
        vec![
            ("C1", c1()),
            ("C2", c2()),
            ("CYC2", cyc2()),
            ("single-edge", single_edge()),
            ("3-cycle", cycle3()),
            ("2-vertex multi-edge", multi2()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::catalog::*;
    use super::*;

    fn names(g: &Graph, paths: &[Path]) -> Vec<String> {
        paths.iter().map(|p| g.path_name(p)).collect()
    }

    #[test]
    fn parses_the_smallest_graphs() {
        let g = parse_graph("vertex v\nedge l v -> v\n", false).unwrap();
        assert_eq!(g, c1());
        let g = parse_graph("# two-cycle\nvertex x\nvertex y\nedge e x -> y\nedge f y -> x", false).unwrap();
        assert_eq!(g, cyc2());
    }

    #[test]
    fn rejects_dangling_and_duplicate_identifiers() {
        assert_eq!(
            parse_graph("vertex y\nedge e x -> y", false).unwrap_err(),
            GraphError::UnknownVertex("x".into())
        );
        assert_eq!(
            parse_graph("vertex y\nvertex y", false).unwrap_err(),
            GraphError::DuplicateVertex("y".into())
        );
        let err = parse_graph("vertex x\nedge e x y", false).unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 2, .. }));
        let lenient = parse_graph("edge e x -> y", true).unwrap();
        assert_eq!(lenient, single_edge());
    }

    #[test]
    fn sources_and_sinks_of_small_graphs() {
        assert_eq!(sources_and_sinks(&cyc2()), (vec![], vec![]));
        assert_eq!(sources_and_sinks(&c1()), (vec![], vec![]));
        assert_eq!(sources_and_sinks(&single_edge()), (vec![VertexId(0)], vec![VertexId(1)]));
    }

    #[test]
    fn path_enumeration_in_canonical_order() {
        let g = cyc2();
        // `f.e` applies e first, so it precedes `e.f`.
        assert_eq!(names(&g, &enumerate_paths(&g, 2)), ["f.e", "e.f"]);
        assert_eq!(enumerate_paths(&c2(), 3).len(), 8);
        assert_eq!(names(&g, &enumerate_paths(&g, 0)), ["@x", "@y"]);
        let level = enumerate_paths(&multi2(), 3);
        assert!(level.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn path_concatenation() {
        let g = cyc2();
        let e = Path::edge(&g, g.edge("e").unwrap());
        let f = Path::edge(&g, g.edge("f").unwrap());
        let fe = f.concat(&g, &e).unwrap();
        assert_eq!(g.path_name(&fe), "f.e");
        assert_eq!(fe.source(), g.vertex("x").unwrap());
        assert_eq!(fe.range(&g), g.vertex("x").unwrap());
        assert!(e.concat(&g, &e).is_none());
        let x = Path::vertex(g.vertex("x").unwrap());
        assert_eq!(e.concat(&g, &x), Some(e.clone()));
        assert_eq!(g.parse_path("f.e").unwrap(), fe);
        assert!(g.parse_path("e.e").is_err());
    }

    #[test]
    fn loops_and_entrances() {
        let g = cyc2();
        let loops = vertex_simple_loops(&g);
        assert_eq!(loops.len(), 1);
        assert_eq!(g.path_name(&loops[0].path), "f.e");
        assert!(!loops[0].has_entrance);

        let g = c2();
        let loops = vertex_simple_loops(&g);
        assert_eq!(names(&g, &loops.iter().map(|l| l.path.clone()).collect::<Vec<_>>()), ["a", "b"]);
        assert!(loops.iter().all(|l| l.has_entrance));

        assert!(vertex_simple_loops(&single_edge()).is_empty());
        assert_eq!(vertex_simple_loops(&cycle3()).len(), 1);
        // a.c and b.c through x -> y -> x; y is entered twice.
        let loops = vertex_simple_loops(&multi2());
        assert_eq!(loops.len(), 2);
        assert!(loops.iter().all(|l| l.has_entrance));
    }

    #[test]
    fn saturation_is_forward_reachability() {
        let g = cyc2();
        assert_eq!(saturation(&g, VertexId(0)), vec![VertexId(0), VertexId(1)]);
        let g = single_edge();
        assert_eq!(saturation(&g, VertexId(1)), vec![VertexId(1)]);
        assert_eq!(saturation(&c1(), VertexId(0)), vec![VertexId(0)]);
    }

    #[test]
    fn uniform_aperiodic_path_property_examples() {
        assert!(uniform_aperiodic_path_property(&c2()).holds);
        assert!(!uniform_aperiodic_path_property(&c1()).holds);
        let g = Graph::from_parts(&["x", "y"], &[("l", "x", "x"), ("e", "x", "y")]).unwrap();
        let report = uniform_aperiodic_path_property(&g);
        assert!(!report.holds);
        assert!(!report.vertices[1].holds);
        for n in 2..5 {
            assert!(uniform_aperiodic_path_property(&cn(n)).holds);
        }
    }

    #[test]
    fn deformation_of_the_two_cycle() {
        let g = cyc2();
        let q = deform(&g, &vec![vec![VertexId(0), VertexId(1)]]).unwrap();
        assert!(find_isomorphism(&q, &c2()).is_some());
        assert_eq!(q.vertex_name(VertexId(0)), "x+y");
        let id = deform(&g, &vec![vec![VertexId(0)], vec![VertexId(1)]]).unwrap();
        assert_eq!(id, g);
        assert_eq!(deform(&c2(), &vec![vec![VertexId(0)]]).unwrap(), c2());
        assert!(matches!(
            deform(&g, &vec![vec![VertexId(0)], vec![VertexId(0), VertexId(1)]]),
            Err(GraphError::InvalidPartition(_))
        ));
        assert!(matches!(deform(&g, &vec![vec![VertexId(0)]]), Err(GraphError::InvalidPartition(_))));
    }

    #[test]
    fn deformation_order_examples() {
        let order = deformation_leq(&cyc2(), &c2());
        assert!(order.holds);
        assert_eq!(order.witness.unwrap().partition, vec![vec![VertexId(0), VertexId(1)]]);
        assert!(!deformation_leq(&c2(), &cyc2()).holds);
        for (_, g) in all() {
            assert!(deformation_leq(&g, &g).holds);
        }
    }

    /// Every multigraph on `v` vertices with exactly `m` edges, edges named e0, e1, ...
    fn all_graphs(v: usize, m: usize) -> Vec<Graph> {
        let pairs: Vec<(usize, usize)> = (0..v).flat_map(|s| (0..v).map(move |r| (s, r))).collect();
        let mut out = Vec::new();
        fn rec(pairs: &[(usize, usize)], start: usize, left: usize, acc: &mut Vec<(usize, usize)>, v: usize, out: &mut Vec<Graph>) {
            if left == 0 {
                let mut g = Graph::new();
                for i in 0..v {
                    g.add_vertex(&format!("v{i}")).unwrap();
                }
                for (k, (s, r)) in acc.iter().enumerate() {
                    g.add_edge(&format!("e{k}"), &format!("v{s}"), &format!("v{r}")).unwrap();
                }
                out.push(g);
                return;
            }
            for i in start..pairs.len() {
                acc.push(pairs[i]);
                rec(pairs, i, left - 1, acc, v, out);
                acc.pop();
            }
        }
        rec(&pairs, 0, m, &mut Vec::new(), v, &mut out);
        out
    }

    #[test]
    fn deformation_order_is_a_partial_order_on_small_graphs() {
        for m in 0..=3 {
            let mut graphs = Vec::new();
            for v in 1..=3 {
                graphs.extend(all_graphs(v, m));
            }
            let n = graphs.len();
            let leq: Vec<Vec<bool>> = graphs
                .iter()
                .map(|a| graphs.iter().map(|b| deformation_leq(a, b).holds).collect())
                .collect();
            for i in 0..n {
                assert!(leq[i][i]);
                for j in 0..n {
                    if leq[i][j] && leq[j][i] {
                        assert!(find_isomorphism(&graphs[i], &graphs[j]).is_some());
                    }
                    if !leq[i][j] {
                        continue;
                    }
                    for (k, reach) in leq[j].iter().enumerate() {
                        if *reach {
                            assert!(leq[i][k], "transitivity fails for m={m}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn paths_are_composable_and_counted_by_extension() {
        for (_, g) in all() {
            for d in 0..6 {
                let level = enumerate_paths(&g, d);
                for p in &level {
                    assert_eq!(p.len(), d);
                    for pair in p.edges().windows(2) {
                        assert_eq!(g.source(pair[1]), g.range(pair[0]));
                    }
                }
                let extensions: usize = level
                    .iter()
                    .map(|w| g.edge_ids().filter(|e| g.source(*e) == w.range(&g)).count())
                    .sum();
                assert_eq!(enumerate_paths(&g, d + 1).len(), extensions);
            }
        }
    }

    #[test]
    fn enumeration_matches_brute_force_word_filtering() {
        for (_, g) in all().into_iter().filter(|(_, g)| g.edge_count() <= 3) {
            for d in 1..5 {
                let m = g.edge_count();
                let mut brute = Vec::new();
                for code in 0..m.pow(d as u32) {
                    let word: Vec<EdgeId> = (0..d).map(|i| EdgeId(code / m.pow(i as u32) % m)).collect();
                    if let Some(p) = Path::from_edges(&g, word) {
                        brute.push(p);
                    }
                }
                brute.sort();
                assert_eq!(brute, enumerate_paths(&g, d));
            }
        }
    }
}
