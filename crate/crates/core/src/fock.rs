//! Graded bases, lazily grown Fock spaces, and locally finite operators.
//!
//! Every carrier is a [`GradedBasis`]: a countable orthonormal basis split into
//! finite levels and indexed level-major by `usize`. The graph Fock space
//! ([`FockBasis`]) grows its levels on demand. Operators ([`LocalOperator`])
//! are given by their exact action on basis vectors, so relations among the
//! creation operators hold exactly at every level; matrices appear only when
//! an operator is compressed to finitely many levels.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{EdgeId, Graph, Path, VertexId};
use crate::linalg::{CMatrix, C64, ONE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FockError {
    #[error("operators live on different carriers")]
    BasisMismatch,
    #[error("image of basis vector {index} reaches level {level}, beyond the codomain level {codomain}")]
    CodomainTooSmall { index: usize, level: usize, codomain: usize },
    #[error("edge index {0} out of range")]
    UnknownEdge(usize),
    #[error("vertex index {0} out of range")]
    UnknownVertex(usize),
    #[error("dimension {needed} exceeds the budget {budget}")]
    TooLarge { needed: u128, budget: usize },
}

/// A countable orthonormal basis graded into finite levels, indexed level-major.
pub trait GradedBasis: Send + Sync + fmt::Debug {
    /// Number of basis vectors of level at most `d`.
    fn dim_through(&self, d: usize) -> usize;
    /// Level of basis vector `i`.
    fn level_of(&self, i: usize) -> usize;
    /// Human-readable name of basis vector `i`.
    fn label(&self, i: usize) -> String;
    /// Highest nonempty level, or `None` if the basis is infinite.
    fn top_level(&self) -> Option<usize>;

    fn level_size(&self, d: usize) -> usize {
        self.dim_through(d) - if d == 0 { 0 } else { self.dim_through(d - 1) }
    }

    /// Total dimension when finite.
    fn finite_dim(&self) -> Option<usize> {
        self.top_level().map(|t| self.dim_through(t))
    }
}

/// `C^n`, all in level 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiniteBasis {
    pub dim: usize,
}

impl GradedBasis for FiniteBasis {
    fn dim_through(&self, _d: usize) -> usize {
        self.dim
    }
    fn level_of(&self, _i: usize) -> usize {
        0
    }
    fn label(&self, i: usize) -> String {
        format!("e{i}")
    }
    fn top_level(&self) -> Option<usize> {
        Some(0)
    }
}

const NONE: usize = usize::MAX;

#[derive(Debug, Default)]
struct Tree {
    source: Vec<u32>,
    range: Vec<u32>,
    parent: Vec<usize>,
    lead: Vec<u32>,
    first_edge: Vec<u32>,
    first_child: Vec<usize>,
    /// `offsets[k]` is the index of the first path of length `k`; one extra entry closes the last built level.
    offsets: Vec<usize>,
}

impl Tree {
    fn built_levels(&self) -> usize {
        self.offsets.len() - 1
    }
}

/// The basis `{ξ_w}` of the graph Fock space, or of a union of its tree components.
///
/// Level 0 holds the root vertices, level 1 the edges leaving them in edge
/// order, and each later level lists the extensions `e·w` of the previous one
/// path by path, edges in index order. This is exactly the canonical path
/// order, and the extensions of one path occupy a contiguous block.
pub struct FockBasis {
    graph: Arc<Graph>,
    roots: Vec<VertexId>,
    root_index: Vec<usize>,
    level1_index: Vec<usize>,
    out_pos: Vec<usize>,
    tree: RwLock<Tree>,
}

impl fmt::Debug for FockBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FockBasis").field("roots", &self.roots).finish_non_exhaustive()
    }
}

impl FockBasis {
    /// The full Fock space `H_G`.
    pub fn new(graph: Arc<Graph>) -> Arc<Self> {
        let roots = graph.vertex_ids().collect();
        Self::with_roots(graph, roots)
    }

    /// The tree component `Q_x H_G` spanned by paths with source `x`.
    pub fn tree(graph: Arc<Graph>, x: VertexId) -> Arc<Self> {
        Self::with_roots(graph, vec![x])
    }

    fn with_roots(graph: Arc<Graph>, roots: Vec<VertexId>) -> Arc<Self> {
        let mut root_index = vec![NONE; graph.vertex_count()];
        for (k, v) in roots.iter().enumerate() {
            root_index[v.0] = k;
        }
        let mut level1_index = vec![NONE; graph.edge_count()];
        let mut next = roots.len();
        for e in graph.edge_ids() {
            if root_index[graph.source(e).0] != NONE {
                level1_index[e.0] = next;
                next += 1;
            }
        }
        let mut out_pos = vec![0; graph.edge_count()];
        for v in graph.vertex_ids() {
            for (k, e) in graph.out_edges(v).iter().enumerate() {
                out_pos[e.0] = k;
            }
        }
        let mut tree = Tree { offsets: vec![0, roots.len()], ..Tree::default() };
        for v in &roots {
            tree.source.push(v.0 as u32);
            tree.range.push(v.0 as u32);
            tree.parent.push(NONE);
            tree.lead.push(u32::MAX);
            tree.first_edge.push(u32::MAX);
            tree.first_child.push(NONE);
        }
        Arc::new(FockBasis { graph, roots, root_index, level1_index, out_pos, tree: RwLock::new(tree) })
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn roots(&self) -> &[VertexId] {
        &self.roots
    }

    /// Number of paths of length at most `d` without materializing them.
    pub fn count_through(&self, d: usize) -> u128 {
        let g = &self.graph;
        let mut at: Vec<u128> = vec![0; g.vertex_count()];
        for v in &self.roots {
            at[v.0] += 1;
        }
        let mut total: u128 = at.iter().sum();
        for _ in 0..d {
            let mut next = vec![0u128; g.vertex_count()];
            for e in g.edge_ids() {
                next[g.range(e).0] = next[g.range(e).0].saturating_add(at[g.source(e).0]);
            }
            at = next;
            total = total.saturating_add(at.iter().sum());
        }
        total
    }

    fn ensure(&self, d: usize) {
        if self.tree.read().unwrap().built_levels() > d {
            return;
        }
        let mut t = self.tree.write().unwrap();
        while t.built_levels() <= d {
            let k = t.built_levels();
            let (start, end) = (t.offsets[k - 1], t.offsets[k]);
            let mut next = end;
            for i in start..end {
                let r = VertexId(t.range[i] as usize);
                let outs = self.graph.out_edges(r);
                if k == 1 {
                    // Level 1 is ordered by edge index, not by parent.
                    for e in outs {
                        t.source.push(self.graph.source(*e).0 as u32);
                        t.range.push(self.graph.range(*e).0 as u32);
                        t.parent.push(i);
                        t.lead.push(e.0 as u32);
                        t.first_edge.push(e.0 as u32);
                        t.first_child.push(NONE);
                    }
                    continue;
                }
                t.first_child[i] = next;
                for e in outs {
                    let s = t.source[i];
                    let f = t.first_edge[i];
                    t.source.push(s);
                    t.range.push(self.graph.range(*e).0 as u32);
                    t.parent.push(i);
                    t.lead.push(e.0 as u32);
                    t.first_edge.push(f);
                    t.first_child.push(NONE);
                    next += 1;
                }
            }
            if k == 1 {
                // Reorder level 1 into edge order.
                let mut rows: Vec<(usize, usize)> = (end..t.source.len())
                    .map(|i| (self.level1_index[t.lead[i] as usize], i))
                    .collect();
                rows.sort();
                let pick = |v: &Vec<u32>| rows.iter().map(|(_, i)| v[*i]).collect::<Vec<_>>();
                let (src, rng, lead) = (pick(&t.source), pick(&t.range), pick(&t.lead));
                let parent: Vec<usize> = rows.iter().map(|(_, i)| t.parent[*i]).collect();
                for (j, _) in rows.iter().enumerate() {
                    let at = end + j;
                    t.source[at] = src[j];
                    t.range[at] = rng[j];
                    t.lead[at] = lead[j];
                    t.first_edge[at] = lead[j];
                    t.parent[at] = parent[j];
                }
                next = t.source.len();
            }
            t.offsets.push(next);
        }
    }

    /// Offset of the first path of length `d`.
    pub fn level_offset(&self, d: usize) -> usize {
        self.ensure(d);
        self.tree.read().unwrap().offsets[d]
    }

    fn level_of_index(&self, i: usize) -> usize {
        let mut d = 0;
        loop {
            self.ensure(d);
            let t = self.tree.read().unwrap();
            if let Some(k) = (0..t.built_levels()).find(|&k| i < t.offsets[k + 1]) {
                return k;
            }
            let k = t.built_levels();
            assert!(t.offsets[k] > t.offsets[k - 1], "basis index {i} out of range");
            d = k;
        }
    }

    fn node<R>(&self, i: usize, f: impl FnOnce(&Tree) -> R) -> R {
        let t = self.tree.read().unwrap();
        if i < t.source.len() {
            return f(&t);
        }
        drop(t);
        let d = self.level_of_index(i);
        self.ensure(d);
        f(&self.tree.read().unwrap())
    }

    pub fn source(&self, i: usize) -> VertexId {
        self.node(i, |t| VertexId(t.source[i] as usize))
    }

    pub fn range(&self, i: usize) -> VertexId {
        self.node(i, |t| VertexId(t.range[i] as usize))
    }

    /// Edges of path `i` in application order.
    fn edges_of(&self, i: usize) -> Vec<EdgeId> {
        let mut out = Vec::new();
        self.node(i, |t| {
            let mut at = i;
            while t.parent[at] != NONE {
                out.push(EdgeId(t.lead[at] as usize));
                at = t.parent[at];
            }
        });
        out.reverse();
        out
    }

    pub fn path(&self, i: usize) -> Path {
        let edges = self.edges_of(i);
        if edges.is_empty() {
            Path::vertex(self.source(i))
        } else {
            Path::from_edges(&self.graph, edges).expect("basis paths are composable")
        }
    }

    /// Index of `ξ_w`, if `w` belongs to this basis.
    pub fn index_of(&self, w: &Path) -> Option<usize> {
        if w.is_vertex() {
            return self.root(w.source());
        }
        self.walk(w.edges())
    }

    fn root(&self, v: VertexId) -> Option<usize> {
        match self.root_index.get(v.0) {
            Some(&k) if k != NONE => Some(k),
            _ => None,
        }
    }

    fn walk(&self, edges: &[EdgeId]) -> Option<usize> {
        let first = *self.level1_index.get(edges.first()?.0)?;
        if first == NONE {
            return None;
        }
        self.ensure(edges.len());
        let t = self.tree.read().unwrap();
        let mut at = first;
        for pair in edges.windows(2) {
            if self.graph.source(pair[1]) != self.graph.range(pair[0]) {
                return None;
            }
            at = t.first_child[at] + self.out_pos[pair[1].0];
        }
        Some(at)
    }

    /// Index of `ξ_{e w}` for `w = path(i)`, if composable.
    pub fn left_extend(&self, i: usize, e: EdgeId) -> Option<usize> {
        let (lvl0, range) = self.node(i, |t| (t.parent[i] == NONE, t.range[i] as usize));
        if self.graph.source(e).0 != range {
            return None;
        }
        if lvl0 {
            return Some(self.level1_index[e.0]);
        }
        let d = self.level_of_index(i);
        self.ensure(d + 1);
        let t = self.tree.read().unwrap();
        Some(t.first_child[i] + self.out_pos[e.0])
    }

    /// Splits `ξ_{e w}` into `(e, index of ξ_w)`; `None` on vertices.
    pub fn left_strip(&self, i: usize) -> Option<(EdgeId, usize)> {
        self.node(i, |t| {
            (t.parent[i] != NONE).then(|| (EdgeId(t.lead[i] as usize), t.parent[i]))
        })
    }

    /// Index of `ξ_{w e}` for `w = path(i)`, if composable and inside the basis.
    pub fn right_extend(&self, i: usize, e: EdgeId) -> Option<usize> {
        if self.source(i) != self.graph.range(e) {
            return None;
        }
        let mut edges = vec![e];
        edges.extend(self.edges_of(i));
        self.walk(&edges)
    }

    /// Splits `ξ_{w e}` into `(e, index of ξ_w)`; `None` on vertices or when `w` is outside the basis.
    pub fn right_strip(&self, i: usize) -> Option<(EdgeId, usize)> {
        let edges = self.edges_of(i);
        let (first, rest) = edges.split_first()?;
        let idx = if rest.is_empty() {
            self.root(self.graph.range(*first))?
        } else {
            self.walk(rest)?
        };
        Some((*first, idx))
    }
}

impl GradedBasis for FockBasis {
    fn dim_through(&self, d: usize) -> usize {
        self.level_offset(d + 1)
    }
    fn level_of(&self, i: usize) -> usize {
        self.level_of_index(i)
    }
    fn label(&self, i: usize) -> String {
        self.graph.path_name(&self.path(i))
    }
    fn top_level(&self) -> Option<usize> {
        // A finite Fock space needs every path to die out: no loops reachable from a root.
        let n = self.graph.vertex_count();
        let mut at: Vec<bool> = vec![false; n];
        for v in &self.roots {
            at[v.0] = true;
        }
        for len in 0..=n {
            let mut next = vec![false; n];
            for e in self.graph.edge_ids() {
                if at[self.graph.source(e).0] {
                    next[self.graph.range(e).0] = true;
                }
            }
            if !next.iter().any(|b| *b) {
                return Some(len);
            }
            at = next;
        }
        None
    }
}

/// Level-wise concatenation of graded bases.
#[derive(Debug)]
pub struct DirectSumBasis {
    parts: Vec<Arc<dyn GradedBasis>>,
}

impl DirectSumBasis {
    pub fn new(parts: Vec<Arc<dyn GradedBasis>>) -> Arc<Self> {
        Arc::new(DirectSumBasis { parts })
    }

    pub fn parts(&self) -> &[Arc<dyn GradedBasis>] {
        &self.parts
    }

    fn part_dim(&self, p: usize, d: Option<usize>) -> usize {
        d.map_or(0, |d| self.parts[p].dim_through(d))
    }

    /// Global index of local index `i` of part `p`.
    pub fn embed(&self, p: usize, i: usize) -> usize {
        let level = self.parts[p].level_of(i);
        let before = level.checked_sub(1);
        let mut idx = before.map_or(0, |b| self.dim_through(b));
        for q in 0..p {
            idx += self.parts[q].level_size(level);
        }
        idx + i - self.part_dim(p, before)
    }

    /// `(part, local index)` of global index `i`.
    pub fn locate(&self, i: usize) -> (usize, usize) {
        let level = self.level_of(i);
        let before = level.checked_sub(1);
        let mut rest = i - before.map_or(0, |b| self.dim_through(b));
        for (p, part) in self.parts.iter().enumerate() {
            let size = part.level_size(level);
            if rest < size {
                return (p, self.part_dim(p, before) + rest);
            }
            rest -= size;
        }
        unreachable!("index located inside its level")
    }
}

impl GradedBasis for DirectSumBasis {
    fn dim_through(&self, d: usize) -> usize {
        self.parts.iter().map(|p| p.dim_through(d)).sum()
    }
    fn level_of(&self, i: usize) -> usize {
        let mut d = 0;
        while self.dim_through(d) <= i {
            d += 1;
            if let Some(top) = self.top_level() {
                assert!(d <= top, "index {i} outside a finite basis");
            }
        }
        d
    }
    fn label(&self, i: usize) -> String {
        let (p, j) = self.locate(i);
        format!("{p}:{}", self.parts[p].label(j))
    }
    fn top_level(&self) -> Option<usize> {
        self.parts.iter().map(|p| p.top_level()).try_fold(0, |acc, t| t.map(|t| acc.max(t)))
    }
}

/// Finitely supported action on one basis vector.
pub type Column = Vec<(usize, C64)>;

/// Finitely supported vector in a graded carrier.
pub type SparseVector = BTreeMap<usize, C64>;

type Rule = Arc<dyn Fn(usize) -> Column + Send + Sync>;

/// Sorts by index, merges repeated indices and drops exact zeros.
pub fn normalize(mut col: Column) -> Column {
    col.sort_by_key(|(i, _)| *i);
    let mut out: Column = Vec::with_capacity(col.len());
    for (i, z) in col {
        match out.last_mut() {
            Some((j, w)) if *j == i => *w += z,
            _ => out.push((i, z)),
        }
    }
    out.retain(|(_, z)| *z != C64::new(0.0, 0.0));
    out
}

/// An operator given by its exact action, and its adjoint's, on basis vectors.
#[derive(Clone)]
pub struct LocalOperator {
    basis: Arc<dyn GradedBasis>,
    forward: Rule,
    adjoint: Rule,
    shift: (isize, isize),
}

impl fmt::Debug for LocalOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalOperator").field("shift", &self.shift).finish_non_exhaustive()
    }
}

impl LocalOperator {
    /// Builds an operator from its forward and adjoint rules and declared level displacement bounds.
    pub fn new(
        basis: Arc<dyn GradedBasis>,
        shift: (isize, isize),
        forward: impl Fn(usize) -> Column + Send + Sync + 'static,
        adjoint: impl Fn(usize) -> Column + Send + Sync + 'static,
    ) -> Self {
        LocalOperator { basis, forward: Arc::new(forward), adjoint: Arc::new(adjoint), shift }
    }

    pub fn zero(basis: Arc<dyn GradedBasis>) -> Self {
        Self::new(basis, (0, 0), |_| Vec::new(), |_| Vec::new())
    }

    pub fn identity(basis: Arc<dyn GradedBasis>) -> Self {
        Self::new(basis, (0, 0), |i| vec![(i, ONE)], |i| vec![(i, ONE)])
    }

    /// Diagonal 0/1 operator keeping the basis vectors selected by `keep`.
    pub fn diagonal_projection(basis: Arc<dyn GradedBasis>, keep: impl Fn(usize) -> bool + Send + Sync + 'static) -> Self {
        let keep = Arc::new(keep);
        let k2 = keep.clone();
        Self::new(
            basis,
            (0, 0),
            move |i| if keep(i) { vec![(i, ONE)] } else { Vec::new() },
            move |i| if k2(i) { vec![(i, ONE)] } else { Vec::new() },
        )
    }

    /// A matrix acting on a finite level-0 carrier.
    pub fn from_matrix(basis: Arc<dyn GradedBasis>, m: &CMatrix) -> Self {
        let cols: Vec<Column> = (0..m.ncols())
            .map(|j| (0..m.nrows()).filter(|&i| m[(i, j)] != C64::new(0.0, 0.0)).map(|i| (i, m[(i, j)])).collect())
            .collect();
        let rows: Vec<Column> = (0..m.nrows())
            .map(|i| (0..m.ncols()).filter(|&j| m[(i, j)] != C64::new(0.0, 0.0)).map(|j| (j, m[(i, j)].conj())).collect())
            .collect();
        Self::new(basis, (0, 0), move |j| cols[j].clone(), move |i| rows[i].clone())
    }

    pub fn basis(&self) -> &Arc<dyn GradedBasis> {
        &self.basis
    }

    /// Declared `(min, max)` change of level under the forward action.
    pub fn shift(&self) -> (isize, isize) {
        self.shift
    }

    pub fn apply(&self, i: usize) -> Column {
        (self.forward)(i)
    }

    pub fn apply_adjoint(&self, i: usize) -> Column {
        (self.adjoint)(i)
    }

    pub fn apply_vector(&self, v: &SparseVector) -> SparseVector {
        apply_rule(&self.forward, v)
    }

    pub fn apply_adjoint_vector(&self, v: &SparseVector) -> SparseVector {
        apply_rule(&self.adjoint, v)
    }

    pub fn same_carrier(&self, other: &LocalOperator) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis)
    }

    fn check(&self, other: &LocalOperator) -> Result<(), FockError> {
        if self.same_carrier(other) {
            Ok(())
        } else {
            Err(FockError::BasisMismatch)
        }
    }

    pub fn adjoint(&self) -> Self {
        LocalOperator {
            basis: self.basis.clone(),
            forward: self.adjoint.clone(),
            adjoint: self.forward.clone(),
            shift: (-self.shift.1, -self.shift.0),
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &LocalOperator) -> Result<Self, FockError> {
        self.check(other)?;
        let (a, b) = (self.forward.clone(), other.forward.clone());
        let (a_adj, b_adj) = (self.adjoint.clone(), other.adjoint.clone());
        Ok(LocalOperator {
            basis: self.basis.clone(),
            forward: Arc::new(move |i| chain(&b, &a, i)),
            adjoint: Arc::new(move |i| chain(&a_adj, &b_adj, i)),
            shift: (self.shift.0 + other.shift.0, self.shift.1 + other.shift.1),
        })
    }

    pub fn add(&self, other: &LocalOperator) -> Result<Self, FockError> {
        self.check(other)?;
        let (a, b) = (self.forward.clone(), other.forward.clone());
        let (a_adj, b_adj) = (self.adjoint.clone(), other.adjoint.clone());
        Ok(LocalOperator {
            basis: self.basis.clone(),
            forward: Arc::new(move |i| normalize(a(i).into_iter().chain(b(i)).collect())),
            adjoint: Arc::new(move |i| normalize(a_adj(i).into_iter().chain(b_adj(i)).collect())),
            shift: (self.shift.0.min(other.shift.0), self.shift.1.max(other.shift.1)),
        })
    }

    pub fn scale(&self, z: C64) -> Self {
        let (a, a_adj) = (self.forward.clone(), self.adjoint.clone());
        let zc = z.conj();
        LocalOperator {
            basis: self.basis.clone(),
            forward: Arc::new(move |i| normalize(a(i).into_iter().map(|(j, w)| (j, w * z)).collect())),
            adjoint: Arc::new(move |i| normalize(a_adj(i).into_iter().map(|(j, w)| (j, w * zc)).collect())),
            shift: self.shift,
        }
    }

    /// Block-diagonal operator on a direct sum, one summand per part.
    pub fn direct_sum(basis: Arc<DirectSumBasis>, parts: Vec<LocalOperator>) -> Result<Self, FockError> {
        if parts.len() != basis.parts().len()
            || parts.iter().zip(basis.parts()).any(|(op, b)| !Arc::ptr_eq(&op.basis, b))
        {
            return Err(FockError::BasisMismatch);
        }
        let shift = parts
            .iter()
            .map(|p| p.shift)
            .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
            .unwrap_or((0, 0));
        let parts = Arc::new(parts);
        let rule = |adjoint: bool| {
            let (basis, parts) = (basis.clone(), parts.clone());
            move |i: usize| -> Column {
                let (p, j) = basis.locate(i);
                let col = if adjoint { parts[p].apply_adjoint(j) } else { parts[p].apply(j) };
                col.into_iter().map(|(k, z)| (basis.embed(p, k), z)).collect()
            }
        };
        Ok(LocalOperator {
            basis: basis.clone(),
            forward: Arc::new(rule(false)),
            adjoint: Arc::new(rule(true)),
            shift,
        })
    }

    pub fn sum(basis: Arc<dyn GradedBasis>, ops: &[LocalOperator]) -> Result<Self, FockError> {
        ops.iter().try_fold(Self::zero(basis), |acc, op| acc.add(op))
    }

    /// Matrix of `⟨A ξ_u, ξ_v⟩` for `u` of level `≤ d` and `v` of level `≤ d_out`.
    ///
    /// Fails, rather than truncating, when an image leaves the codomain levels.
    pub fn compress(&self, d: usize, d_out: usize) -> Result<CMatrix, FockError> {
        let cols = self.columns(d, d_out)?;
        let rows = self.basis.dim_through(d_out);
        Ok(dense_from_columns(rows, &cols))
    }

    /// Sparse columns of the compression, with the same containment check as [`Self::compress`].
    pub fn columns(&self, d: usize, d_out: usize) -> Result<Vec<Column>, FockError> {
        let rows = self.basis.dim_through(d_out);
        let n = self.basis.dim_through(d);
        // Materialize the carrier before going parallel.
        self.basis.dim_through(d_out.max(d) + 1);
        (0..n)
            .into_par_iter()
            .map(|j| {
                let col = self.apply(j);
                if let Some((i, _)) = col.iter().find(|(i, _)| *i >= rows) {
                    return Err(FockError::CodomainTooSmall {
                        index: j,
                        level: self.basis.level_of(*i),
                        codomain: d_out,
                    });
                }
                Ok(col)
            })
            .collect()
    }

    /// The truncated section `P_d A P_d` on levels `≤ d`.
    pub fn section(&self, d: usize) -> CMatrix {
        let n = self.basis.dim_through(d);
        let cols: Vec<Column> = (0..n)
            .into_par_iter()
            .map(|j| self.apply(j).into_iter().filter(|(i, _)| *i < n).collect())
            .collect();
        dense_from_columns(n, &cols)
    }

    /// Largest `|⟨Aξ_u, ξ_v⟩ - ⟨Bξ_u, ξ_v⟩|` over `u` of level `≤ d`, all `v`.
    pub fn max_entry_diff(&self, other: &LocalOperator, d: usize) -> Result<f64, FockError> {
        self.check(other)?;
        let n = self.basis.dim_through(d);
        self.basis.dim_through(d + 1);
        Ok((0..n)
            .into_par_iter()
            .map(|j| {
                let diff: Column = self
                    .apply(j)
                    .into_iter()
                    .chain(other.apply(j).into_iter().map(|(i, z)| (i, -z)))
                    .collect();
                normalize(diff).iter().map(|(_, z)| z.norm()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max))
    }

    /// Largest `|⟨Aξ_u, ξ_v⟩ - conj⟨A*ξ_v, ξ_u⟩|` over `u, v` of level `≤ d`.
    pub fn adjoint_defect(&self, d: usize) -> f64 {
        let n = self.basis.dim_through(d);
        let fwd = dense_from_columns(n, &self.restricted(&self.forward, n));
        let adj = dense_from_columns(n, &self.restricted(&self.adjoint, n));
        crate::linalg::max_abs_diff(&fwd, &adj.adjoint())
    }

    fn restricted(&self, rule: &Rule, n: usize) -> Vec<Column> {
        (0..n).map(|j| rule(j).into_iter().filter(|(i, _)| *i < n).collect()).collect()
    }

    /// Checks that outputs up to level `d` stay within the declared displacement bounds.
    pub fn respects_shift(&self, d: usize) -> bool {
        let n = self.basis.dim_through(d);
        (0..n).all(|j| {
            let lj = self.basis.level_of(j) as isize;
            let within = |col: Column, (lo, hi): (isize, isize)| {
                col.iter().all(|(i, _)| {
                    let li = self.basis.level_of(*i) as isize;
                    lo <= li - lj && li - lj <= hi
                })
            };
            within(self.apply(j), self.shift) && within(self.apply_adjoint(j), (-self.shift.1, -self.shift.0))
        })
    }
}

fn chain(first: &Rule, second: &Rule, i: usize) -> Column {
    let mut out = Vec::new();
    for (j, z) in first(i) {
        for (k, w) in second(j) {
            out.push((k, z * w));
        }
    }
    normalize(out)
}

fn apply_rule(rule: &Rule, v: &SparseVector) -> SparseVector {
    let mut out = SparseVector::new();
    for (&j, &z) in v {
        for (i, w) in rule(j) {
            *out.entry(i).or_insert(C64::new(0.0, 0.0)) += z * w;
        }
    }
    out.retain(|_, z| *z != C64::new(0.0, 0.0));
    out
}

pub fn dense_from_columns(rows: usize, cols: &[Column]) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols.len());
    for (j, col) in cols.iter().enumerate() {
        for (i, z) in col {
            m[(*i, j)] += *z;
        }
    }
    m
}

pub fn sparse_norm(v: &SparseVector) -> f64 {
    v.values().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn fock_rule(basis: &Arc<FockBasis>, f: impl Fn(&FockBasis, usize) -> Option<usize> + Send + Sync + 'static) -> impl Fn(usize) -> Column + Send + Sync + 'static {
    let b = basis.clone();
    move |i| f(&b, i).map(|j| vec![(j, ONE)]).unwrap_or_default()
}

fn check_edge(basis: &FockBasis, e: EdgeId) -> Result<(), FockError> {
    if e.0 < basis.graph().edge_count() {
        Ok(())
    } else {
        Err(FockError::UnknownEdge(e.0))
    }
}

fn check_vertex(basis: &FockBasis, x: VertexId) -> Result<(), FockError> {
    if x.0 < basis.graph().vertex_count() {
        Ok(())
    } else {
        Err(FockError::UnknownVertex(x.0))
    }
}

/// `L_e ξ_w = ξ_{ew}` when `r(w) = s(e)`, else 0.
pub fn left_creation(basis: &Arc<FockBasis>, e: EdgeId) -> Result<LocalOperator, FockError> {
    check_edge(basis, e)?;
    Ok(LocalOperator::new(
        basis.clone(),
        (1, 1),
        fock_rule(basis, move |b, i| b.left_extend(i, e)),
        fock_rule(basis, move |b, i| b.left_strip(i).filter(|(f, _)| *f == e).map(|(_, j)| j)),
    ))
}

/// `R_e ξ_w = ξ_{we}` when `s(w) = r(e)`, else 0.
pub fn right_creation(basis: &Arc<FockBasis>, e: EdgeId) -> Result<LocalOperator, FockError> {
    check_edge(basis, e)?;
    Ok(LocalOperator::new(
        basis.clone(),
        (1, 1),
        fock_rule(basis, move |b, i| b.right_extend(i, e)),
        fock_rule(basis, move |b, i| b.right_strip(i).filter(|(f, _)| *f == e).map(|(_, j)| j)),
    ))
}

/// `P_x`: projection onto `span{ξ_w : r(w) = x}`.
pub fn vertex_projection_left(basis: &Arc<FockBasis>, x: VertexId) -> Result<LocalOperator, FockError> {
    check_vertex(basis, x)?;
    let b = basis.clone();
    Ok(LocalOperator::diagonal_projection(basis.clone(), move |i| b.range(i) == x))
}

/// `Q_x`: projection onto the tree component `span{ξ_w : s(w) = x}`.
pub fn tree_projection(basis: &Arc<FockBasis>, x: VertexId) -> Result<LocalOperator, FockError> {
    check_vertex(basis, x)?;
    let b = basis.clone();
    Ok(LocalOperator::diagonal_projection(basis.clone(), move |i| b.source(i) == x))
}

/// `L_w = L_{e_k} ⋯ L_{e_1}`, or `P_x` for a vertex path.
pub fn left_path_operator(basis: &Arc<FockBasis>, w: &Path) -> Result<LocalOperator, FockError> {
    if w.is_vertex() {
        return vertex_projection_left(basis, w.source());
    }
    let mut op = left_creation(basis, w.edges()[0])?;
    for e in &w.edges()[1..] {
        op = left_creation(basis, *e)?.compose(&op)?;
    }
    Ok(op)
}

/// `R_w`, the right creation along `w` (`R_w ξ_u = ξ_{u w}`), or `Q_x` for a vertex path.
pub fn right_path_operator(basis: &Arc<FockBasis>, w: &Path) -> Result<LocalOperator, FockError> {
    if w.is_vertex() {
        return tree_projection(basis, w.source());
    }
    // ξ_u ↦ ξ_{u e_k ⋯ e_1}: apply R_{e_k} first.
    let edges = w.edges();
    let mut op = right_creation(basis, edges[edges.len() - 1])?;
    for e in edges[..edges.len() - 1].iter().rev() {
        op = right_creation(basis, *e)?.compose(&op)?;
    }
    Ok(op)
}
