//! Minimal partially isometric dilations of stabilized row contractions, and
//! purity diagnostics.
//!
//! For a row contraction `T = (T_e)` stabilized along a graph, let
//! `Δ = Π - T_row* T_row` on `⊕_e P_{s(e)} H`, where `T_row = [T_1 ... T_m]`.
//! Because `T_e* T_f = 0` whenever `r(e) ≠ r(f)`, `Δ` splits by range vertex;
//! `D_x` is the range of its `x`-block. The dilation space is `H` plus one
//! copy of `D_{s(w)}` for every path `w` (the slot at `w`), and
//!
//! ```text
//! S_e h            = T_e h  +  (B_{r(e)}* Δ^{1/2} ι_e h  at slot r(e))
//! S_e (d at slot w) = d at slot e·w      when s(e) = r(w)
//! ```

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::Serialize;
use thiserror::Error;

use crate::family::{validate, validate_row_contraction, wandering_subspace, FamilyError, Mode, OperatorFamily, Tuple};
use crate::fock::{Column, FockBasis, GradedBasis, LocalOperator, SparseVector};
use crate::graph::{enumerate_paths, EdgeId, Graph, Path, VertexId};
use crate::json::NamedValues;
use crate::linalg::{self, CMatrix, C64, ONE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DilationError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("not a row contraction: row norm {0}")]
    NotContraction(f64),
    #[error("defect operator is not positive semidefinite (eigenvalue {0:e})")]
    NegativeDefect(f64),
}

/// Level 0 is `H`; level `k ≥ 1` holds the slots `(w, j)` with `|w| = k - 1`
/// and `j < dim D_{s(w)}`, ordered by `w` in canonical order, then by `j`.
pub struct DilationBasis {
    base_dim: usize,
    fock: Arc<FockBasis>,
    defect_dims: Vec<usize>,
    /// `prefix[k][p]` is the offset, inside slot level `k + 1`, of the slots of the `p`-th path of length `k`.
    prefix: RwLock<Vec<Vec<usize>>>,
}

impl fmt::Debug for DilationBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DilationBasis")
            .field("base_dim", &self.base_dim)
            .field("defect_dims", &self.defect_dims)
            .finish_non_exhaustive()
    }
}

/// A basis vector of the dilation space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Base(usize),
    /// Component `j` of the copy of `D_{s(w)}` sitting at the Fock path with index `path`.
    Defect { path: usize, j: usize },
}

impl DilationBasis {
    fn new(graph: Arc<Graph>, base_dim: usize, defect_dims: Vec<usize>) -> Arc<Self> {
        Arc::new(DilationBasis { base_dim, fock: FockBasis::new(graph), defect_dims, prefix: RwLock::new(Vec::new()) })
    }

    pub fn fock(&self) -> &Arc<FockBasis> {
        &self.fock
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn defect_dims(&self) -> &[usize] {
        &self.defect_dims
    }

    fn ensure(&self, len: usize) {
        if self.prefix.read().unwrap().len() > len {
            return;
        }
        let mut prefix = self.prefix.write().unwrap();
        while prefix.len() <= len {
            let k = prefix.len();
            let start = self.fock.level_offset(k);
            let size = self.fock.level_size(k);
            let mut offs = Vec::with_capacity(size + 1);
            let mut acc = 0;
            for p in 0..size {
                offs.push(acc);
                acc += self.defect_dims[self.fock.source(start + p).0];
            }
            offs.push(acc);
            prefix.push(offs);
        }
    }

    /// Number of slots at level `k ≥ 1`.
    fn slot_level_size(&self, k: usize) -> usize {
        self.ensure(k - 1);
        *self.prefix.read().unwrap()[k - 1].last().unwrap()
    }

    pub fn index(&self, slot: Slot) -> usize {
        match slot {
            Slot::Base(j) => j,
            Slot::Defect { path, j } => {
                let len = self.fock.level_of(path);
                self.ensure(len);
                let pos = path - self.fock.level_offset(len);
                self.dim_through(len) + self.prefix.read().unwrap()[len][pos] + j
            }
        }
    }

    pub fn slot(&self, i: usize) -> Slot {
        if i < self.base_dim {
            return Slot::Base(i);
        }
        let level = self.level_of(i);
        let mut rest = i - self.dim_through(level - 1);
        let len = level - 1;
        self.ensure(len);
        let prefix = self.prefix.read().unwrap();
        let offs = &prefix[len];
        let pos = offs.partition_point(|o| *o <= rest) - 1;
        rest -= offs[pos];
        Slot::Defect { path: self.fock.level_offset(len) + pos, j: rest }
    }

    fn no_slots(&self) -> bool {
        self.defect_dims.iter().all(|d| *d == 0)
    }
}

impl GradedBasis for DilationBasis {
    fn dim_through(&self, d: usize) -> usize {
        self.base_dim + (1..=d).map(|k| self.slot_level_size(k)).sum::<usize>()
    }

    fn level_of(&self, i: usize) -> usize {
        let mut total = self.base_dim;
        let mut k = 0;
        while i >= total {
            k += 1;
            let size = self.slot_level_size(k);
            assert!(
                size > 0 || self.top_level().is_none_or(|t| k <= t),
                "index {i} outside the dilation space"
            );
            total += size;
        }
        k
    }

    fn label(&self, i: usize) -> String {
        match self.slot(i) {
            Slot::Base(j) => format!("h{j}"),
            Slot::Defect { path, j } => format!("{}#{j}", self.fock.label(path)),
        }
    }

    fn top_level(&self) -> Option<usize> {
        if self.no_slots() {
            Some(0)
        } else {
            self.fock.top_level().map(|t| t + 1)
        }
    }
}

/// The dilation of a tuple together with the data used to build it.
#[derive(Debug, Clone)]
pub struct DilationResult {
    pub tuple: Tuple,
    pub basis: Arc<DilationBasis>,
    pub family: OperatorFamily,
    /// `C_e = B_{r(e)}* Δ^{1/2} ι_e`, one `dim D_{r(e)} × dim H` matrix per edge.
    pub couplings: Vec<CMatrix>,
    /// `dim D_x` per vertex.
    pub defect_dims: Vec<usize>,
    /// Smallest spectral gap among the rank cuts defining the `D_x`.
    pub defect_gap: f64,
}

/// Builds the minimal partially isometric dilation of a stabilized row contraction.
pub fn minimal_dilation(tuple: &Tuple, tol: f64) -> Result<DilationResult, DilationError> {
    let rc = validate_row_contraction(&tuple.ts, tol);
    if !rc.holds {
        return Err(DilationError::NotContraction(rc.row_norm));
    }
    let g = tuple.graph.clone();
    let n = tuple.dim();
    let m = g.edge_count();
    // Δ = Π - T_row* T_row on ⊕_e H, with Π = ⊕_e P_{s(e)}.
    let mut delta = CMatrix::zeros(n * m, n * m);
    for e in g.edge_ids() {
        delta.view_mut((e.0 * n, e.0 * n), (n, n)).copy_from(&tuple.ps[g.source(e).0]);
        for f in g.edge_ids() {
            let block = tuple.ts[e.0].adjoint() * &tuple.ts[f.0];
            let mut view = delta.view_mut((e.0 * n, f.0 * n), (n, n));
            view -= block;
        }
    }
    let root = linalg::psd_sqrt(&delta, tol.max(1e-12)).map_err(DilationError::NegativeDefect)?;
    let mut defect_dims = Vec::new();
    let mut bases = Vec::new();
    let mut defect_gap = f64::INFINITY;
    for x in g.vertex_ids() {
        // The x-block of Δ: coordinates of the edges landing on x.
        let mut block = CMatrix::zeros(n * m, n * m);
        for &e in g.in_edges(x) {
            for &f in g.in_edges(x) {
                block
                    .view_mut((e.0 * n, f.0 * n), (n, n))
                    .copy_from(&delta.view((e.0 * n, f.0 * n), (n, n)));
            }
        }
        let (b, info) = linalg::range_basis(&block, linalg::RANK_TOL);
        defect_gap = defect_gap.min(info.gap());
        defect_dims.push(b.ncols());
        bases.push(b);
    }
    let couplings: Vec<CMatrix> = g
        .edge_ids()
        .map(|e| {
            let iota = root.columns(e.0 * n, n).into_owned();
            bases[g.range(e).0].adjoint() * iota
        })
        .collect();

    let basis = DilationBasis::new(g.clone(), n, defect_dims.clone());
    let carrier: Arc<dyn GradedBasis> = basis.clone();
    let edges = g
        .edge_ids()
        .map(|e| dilated_edge(&basis, carrier.clone(), &tuple.ts[e.0], &couplings[e.0], e))
        .collect();
    let vertices = g
        .vertex_ids()
        .map(|x| dilated_vertex(&basis, carrier.clone(), &tuple.ps[x.0], x))
        .collect();
    let family = OperatorFamily::structural(g, carrier, edges, vertices)?;
    Ok(DilationResult { tuple: tuple.clone(), basis, family, couplings, defect_dims, defect_gap })
}

fn matrix_column(m: &CMatrix, j: usize) -> Column {
    (0..m.nrows()).filter(|&i| m[(i, j)] != C64::new(0.0, 0.0)).map(|i| (i, m[(i, j)])).collect()
}

fn dilated_edge(basis: &Arc<DilationBasis>, carrier: Arc<dyn GradedBasis>, t: &CMatrix, coupling: &CMatrix, e: EdgeId) -> LocalOperator {
    let g = basis.fock().graph().clone();
    let range_vertex = Path::vertex(g.range(e));
    let vacuum = basis.fock().index_of(&range_vertex).expect("vertices are Fock roots");
    let t_adj = t.adjoint();
    let c_adj = coupling.adjoint();
    let (t, coupling) = (t.clone(), coupling.clone());
    let (b1, b2) = (basis.clone(), basis.clone());
    LocalOperator::new(
        carrier,
        (0, 1),
        move |i| match b1.slot(i) {
            Slot::Base(j) => {
                let mut col = matrix_column(&t, j);
                col.extend(
                    matrix_column(&coupling, j)
                        .into_iter()
                        .map(|(k, z)| (b1.index(Slot::Defect { path: vacuum, j: k }), z)),
                );
                col
            }
            Slot::Defect { path, j } => b1
                .fock()
                .left_extend(path, e)
                .map(|p| vec![(b1.index(Slot::Defect { path: p, j }), ONE)])
                .unwrap_or_default(),
        },
        move |i| match b2.slot(i) {
            Slot::Base(j) => matrix_column(&t_adj, j),
            Slot::Defect { path, j } if path == vacuum => matrix_column(&c_adj, j),
            Slot::Defect { path, j } => match b2.fock().left_strip(path) {
                Some((lead, parent)) if lead == e => vec![(b2.index(Slot::Defect { path: parent, j }), ONE)],
                _ => Vec::new(),
            },
        },
    )
}

fn dilated_vertex(basis: &Arc<DilationBasis>, carrier: Arc<dyn GradedBasis>, p: &CMatrix, x: VertexId) -> LocalOperator {
    let p = p.clone();
    let (b1, b2) = (basis.clone(), basis.clone());
    let p_adj = p.adjoint();
    let rule = |b: Arc<DilationBasis>, m: CMatrix| {
        move |i| match b.slot(i) {
            Slot::Base(j) => matrix_column(&m, j),
            Slot::Defect { path, .. } if b.fock().range(path) == x => vec![(i, ONE)],
            Slot::Defect { .. } => Vec::new(),
        }
    };
    LocalOperator::new(carrier, (0, 0), rule(b1, p), rule(b2, p_adj))
}

/// Sparse image `w(S) h_j` of a base vector.
fn apply_path(fam: &OperatorFamily, w: &Path, v: &SparseVector) -> SparseVector {
    let local = |op: &crate::family::Operator| match op {
        crate::family::Operator::Local(l) => l.clone(),
        crate::family::Operator::Matrix(_) => unreachable!("dilations are graded"),
    };
    if w.is_vertex() {
        return local(fam.vertex(w.source())).apply_vector(v);
    }
    w.edges().iter().fold(v.clone(), |acc, e| local(fam.edge(*e)).apply_vector(&acc))
}

fn unit(i: usize) -> SparseVector {
    SparseVector::from([(i, ONE)])
}

/// `w(T)` as a matrix product; `P_x` for a vertex path.
pub fn path_matrix(tuple: &Tuple, w: &Path) -> CMatrix {
    if w.is_vertex() {
        return tuple.ps[w.source().0].clone();
    }
    w.edges().iter().fold(linalg::identity(tuple.dim()), |acc, e| &tuple.ts[e.0] * acc)
}

#[derive(Debug, Clone, Serialize)]
pub struct DilationVerification {
    /// (a) residual of the CKT relations on the dilated family.
    pub relations: f64,
    /// (b) `H` reduces `S_e* S_e`, with restriction `P_{s(e)}`.
    pub initial_projections: f64,
    /// (c) `S_e*|_H = T_e*`.
    pub coextension: f64,
    /// (d) smallest level `k ≤ depth` at which `{w(S) H : |w| ≤ k}` fails to span the levels `≤ k`.
    pub spanning_failure: Option<usize>,
    /// Smallest singular value over the spanning checks (relative to the largest).
    pub spanning_margin: f64,
    /// `P_H w(S)|_H = w(T)` over all `|w| ≤ depth - 1`.
    pub compression: f64,
    /// Multiplicities of the dilation's wandering subspace.
    pub alpha_dilation: NamedValues<usize>,
    /// `rank(P_x (I - Σ T_e T_e*))`.
    pub alpha_defect: NamedValues<usize>,
    pub slots_per_level: Vec<usize>,
    pub passed: bool,
}

/// Checks dilation properties (a)-(d) up to `depth`, the compression identity
/// for paths of length `< depth`, and the multiplicity agreement.
pub fn verify_dilation(dr: &DilationResult, depth: usize, tol: f64) -> Result<DilationVerification, DilationError> {
    let fam = &dr.family;
    let g = fam.graph().clone();
    let t = &dr.tuple;
    let n = t.dim();

    let relations = validate(fam, Mode::Ckt, depth, tol)?.residual();

    let mut initial_projections: f64 = 0.0;
    let mut coextension: f64 = 0.0;
    for e in g.edge_ids() {
        let s = fam.edge(e);
        let ss = s.adjoint().compose(s)?;
        let ss = match ss {
            crate::family::Operator::Local(l) => l,
            crate::family::Operator::Matrix(_) => unreachable!(),
        };
        let s_adj = match s.adjoint() {
            crate::family::Operator::Local(l) => l,
            crate::family::Operator::Matrix(_) => unreachable!(),
        };
        for j in 0..n {
            let expect = &t.ps[g.source(e).0];
            initial_projections = initial_projections.max(column_gap(&ss.apply(j), expect, j));
            let t_adj = t.ts[e.0].adjoint();
            coextension = coextension.max(column_gap(&s_adj.apply(j), &t_adj, j));
        }
    }

    // (d): the vectors w(S) h, |w| ≤ k, span the levels ≤ k.
    let mut spanning_failure = None;
    let mut spanning_margin = f64::INFINITY;
    let mut images: Vec<SparseVector> = (0..n).map(unit).collect();
    let mut frontier = images.clone();
    for k in 0..=depth {
        if k > 0 {
            let mut next = Vec::new();
            for v in &frontier {
                for e in g.edge_ids() {
                    let img = apply_path(fam, &Path::edge(&g, e), v);
                    if !img.is_empty() {
                        next.push(img);
                    }
                }
            }
            images.extend(next.iter().cloned());
            frontier = next;
        }
        let dim = dr.basis.dim_through(k);
        let mut mat = CMatrix::zeros(dim, images.len());
        for (c, v) in images.iter().enumerate() {
            for (i, z) in v {
                mat[(*i, c)] = *z;
            }
        }
        let sv = linalg::singular_values(&mat);
        let info = linalg::rank(&mat, linalg::RANK_TOL);
        if sv.len() >= dim && dim > 0 {
            spanning_margin = spanning_margin.min(sv[dim - 1] / sv[0].max(1.0));
        }
        if info.rank < dim && spanning_failure.is_none() {
            spanning_failure = Some(k);
        }
    }
    if spanning_margin.is_infinite() {
        spanning_margin = 0.0;
    }

    let mut compression: f64 = 0.0;
    for len in 0..depth {
        for w in enumerate_paths(&g, len) {
            let expect = path_matrix(t, &w);
            for j in 0..n {
                let img = apply_path(fam, &w, &unit(j));
                for i in 0..n {
                    let got = img.get(&i).copied().unwrap_or(C64::new(0.0, 0.0));
                    compression = compression.max((got - expect[(i, j)]).norm());
                }
            }
        }
    }

    let wandering = wandering_subspace(fam, depth.max(1), linalg::RANK_TOL)?;
    let alpha_defect = defect_ranks(t, linalg::RANK_TOL);
    let names = |vals: &[usize]| NamedValues(g.vertex_ids().map(|x| (g.vertex_name(x).to_string(), vals[x.0])).collect());
    let slots_per_level = (1..=depth).map(|k| dr.basis.level_size(k)).collect();
    let passed = relations <= tol
        && initial_projections <= tol
        && coextension <= tol
        && spanning_failure.is_none()
        && compression <= tol
        && wandering.alpha == alpha_defect;
    Ok(DilationVerification {
        relations,
        initial_projections,
        coextension,
        spanning_failure,
        spanning_margin,
        compression,
        alpha_dilation: names(&wandering.alpha),
        alpha_defect: names(&alpha_defect),
        slots_per_level,
        passed,
    })
}

/// Largest deviation of a sparse column from column `j` of `m` (entries outside `m` count fully).
fn column_gap(col: &Column, m: &CMatrix, j: usize) -> f64 {
    let mut worst: f64 = 0.0;
    let mut seen = vec![false; m.nrows()];
    for (i, z) in col {
        if *i < m.nrows() {
            seen[*i] = true;
            worst = worst.max((z - m[(*i, j)]).norm());
        } else {
            worst = worst.max(z.norm());
        }
    }
    for i in (0..m.nrows()).filter(|i| !seen[*i]) {
        worst = worst.max(m[(i, j)].norm());
    }
    worst
}

/// `rank(P_x (I - Σ_e T_e T_e*))` per vertex.
pub fn defect_ranks(t: &Tuple, tol: f64) -> Vec<usize> {
    let n = t.dim();
    let mut d = linalg::identity(n);
    for m in &t.ts {
        d -= m * m.adjoint();
    }
    t.ps.iter().map(|p| linalg::rank(&(p * &d), tol).rank).collect()
}

/// `Φ^d(I)` for `d = 0..=max_d`, `Φ(X) = Σ_e T_e X T_e*`.
pub fn phi_iterates(ts: &[CMatrix], n: usize, max_d: usize) -> Vec<CMatrix> {
    let mut out = vec![linalg::identity(n)];
    for _ in 0..max_d {
        let x = out.last().unwrap();
        let mut next = CMatrix::zeros(n, n);
        for t in ts {
            next += t * x * t.adjoint();
        }
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PurityReport {
    pub pure: bool,
    /// First `d` with `tr Φ^d(I) < tol`.
    pub decided_at: Option<usize>,
    /// `tr Φ^d(I)` for `d = 0, 1, ...`.
    pub trace: Vec<f64>,
    /// `max_j Σ_{|w|=d} ‖w(T)* ξ_j‖`, while the number of paths stays within budget.
    pub path_sums: Vec<f64>,
}

/// Paths enumerated per level before the unsquared sums are abandoned.
const PATH_BUDGET: usize = 1 << 14;

/// Decides purity from the decay of `tr Φ^d(I)`, also reporting the unsquared path sums.
pub fn purity_check(t: &Tuple, max_d: usize, tol: f64) -> PurityReport {
    let n = t.dim();
    let g = &t.graph;
    let mut x = linalg::identity(n);
    let mut trace = vec![n as f64];
    let mut path_sums = vec![1.0];
    let mut decided_at = None;
    for d in 1..=max_d {
        let mut next = CMatrix::zeros(n, n);
        for m in &t.ts {
            next += m * &x * m.adjoint();
        }
        x = next;
        let tr: f64 = (0..n).map(|i| x[(i, i)].re).sum();
        trace.push(tr);
        if g.edge_count() > 0 && path_sums.len() == d && crate::fock::FockBasis::new(g.clone()).count_through(d) <= PATH_BUDGET as u128 {
            let paths = enumerate_paths(g, d);
            let mut sums = vec![0.0; n];
            for w in &paths {
                let wt = path_matrix(t, w).adjoint();
                for (j, s) in sums.iter_mut().enumerate() {
                    *s += wt.column(j).norm();
                }
            }
            path_sums.push(sums.into_iter().fold(0.0, f64::max));
        }
        if tr < tol {
            decided_at = Some(d);
            break;
        }
    }
    PurityReport { pure: decided_at.is_some(), decided_at, trace, path_sums }
}

/// Serializable summary of a dilation.
#[derive(Debug, Clone, Serialize)]
pub struct DilationSummary {
    pub base_dim: usize,
    pub defect_dims: NamedValues<usize>,
    pub defect_gap: f64,
    pub verification: DilationVerification,
}

pub fn summarize(dr: &DilationResult, verification: DilationVerification) -> DilationSummary {
    let g = &dr.tuple.graph;
    DilationSummary {
        base_dim: dr.tuple.dim(),
        defect_dims: NamedValues(g.vertex_ids().map(|x| (g.vertex_name(x).to_string(), dr.defect_dims[x.0])).collect()),
        defect_gap: dr.defect_gap,
        verification,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::matrix_unit;
    use crate::graph::catalog;
    use crate::linalg::c;
    use crate::synth;

    fn scalar_tuple(x: f64) -> Tuple {
        Tuple::new(Arc::new(catalog::c1()), vec![CMatrix::from_element(1, 1, c(x))], vec![linalg::identity(1)], 1e-12).unwrap()
    }

    fn half_two_cycle() -> Tuple {
        Tuple::new(
            Arc::new(catalog::cyc2()),
            vec![matrix_unit(2, 1, 0) * c(0.5), matrix_unit(2, 0, 1) * c(0.5)],
            vec![matrix_unit(2, 0, 0), matrix_unit(2, 1, 1)],
            1e-12,
        )
        .unwrap()
    }

    #[test]
    fn scalar_dilation_is_a_weighted_shift() {
        let dr = minimal_dilation(&scalar_tuple(0.5), 1e-12).unwrap();
        assert_eq!(dr.defect_dims, vec![1]);
        let s = match dr.family.edge(EdgeId(0)) {
            crate::family::Operator::Local(l) => l.clone(),
            _ => unreachable!(),
        };
        let col = s.apply(0);
        assert_eq!(col.len(), 2);
        assert!((col[0].1 - c(0.5)).norm() < 1e-15);
        assert!((col[1].1.norm() - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(s.apply(1), vec![(2, ONE)]);
        let v = verify_dilation(&dr, 5, 1e-10).unwrap();
        assert!(v.passed, "{v:?}");
        assert_eq!(v.alpha_dilation.0, vec![("v".to_string(), 1)]);
    }

    #[test]
    fn zero_defect_input_is_its_own_dilation() {
        let ck = crate::family::two_cycle_ck_family();
        let t = Tuple::new(ck.graph().clone(), ck.dense_edges(0), ck.dense_vertices(0), 1e-12).unwrap();
        let dr = minimal_dilation(&t, 1e-12).unwrap();
        assert_eq!(dr.defect_dims, vec![0, 0]);
        assert_eq!(dr.basis.finite_dim(), Some(2));
        let v = verify_dilation(&dr, 5, 1e-10).unwrap();
        assert!(v.passed);
        assert_eq!(v.alpha_defect.0.iter().map(|(_, a)| *a).collect::<Vec<_>>(), vec![0, 0]);
    }

    #[test]
    fn half_two_cycle_has_unit_multiplicities() {
        let dr = minimal_dilation(&half_two_cycle(), 1e-12).unwrap();
        let v = verify_dilation(&dr, 5, 1e-10).unwrap();
        assert!(v.passed);
        assert_eq!(v.alpha_defect.values().copied().collect::<Vec<_>>(), vec![1, 1]);
    }

    #[test]
    fn partial_isometry_blocks_compress_correctly() {
        let t = Tuple::new(
            Arc::new(catalog::cyc2()),
            vec![matrix_unit(2, 1, 0), matrix_unit(2, 0, 1)],
            vec![matrix_unit(2, 0, 0), matrix_unit(2, 1, 1)],
            1e-12,
        )
        .unwrap();
        let v = verify_dilation(&minimal_dilation(&t, 1e-12).unwrap(), 5, 1e-10).unwrap();
        assert!(v.compression < 1e-14);
    }

    #[test]
    fn ranges_stay_orthogonal_when_edges_share_a_range() {
        let mut r = synth::rng(4);
        let t = synth::random_row_contraction(Arc::new(catalog::multi2()), synth::ContractionShape::default(), &mut r);
        let dr = minimal_dilation(&t, 1e-12).unwrap();
        let ops: Vec<LocalOperator> = dr
            .family
            .edges()
            .iter()
            .map(|o| match o {
                crate::family::Operator::Local(l) => l.clone(),
                _ => unreachable!(),
            })
            .collect();
        let dim = dr.basis.dim_through(2);
        for _ in 0..5 {
            let h: SparseVector = (0..dim).map(|i| (i, synth::gaussian(&mut r))).collect();
            let k: SparseVector = (0..dim).map(|i| (i, synth::gaussian(&mut r))).collect();
            let a = ops[0].apply_vector(&h);
            let b = ops[1].apply_vector(&k);
            let inner: C64 = a.iter().filter_map(|(i, z)| b.get(i).map(|w| z.conj() * w)).sum();
            assert!(inner.norm() < 1e-12);
        }
        assert!(verify_dilation(&dr, 4, 1e-10).unwrap().passed);
    }

    #[test]
    fn basis_indexing_round_trips() {
        let dr = minimal_dilation(&half_two_cycle(), 1e-12).unwrap();
        let b = &dr.basis;
        for i in 0..b.dim_through(5) {
            assert_eq!(b.index(b.slot(i)), i);
        }
        assert_eq!(b.level_size(0), 2);
        assert_eq!(b.level_size(1), 2);
    }

    #[test]
    fn purity_of_scalar_and_cycle_examples() {
        let p = purity_check(&scalar_tuple(0.5), 40, 1e-12);
        assert!(p.pure);
        for (d, tr) in p.trace.iter().enumerate() {
            assert!((tr - 4f64.powi(-(d as i32))).abs() < 1e-12);
        }
        assert!((p.path_sums[3] - 0.125).abs() < 1e-15);

        let ck = crate::family::two_cycle_ck_family();
        let t = Tuple::new(ck.graph().clone(), ck.dense_edges(0), ck.dense_vertices(0), 1e-12).unwrap();
        let p = purity_check(&t, 30, 1e-12);
        assert!(!p.pure);
        assert!(p.trace.iter().all(|tr| (tr - 2.0).abs() < 1e-14));

        let p = purity_check(&half_two_cycle(), 40, 1e-12);
        assert!(p.pure);
        let phi = phi_iterates(&half_two_cycle().ts, 2, 10);
        for (d, x) in phi.iter().enumerate() {
            let expect = linalg::identity(2) * c(4f64.powi(-(d as i32)));
            assert!(linalg::max_abs_diff(x, &expect) < 1e-12);
        }
    }

    #[test]
    fn rejects_non_contractions() {
        let t = Tuple::new(
            Arc::new(catalog::c2()),
            vec![linalg::identity(1), linalg::identity(1)],
            vec![linalg::identity(1)],
            1e-12,
        )
        .unwrap();
        assert!(matches!(minimal_dilation(&t, 1e-12), Err(DilationError::NotContraction(_))));
    }
}
