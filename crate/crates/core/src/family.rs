//! Operator families attached to a graph: validation of the Cuntz-Krieger-Toeplitz
//! relations, wandering subspaces, and stabilized row contractions.

use std::sync::Arc;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::fock::{
    left_creation, vertex_projection_left, DirectSumBasis, FiniteBasis, FockBasis, FockError,
    GradedBasis, LocalOperator,
};
use crate::graph::{parse_graph, EdgeId, Graph, GraphError, VertexId};
use crate::json::{matrix_from_value, MatrixRows};
use crate::linalg::{self, block_diag, c, max_abs, max_abs_diff, CMatrix, RankInfo};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("expected {expected} operators for the {what}, found {found}")]
    Count { what: &'static str, expected: usize, found: usize },
    #[error("operator `{name}` has shape {rows}x{cols}, expected {dim}x{dim}")]
    Shape { name: String, rows: usize, cols: usize, dim: usize },
    #[error("operator `{0}` is zero")]
    ZeroOperator(String),
    #[error("`{name}` is not an orthogonal projection (defect {defect:e})")]
    NotProjection { name: String, defect: f64 },
    #[error("families live on different carriers")]
    CarrierMismatch,
    #[error("operation needs a matrix-backed family")]
    NeedsMatrices,
    #[error("family fails the {mode} relations: {detail}")]
    Invalid { mode: Mode, detail: String },
    #[error("projections do not resolve the identity: {0}")]
    NotResolution(String),
    #[error("operator {index} is not stabilized: {detail}")]
    Stabilization { index: usize, detail: String },
    #[error("family document: {0}")]
    Document(String),
}

/// Nonzero threshold for the standing hypothesis that no generator vanishes.
const NONZERO: f64 = 1e-12;
/// Tolerance for accepting matrices as orthogonal projections at construction.
const PROJECTION_TOL: f64 = 1e-8;

/// A bounded operator: a dense matrix or a locally finite operator on a graded carrier.
#[derive(Clone, Debug)]
pub enum Operator {
    Matrix(CMatrix),
    Local(LocalOperator),
}

impl Operator {
    pub fn adjoint(&self) -> Operator {
        match self {
            Operator::Matrix(m) => Operator::Matrix(m.adjoint()),
            Operator::Local(op) => Operator::Local(op.adjoint()),
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Operator) -> Result<Operator, FamilyError> {
        match (self, other) {
            (Operator::Matrix(a), Operator::Matrix(b)) => Ok(Operator::Matrix(a * b)),
            (Operator::Local(a), Operator::Local(b)) => Ok(Operator::Local(a.compose(b)?)),
            _ => Err(FamilyError::CarrierMismatch),
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator, FamilyError> {
        match (self, other) {
            (Operator::Matrix(a), Operator::Matrix(b)) => Ok(Operator::Matrix(a + b)),
            (Operator::Local(a), Operator::Local(b)) => Ok(Operator::Local(a.add(b)?)),
            _ => Err(FamilyError::CarrierMismatch),
        }
    }

    pub fn scale(&self, z: linalg::C64) -> Operator {
        match self {
            Operator::Matrix(m) => Operator::Matrix(m * z),
            Operator::Local(op) => Operator::Local(op.scale(z)),
        }
    }

    /// The matrix itself, or the section on levels `≤ depth`.
    pub fn dense(&self, depth: usize) -> CMatrix {
        match self {
            Operator::Matrix(m) => m.clone(),
            Operator::Local(op) => op.section(depth),
        }
    }

    /// Largest entrywise difference; on graded carriers over columns of level `≤ depth`.
    pub fn max_diff(&self, other: &Operator, depth: usize) -> Result<f64, FamilyError> {
        match (self, other) {
            (Operator::Matrix(a), Operator::Matrix(b)) => Ok(max_abs_diff(a, b)),
            (Operator::Local(a), Operator::Local(b)) => Ok(a.max_entry_diff(b, depth)?),
            _ => Err(FamilyError::CarrierMismatch),
        }
    }
}

/// Where the operators of a family act.
#[derive(Clone, Debug)]
pub enum Carrier {
    Finite(usize),
    Graded(Arc<dyn GradedBasis>),
}

/// Partial isometries `S_e` and projections `P_x` indexed by the edges and vertices of a graph.
#[derive(Clone, Debug)]
pub struct OperatorFamily {
    graph: Arc<Graph>,
    carrier: Carrier,
    edges: Vec<Operator>,
    vertices: Vec<Operator>,
}

fn check_counts(g: &Graph, edges: usize, vertices: usize) -> Result<(), FamilyError> {
    if edges != g.edge_count() {
        return Err(FamilyError::Count { what: "edges", expected: g.edge_count(), found: edges });
    }
    if vertices != g.vertex_count() {
        return Err(FamilyError::Count { what: "vertices", expected: g.vertex_count(), found: vertices });
    }
    Ok(())
}

impl OperatorFamily {
    /// A family of `dim × dim` matrices. Generators must be nonzero and the
    /// vertex operators orthogonal projections.
    pub fn from_matrices(graph: Arc<Graph>, edges: Vec<CMatrix>, vertices: Vec<CMatrix>) -> Result<Self, FamilyError> {
        check_counts(&graph, edges.len(), vertices.len())?;
        let dim = vertices.first().or(edges.first()).map_or(0, |m| m.nrows());
        let named = graph
            .edge_ids()
            .map(|e| graph.edge_name(e).to_string())
            .zip(&edges)
            .chain(graph.vertex_ids().map(|v| graph.vertex_name(v).to_string()).zip(&vertices));
        for (name, m) in named {
            if m.shape() != (dim, dim) {
                return Err(FamilyError::Shape { name, rows: m.nrows(), cols: m.ncols(), dim });
            }
            if max_abs(m) <= NONZERO {
                return Err(FamilyError::ZeroOperator(name));
            }
        }
        for v in graph.vertex_ids() {
            let defect = linalg::projection_defect(&vertices[v.0]);
            if defect > PROJECTION_TOL {
                return Err(FamilyError::NotProjection { name: graph.vertex_name(v).to_string(), defect });
            }
        }
        Ok(OperatorFamily {
            graph,
            carrier: Carrier::Finite(dim),
            edges: edges.into_iter().map(Operator::Matrix).collect(),
            vertices: vertices.into_iter().map(Operator::Matrix).collect(),
        })
    }

    /// A family of locally finite operators on one graded carrier.
    pub fn structural(
        graph: Arc<Graph>,
        basis: Arc<dyn GradedBasis>,
        edges: Vec<LocalOperator>,
        vertices: Vec<LocalOperator>,
    ) -> Result<Self, FamilyError> {
        check_counts(&graph, edges.len(), vertices.len())?;
        let scan = basis.dim_through(basis.top_level().unwrap_or(graph.vertex_count()));
        let named = graph
            .edge_ids()
            .map(|e| graph.edge_name(e).to_string())
            .zip(&edges)
            .chain(graph.vertex_ids().map(|v| graph.vertex_name(v).to_string()).zip(&vertices));
        for (name, op) in named {
            if !Arc::ptr_eq(op.basis(), &basis) {
                return Err(FamilyError::CarrierMismatch);
            }
            if (0..scan).all(|i| op.apply(i).is_empty()) {
                return Err(FamilyError::ZeroOperator(name));
            }
        }
        Ok(OperatorFamily {
            graph,
            carrier: Carrier::Graded(basis),
            edges: edges.into_iter().map(Operator::Local).collect(),
            vertices: vertices.into_iter().map(Operator::Local).collect(),
        })
    }

    /// The left regular representation `{L_e, P_x}` on the Fock space.
    pub fn pure_model(graph: Arc<Graph>) -> Self {
        Self::pure_model_on(FockBasis::new(graph))
    }

    /// The pure model on an existing Fock basis, so other operators can share its carrier.
    pub fn pure_model_on(basis: Arc<FockBasis>) -> Self {
        let graph = basis.graph().clone();
        let edges = graph.edge_ids().map(|e| left_creation(&basis, e).expect("edge of the graph")).collect();
        let vertices = graph
            .vertex_ids()
            .map(|x| vertex_projection_left(&basis, x).expect("vertex of the graph"))
            .collect();
        OperatorFamily::structural(graph, basis, edges, vertices).expect("the pure model has nonzero generators")
    }

    /// `⊕_x (L restricted to Q_x H_G)^{(α_x)}`, the pure family with multiplicities `alphas`.
    pub fn pure_ampliation(graph: Arc<Graph>, alphas: &[usize]) -> Result<Self, FamilyError> {
        if alphas.len() != graph.vertex_count() {
            return Err(FamilyError::Count { what: "multiplicities", expected: graph.vertex_count(), found: alphas.len() });
        }
        let mut trees = Vec::new();
        for x in graph.vertex_ids() {
            for _ in 0..alphas[x.0] {
                trees.push(FockBasis::tree(graph.clone(), x));
            }
        }
        let parts: Vec<Arc<dyn GradedBasis>> = trees.iter().map(|t| t.clone() as Arc<dyn GradedBasis>).collect();
        let basis = DirectSumBasis::new(parts);
        let edges = graph
            .edge_ids()
            .map(|e| {
                let parts = trees.iter().map(|t| left_creation(t, e)).collect::<Result<_, _>>()?;
                LocalOperator::direct_sum(basis.clone(), parts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let vertices = graph
            .vertex_ids()
            .map(|x| {
                let parts = trees.iter().map(|t| vertex_projection_left(t, x)).collect::<Result<_, _>>()?;
                LocalOperator::direct_sum(basis.clone(), parts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        OperatorFamily::structural(graph, basis, edges, vertices)
    }

    /// Parses and checks a family document.
    pub fn from_document(doc: &FamilyDocument) -> Result<Self, FamilyError> {
        OperatorFamily::from_matrices(Arc::new(doc.graph.clone()), doc.edges.clone(), doc.vertices.clone())
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn carrier(&self) -> &Carrier {
        &self.carrier
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self.carrier, Carrier::Finite(_))
    }

    /// Dimension of a matrix-backed carrier.
    pub fn dim(&self) -> Option<usize> {
        match &self.carrier {
            Carrier::Finite(n) => Some(*n),
            Carrier::Graded(b) => b.finite_dim(),
        }
    }

    pub fn edge(&self, e: EdgeId) -> &Operator {
        &self.edges[e.0]
    }

    pub fn vertex(&self, x: VertexId) -> &Operator {
        &self.vertices[x.0]
    }

    pub fn edges(&self) -> &[Operator] {
        &self.edges
    }

    pub fn vertices(&self) -> &[Operator] {
        &self.vertices
    }

    /// The identity on the carrier.
    pub fn identity(&self) -> Operator {
        match &self.carrier {
            Carrier::Finite(n) => Operator::Matrix(linalg::identity(*n)),
            Carrier::Graded(b) => Operator::Local(LocalOperator::identity(b.clone())),
        }
    }

    /// Matrices of the edge operators (sections on levels `≤ depth` for graded carriers).
    pub fn dense_edges(&self, depth: usize) -> Vec<CMatrix> {
        self.edges.iter().map(|op| op.dense(depth)).collect()
    }

    pub fn dense_vertices(&self, depth: usize) -> Vec<CMatrix> {
        self.vertices.iter().map(|op| op.dense(depth)).collect()
    }

    /// True when sections of the edge operators compose like the operators
    /// themselves on `S*`-words: no edge operator lowers the level, so every
    /// `S_e*` maps the span of levels `≤ d` into itself.
    pub fn sections_are_exact(&self) -> bool {
        match &self.carrier {
            Carrier::Finite(_) => true,
            Carrier::Graded(_) => self.edges.iter().all(|op| match op {
                Operator::Local(l) => l.shift().0 >= 0,
                Operator::Matrix(_) => true,
            }),
        }
    }

    /// Matrix-backed direct sum when both are matrices, otherwise a graded direct sum.
    pub fn direct_sum(&self, other: &OperatorFamily) -> Result<Self, FamilyError> {
        if self.graph.as_ref() != other.graph.as_ref() {
            return Err(FamilyError::CarrierMismatch);
        }
        if let (Carrier::Finite(_), Carrier::Finite(_)) = (&self.carrier, &other.carrier) {
            let sum = |a: &[Operator], b: &[Operator]| -> Vec<CMatrix> {
                a.iter().zip(b).map(|(x, y)| block_diag(&[&x.dense(0), &y.dense(0)])).collect()
            };
            return OperatorFamily::from_matrices(
                self.graph.clone(),
                sum(&self.edges, &other.edges),
                sum(&self.vertices, &other.vertices),
            );
        }
        let (left, lb) = self.as_local();
        let (right, rb) = other.as_local();
        let basis = DirectSumBasis::new(vec![lb, rb]);
        let combine = |a: &[LocalOperator], b: &[LocalOperator]| -> Result<Vec<LocalOperator>, FamilyError> {
            a.iter()
                .zip(b)
                .map(|(x, y)| Ok(LocalOperator::direct_sum(basis.clone(), vec![x.clone(), y.clone()])?))
                .collect()
        };
        let edges = combine(&left.0, &right.0)?;
        let vertices = combine(&left.1, &right.1)?;
        OperatorFamily::structural(self.graph.clone(), basis, edges, vertices)
    }

    #[allow(clippy::type_complexity)]
    fn as_local(&self) -> ((Vec<LocalOperator>, Vec<LocalOperator>), Arc<dyn GradedBasis>) {
        let basis: Arc<dyn GradedBasis> = match &self.carrier {
            Carrier::Finite(n) => Arc::new(FiniteBasis { dim: *n }),
            Carrier::Graded(b) => b.clone(),
        };
        let convert = |ops: &[Operator]| {
            ops.iter()
                .map(|op| match op {
                    Operator::Matrix(m) => LocalOperator::from_matrix(basis.clone(), m),
                    Operator::Local(l) => l.clone(),
                })
                .collect::<Vec<_>>()
        };
        ((convert(&self.edges), convert(&self.vertices)), basis)
    }

    /// Compression `V* S V` of a matrix family to the span of orthonormal columns `v`.
    /// Only meaningful when that span reduces the family.
    pub fn restrict(&self, v: &CMatrix) -> Result<Self, FamilyError> {
        if !self.is_matrix() {
            return Err(FamilyError::NeedsMatrices);
        }
        let cut = |ops: &[Operator]| ops.iter().map(|op| v.adjoint() * op.dense(0) * v).collect();
        OperatorFamily::from_matrices(self.graph.clone(), cut(&self.edges), cut(&self.vertices))
    }

    /// Conjugates a matrix family by a unitary: `U S U*`.
    pub fn conjugate(&self, u: &CMatrix) -> Result<Self, FamilyError> {
        if !self.is_matrix() {
            return Err(FamilyError::NeedsMatrices);
        }
        let conj = |ops: &[Operator]| ops.iter().map(|op| u * op.dense(0) * u.adjoint()).collect();
        OperatorFamily::from_matrices(self.graph.clone(), conj(&self.edges), conj(&self.vertices))
    }

    /// Document form of a matrix family.
    pub fn to_document(&self) -> Result<FamilyDocument, FamilyError> {
        let Carrier::Finite(dim) = self.carrier else {
            return Err(FamilyError::NeedsMatrices);
        };
        Ok(FamilyDocument {
            graph: self.graph.as_ref().clone(),
            dim,
            edges: self.dense_edges(0),
            vertices: self.dense_vertices(0),
        })
    }
}

/// Which relation set to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    #[serde(rename = "CKT")]
    Ckt,
    #[serde(rename = "CK")]
    Ck,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ckt => "CKT",
            Mode::Ck => "CK",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClauseReport {
    pub clause: &'static str,
    pub residual: f64,
    /// The generator(s) at which the worst residual occurs.
    pub worst_at: Option<String>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub mode: Mode,
    pub valid: bool,
    pub clauses: Vec<ClauseReport>,
}

impl ValidationReport {
    pub fn residual(&self) -> f64 {
        self.clauses.iter().map(|c| c.residual).fold(0.0, f64::max)
    }

    fn failure(&self) -> String {
        self.clauses
            .iter()
            .filter(|c| !c.ok)
            .map(|c| format!("clause ({}) residual {:e}", c.clause, c.residual))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

struct Worst {
    residual: f64,
    at: Option<String>,
}

impl Worst {
    fn new() -> Self {
        Worst { residual: 0.0, at: None }
    }

    fn update(&mut self, residual: f64, at: impl FnOnce() -> String) {
        if residual > self.residual || self.at.is_none() {
            if residual > self.residual {
                self.residual = residual;
            }
            self.at = Some(at());
        }
    }

    fn finish(self, clause: &'static str, tol: f64) -> ClauseReport {
        ClauseReport { clause, ok: self.residual <= tol, residual: self.residual, worst_at: self.at }
    }
}

/// Checks the Cuntz-Krieger-Toeplitz relations (or, in [`Mode::Ck`], the
/// Cuntz-Krieger relations):
///
/// (i) `P_x P_y = 0` for `x ≠ y`, and each `P_x` a projection;
/// (ii) `S_e* S_f = 0` for `e ≠ f`;
/// (iii) `S_e* S_e = P_{s(e)}`;
/// (iv) `Σ_{r(e)=x} S_e S_e* ≤ P_x`, with equality in CK mode.
///
/// Matrix families are checked to `tol`. Graded families are checked exactly
/// on every column of level `≤ depth`; there (iv) is tested as `P_x E_x = E_x`
/// for `E_x = Σ_{r(e)=x} S_e S_e*`, which is equivalent to the inequality once
/// (ii) and (iii) make `E_x` a projection.
pub fn validate(fam: &OperatorFamily, mode: Mode, depth: usize, tol: f64) -> Result<ValidationReport, FamilyError> {
    let g = fam.graph.clone();
    let matrix = fam.is_matrix();
    let mut clauses = Vec::new();

    let mut w = Worst::new();
    for x in g.vertex_ids() {
        let p = fam.vertex(x);
        if matrix {
            w.update(linalg::projection_defect(&p.dense(0)), || g.vertex_name(x).to_string());
        } else {
            let pp = p.compose(p)?;
            w.update(pp.max_diff(p, depth)?.max(p.max_diff(&p.adjoint(), depth)?), || {
                g.vertex_name(x).to_string()
            });
        }
        for y in g.vertex_ids().filter(|y| *y != x) {
            let r = max_entries(&p.compose(fam.vertex(y))?, depth)?;
            w.update(r, || format!("{},{}", g.vertex_name(x), g.vertex_name(y)));
        }
    }
    clauses.push(w.finish("i", tol));

    let mut w = Worst::new();
    for e in g.edge_ids() {
        for f in g.edge_ids().filter(|f| *f != e) {
            let r = max_entries(&fam.edge(e).adjoint().compose(fam.edge(f))?, depth)?;
            w.update(r, || format!("{},{}", g.edge_name(e), g.edge_name(f)));
        }
    }
    clauses.push(w.finish("ii", tol));

    let mut w = Worst::new();
    for e in g.edge_ids() {
        let s = fam.edge(e);
        let r = s.adjoint().compose(s)?.max_diff(fam.vertex(g.source(e)), depth)?;
        w.update(r, || g.edge_name(e).to_string());
    }
    clauses.push(w.finish("iii", tol));

    let mut w = Worst::new();
    for x in g.vertex_ids() {
        let p = fam.vertex(x);
        let mut sum: Option<Operator> = None;
        for &e in g.in_edges(x) {
            let s = fam.edge(e);
            let ss = s.compose(&s.adjoint())?;
            sum = Some(match sum {
                None => ss,
                Some(acc) => acc.add(&ss)?,
            });
        }
        let residual = match (sum, mode, matrix) {
            (None, Mode::Ckt, _) => 0.0,
            (None, Mode::Ck, _) => max_entries(p, depth)?,
            (Some(e_x), Mode::Ck, _) => e_x.max_diff(p, depth)?,
            (Some(e_x), Mode::Ckt, true) => {
                let gap = p.dense(0) - e_x.dense(0);
                (-linalg::lambda_min(&gap)).max(0.0)
            }
            (Some(e_x), Mode::Ckt, false) => p.compose(&e_x)?.max_diff(&e_x, depth)?,
        };
        w.update(residual, || g.vertex_name(x).to_string());
    }
    clauses.push(w.finish("iv", tol));

    Ok(ValidationReport { mode, valid: clauses.iter().all(|c| c.ok), clauses })
}

fn max_entries(op: &Operator, depth: usize) -> Result<f64, FamilyError> {
    Ok(match op {
        Operator::Matrix(m) => max_abs(m),
        Operator::Local(l) => l.max_entry_diff(&LocalOperator::zero(l.basis().clone()), depth)?,
    })
}

/// Fails with [`FamilyError::Invalid`] unless the family satisfies the CKT relations.
pub fn require_ckt(fam: &OperatorFamily, depth: usize, tol: f64) -> Result<ValidationReport, FamilyError> {
    let report = validate(fam, Mode::Ckt, depth, tol)?;
    if !report.valid {
        return Err(FamilyError::Invalid { mode: Mode::Ckt, detail: report.failure() });
    }
    Ok(report)
}

/// The wandering subspace `Ran(I - Σ S_e S_e*)` and its vertex multiplicities.
#[derive(Debug, Clone, Serialize)]
pub struct DefectReport {
    /// `α_x = rank(P_x (I - Σ_e S_e S_e*))`, in vertex order.
    pub alpha: Vec<usize>,
    /// Orthonormal basis of the wandering subspace, as columns.
    #[serde(skip)]
    pub basis: CMatrix,
    /// Rank decisions per vertex.
    #[serde(skip)]
    pub ranks: Vec<RankInfo>,
    /// Smallest spectral gap at the rank cuts.
    pub gap: f64,
    /// `‖B* B - I‖` for the returned basis.
    pub residual: f64,
    /// Levels examined on a graded carrier.
    pub depth: Option<usize>,
    /// Graded carriers: the multiplicities did not change between `depth - 1` and `depth`.
    pub stable: bool,
}

/// `I - Σ_e S_e S_e*` as a matrix (section to `depth` on graded carriers).
pub fn defect_matrix(fam: &OperatorFamily, depth: usize) -> CMatrix {
    let edges = fam.dense_edges(depth);
    let n = edges.first().map_or_else(|| fam.dense_vertices(depth)[0].nrows(), |m| m.nrows());
    let mut d = linalg::identity(n);
    for s in &edges {
        d -= s * s.adjoint();
    }
    d
}

fn defect_at(fam: &OperatorFamily, depth: usize, tol: f64) -> (Vec<RankInfo>, CMatrix) {
    let delta = defect_matrix(fam, depth);
    let ranks = fam
        .dense_vertices(depth)
        .iter()
        .map(|p| linalg::rank(&(p * &delta), tol))
        .collect();
    (ranks, delta)
}

/// Computes the wandering subspace of a CKT family.
///
/// Graded carriers are handled through sections on levels `≤ depth`, which are
/// exact compressions when [`OperatorFamily::sections_are_exact`] holds.
pub fn wandering_subspace(fam: &OperatorFamily, depth: usize, tol: f64) -> Result<DefectReport, FamilyError> {
    require_ckt(fam, depth, linalg::RANK_TOL.max(tol))?;
    let (ranks, delta) = defect_at(fam, depth, tol);
    let (basis, info) = linalg::range_basis(&delta, tol);
    let alpha: Vec<usize> = ranks.iter().map(|r| r.rank).collect();
    let stable = match fam.carrier {
        Carrier::Finite(_) => true,
        Carrier::Graded(_) if depth == 0 => false,
        Carrier::Graded(_) => {
            defect_at(fam, depth - 1, tol).0.iter().map(|r| r.rank).collect::<Vec<_>>() == alpha
        }
    };
    let residual = max_abs_diff(&(basis.adjoint() * &basis), &linalg::identity(basis.ncols()));
    let gap = ranks.iter().map(|r| r.gap()).fold(info.gap(), f64::min);
    Ok(DefectReport {
        alpha,
        basis,
        ranks,
        gap,
        residual,
        depth: matches!(fam.carrier, Carrier::Graded(_)).then_some(depth),
        stable,
    })
}

/// Orthonormal basis of `∩_e ker S_e*`, the second description of the wandering subspace.
pub fn wandering_by_kernels(fam: &OperatorFamily, depth: usize, tol: f64) -> CMatrix {
    let edges = fam.dense_edges(depth);
    let n = fam.dense_vertices(depth)[0].nrows();
    let mut stacked = CMatrix::zeros(n * edges.len(), n);
    for (k, s) in edges.iter().enumerate() {
        stacked.view_mut((k * n, 0), (n, n)).copy_from(&s.adjoint());
    }
    linalg::null_space(&stacked, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowContraction {
    pub holds: bool,
    /// `sqrt(λ_max(Σ T_e T_e*))`.
    pub row_norm: f64,
}

pub fn validate_row_contraction(ts: &[CMatrix], tol: f64) -> RowContraction {
    let Some(first) = ts.first() else {
        return RowContraction { holds: true, row_norm: 0.0 };
    };
    let mut sum = CMatrix::zeros(first.nrows(), first.nrows());
    for t in ts {
        sum += t * t.adjoint();
    }
    let lmax = linalg::lambda_max(&sum).max(0.0);
    RowContraction { holds: lmax <= 1.0 + tol, row_norm: lmax.sqrt() }
}

fn check_resolution(ps: &[CMatrix], tol: f64) -> Result<(), FamilyError> {
    let Some(first) = ps.first() else {
        return Err(FamilyError::NotResolution("no projections".into()));
    };
    let n = first.nrows();
    let mut sum = CMatrix::zeros(n, n);
    for (i, p) in ps.iter().enumerate() {
        if p.shape() != (n, n) {
            return Err(FamilyError::NotResolution(format!("projection {i} has the wrong shape")));
        }
        let defect = linalg::projection_defect(p);
        if defect > tol {
            return Err(FamilyError::NotResolution(format!("operator {i} is not a projection ({defect:e})")));
        }
        for (j, q) in ps.iter().enumerate().skip(i + 1) {
            let overlap = max_abs(&(p * q));
            if overlap > tol {
                return Err(FamilyError::NotResolution(format!("projections {i} and {j} overlap ({overlap:e})")));
            }
        }
        sum += p;
    }
    let miss = max_abs_diff(&sum, &linalg::identity(n));
    if miss > tol {
        return Err(FamilyError::NotResolution(format!("sum differs from the identity by {miss:e}")));
    }
    Ok(())
}

/// For each `T_i`, the unique `(r, s)` with `P_r T_i P_s = T_i`.
pub fn check_stabilization(ts: &[CMatrix], ps: &[CMatrix], tol: f64) -> Result<Vec<(usize, usize)>, FamilyError> {
    check_resolution(ps, tol)?;
    let n = ps[0].nrows();
    ts.iter()
        .enumerate()
        .map(|(i, t)| {
            if t.shape() != (n, n) {
                return Err(FamilyError::Stabilization { index: i, detail: "wrong shape".into() });
            }
            let mut hits = Vec::new();
            for (r, pr) in ps.iter().enumerate() {
                for (s, p_s) in ps.iter().enumerate() {
                    if max_abs(&(pr * t * p_s)) > tol {
                        hits.push((r, s));
                    }
                }
            }
            match hits.as_slice() {
                [(r, s)] => Ok((*r, *s)),
                [] => Err(FamilyError::Stabilization { index: i, detail: "operator vanishes".into() }),
                _ => Err(FamilyError::Stabilization {
                    index: i,
                    detail: format!("nonzero blocks at (range, source) pairs {hits:?}"),
                }),
            }
        })
        .collect()
}

/// The graph induced by a stabilized tuple: vertices `v0, v1, ...` for the
/// projections and an edge `t<i>` from `s` to `r` for each `T_i`.
pub fn extract_graph(ts: &[CMatrix], ps: &[CMatrix], tol: f64) -> Result<Graph, FamilyError> {
    let pairs = check_stabilization(ts, ps, tol)?;
    let mut g = Graph::new();
    for k in 0..ps.len() {
        g.add_vertex(&format!("v{k}"))?;
    }
    for (i, (r, s)) in pairs.iter().enumerate() {
        g.add_edge(&format!("t{i}"), &format!("v{s}"), &format!("v{r}"))?;
    }
    Ok(g)
}

/// A matrix tuple `T = (T_e)` stabilized by projections `P = (P_x)` along a given graph.
#[derive(Debug, Clone)]
pub struct Tuple {
    pub graph: Arc<Graph>,
    pub ts: Vec<CMatrix>,
    pub ps: Vec<CMatrix>,
}

impl Tuple {
    /// Checks that `P_{r(e)} T_e P_{s(e)} = T_e` is the only nonzero block of each `T_e`.
    pub fn new(graph: Arc<Graph>, ts: Vec<CMatrix>, ps: Vec<CMatrix>, tol: f64) -> Result<Self, FamilyError> {
        check_counts(&graph, ts.len(), ps.len())?;
        let pairs = check_stabilization(&ts, &ps, tol)?;
        for (e, (r, s)) in graph.edge_ids().zip(pairs) {
            if (r, s) != (graph.range(e).0, graph.source(e).0) {
                return Err(FamilyError::Stabilization {
                    index: e.0,
                    detail: format!(
                        "`{}` maps {} to {}, but the graph says {} to {}",
                        graph.edge_name(e),
                        graph.vertex_name(VertexId(s)),
                        graph.vertex_name(VertexId(r)),
                        graph.vertex_name(graph.source(e)),
                        graph.vertex_name(graph.range(e)),
                    ),
                });
            }
        }
        Ok(Tuple { graph, ts, ps })
    }

    pub fn from_document(doc: &FamilyDocument, tol: f64) -> Result<Self, FamilyError> {
        Tuple::new(Arc::new(doc.graph.clone()), doc.edges.clone(), doc.vertices.clone(), tol)
    }

    pub fn dim(&self) -> usize {
        self.ps[0].nrows()
    }

    pub fn to_document(&self) -> FamilyDocument {
        FamilyDocument {
            graph: self.graph.as_ref().clone(),
            dim: self.dim(),
            edges: self.ts.clone(),
            vertices: self.ps.clone(),
        }
    }
}

/// A graph with one dense matrix per edge and per vertex, as stored on disk.
///
/// ```json
/// {"graph": "vertex v\nedge l v -> v\n", "dim": 1,
///  "edges": {"l": [[[0.5, 0.0]]]}, "vertices": {"v": [[[1.0, 0.0]]]}}
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyDocument {
    pub graph: Graph,
    pub dim: usize,
    pub edges: Vec<CMatrix>,
    pub vertices: Vec<CMatrix>,
}

impl FamilyDocument {
    pub fn parse(text: &str) -> Result<Self, FamilyError> {
        let v: Value = serde_json::from_str(text).map_err(|e| FamilyError::Document(e.to_string()))?;
        let bad = |m: &str| FamilyError::Document(m.to_string());
        let graph_text = v.get("graph").and_then(Value::as_str).ok_or_else(|| bad("missing string field `graph`"))?;
        let graph = parse_graph(graph_text, false)?;
        let dim = v.get("dim").and_then(Value::as_u64).ok_or_else(|| bad("missing integer field `dim`"))? as usize;
        let read = |field: &str, names: Vec<String>| -> Result<Vec<CMatrix>, FamilyError> {
            let map = v.get(field).and_then(Value::as_object).ok_or_else(|| bad(&format!("missing object `{field}`")))?;
            if let Some(extra) = map.keys().find(|k| !names.contains(k)) {
                return Err(bad(&format!("`{field}` names unknown identifier `{extra}`")));
            }
            names
                .iter()
                .map(|name| {
                    let m = map.get(name).ok_or_else(|| bad(&format!("`{field}` lacks `{name}`")))?;
                    matrix_from_value(m, dim).map_err(|e| bad(&format!("{field}.{name}: {e}")))
                })
                .collect()
        };
        let edges = read("edges", graph.edge_ids().map(|e| graph.edge_name(e).to_string()).collect())?;
        let vertices = read("vertices", graph.vertex_ids().map(|x| graph.vertex_name(x).to_string()).collect())?;
        Ok(FamilyDocument { graph, dim, edges, vertices })
    }

    pub fn to_json(&self) -> String {
        crate::json::to_string(self)
    }
}

struct NamedMatrices<'a> {
    names: Vec<&'a str>,
    mats: &'a [CMatrix],
}

impl Serialize for NamedMatrices<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.mats.len()))?;
        for (name, m) in self.names.iter().zip(self.mats) {
            map.serialize_entry(name, &MatrixRows(m))?;
        }
        map.end()
    }
}

impl Serialize for FamilyDocument {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let g = &self.graph;
        let mut map = s.serialize_map(Some(4))?;
        map.serialize_entry("graph", &g.to_text())?;
        map.serialize_entry("dim", &self.dim)?;
        map.serialize_entry(
            "edges",
            &NamedMatrices { names: g.edge_ids().map(|e| g.edge_name(e)).collect(), mats: &self.edges },
        )?;
        map.serialize_entry(
            "vertices",
            &NamedMatrices { names: g.vertex_ids().map(|x| g.vertex_name(x)).collect(), mats: &self.vertices },
        )?;
        map.end()
    }
}

/// Matrix units `E_{ij}` of size `n`.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(i, j)] = c(1.0);
    m
}

/// The 2×2 Cuntz-Krieger family on the two-cycle: `S_e = E_{yx}`, `S_f = E_{xy}`.
pub fn two_cycle_ck_family() -> OperatorFamily {
    OperatorFamily::from_matrices(
        Arc::new(crate::graph::catalog::cyc2()),
        vec![matrix_unit(2, 1, 0), matrix_unit(2, 0, 1)],
        vec![matrix_unit(2, 0, 0), matrix_unit(2, 1, 1)],
    )
    .expect("valid family")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::catalog;

    #[test]
    fn pure_model_is_ckt_but_not_ck() {
        let fam = OperatorFamily::pure_model(Arc::new(catalog::cyc2()));
        let ckt = validate(&fam, Mode::Ckt, 6, 1e-10).unwrap();
        assert!(ckt.valid);
        assert_eq!(ckt.residual(), 0.0);
        let ck = validate(&fam, Mode::Ck, 6, 1e-10).unwrap();
        assert!(!ck.valid);
        assert_eq!(ck.clauses[3].residual, 1.0);
    }

    #[test]
    fn two_cycle_matrix_family_is_ck() {
        let fam = two_cycle_ck_family();
        assert!(validate(&fam, Mode::Ck, 0, 1e-10).unwrap().valid);
    }

    #[test]
    fn coinciding_projections_fail_clause_one() {
        let g = Arc::new(catalog::cyc2());
        let p = matrix_unit(2, 0, 0);
        let fam = OperatorFamily::from_matrices(g, vec![p.clone(), p.clone()], vec![p.clone(), p]).unwrap();
        let report = validate(&fam, Mode::Ckt, 0, 1e-10).unwrap();
        assert!(!report.clauses[0].ok);
        assert!(!report.valid);
    }

    #[test]
    fn zero_generators_are_rejected() {
        let g = Arc::new(catalog::c1());
        let err = OperatorFamily::from_matrices(g, vec![CMatrix::zeros(1, 1)], vec![linalg::identity(1)]).unwrap_err();
        assert_eq!(err, FamilyError::ZeroOperator("l".into()));
    }

    #[test]
    fn wandering_subspace_of_the_pure_model() {
        for (_, g) in catalog::all() {
            let fam = OperatorFamily::pure_model(Arc::new(g.clone()));
            let d = wandering_subspace(&fam, 3, 1e-10).unwrap();
            assert_eq!(d.alpha, vec![1; g.vertex_count()]);
            assert!(d.stable);
            assert_eq!(d.basis.ncols(), g.vertex_count());
            // The wandering vectors are exactly the vacuum vectors ξ_x.
            for k in 0..d.basis.ncols() {
                for i in g.vertex_count()..d.basis.nrows() {
                    assert!(d.basis[(i, k)].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn wandering_subspace_of_ck_family_and_doubled_shift() {
        let d = wandering_subspace(&two_cycle_ck_family(), 0, 1e-10).unwrap();
        assert_eq!(d.alpha, vec![0, 0]);
        let fam = OperatorFamily::pure_ampliation(Arc::new(catalog::c1()), &[2]).unwrap();
        assert_eq!(wandering_subspace(&fam, 4, 1e-10).unwrap().alpha, vec![2]);
    }

    #[test]
    fn direct_sums_add_multiplicities() {
        let pure = OperatorFamily::pure_model(Arc::new(catalog::cyc2()));
        let sum = pure.direct_sum(&two_cycle_ck_family()).unwrap();
        assert!(validate(&sum, Mode::Ckt, 4, 1e-10).unwrap().valid);
        assert_eq!(wandering_subspace(&sum, 4, 1e-10).unwrap().alpha, vec![1, 1]);
        let twice = two_cycle_ck_family().direct_sum(&two_cycle_ck_family()).unwrap();
        assert_eq!(twice.dim(), Some(4));
    }

    #[test]
    fn kernel_route_matches_range_route() {
        let fam = OperatorFamily::pure_ampliation(Arc::new(catalog::multi2()), &[1, 2]).unwrap();
        let d = wandering_subspace(&fam, 3, 1e-10).unwrap();
        let k = wandering_by_kernels(&fam, 3, 1e-10);
        assert_eq!(d.alpha, vec![1, 2]);
        assert!(linalg::subspace_distance(&d.basis, &k) < 1e-10);
    }

    #[test]
    fn row_contractions() {
        let half = CMatrix::from_element(1, 1, c(0.5));
        let rc = validate_row_contraction(&[half], 1e-12);
        assert!(rc.holds && (rc.row_norm - 0.5).abs() < 1e-15);
        let one = linalg::identity(1);
        let rc = validate_row_contraction(&[one.clone(), one], 1e-12);
        assert!(!rc.holds);
        assert!((rc.row_norm - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn stabilization_and_graph_extraction() {
        let v1 = matrix_unit(2, 1, 0);
        let v2 = matrix_unit(2, 0, 1);
        let ps = [matrix_unit(2, 0, 0), matrix_unit(2, 1, 1)];
        assert_eq!(check_stabilization(&[v1.clone(), v2.clone()], &ps, 1e-12).unwrap(), vec![(1, 0), (0, 1)]);
        let g = extract_graph(&[v1.clone(), v2], &ps, 1e-12).unwrap();
        assert!(crate::graph::find_isomorphism(&g, &catalog::cyc2()).is_some());

        let scalars = [CMatrix::from_element(1, 1, c(0.3)), CMatrix::from_element(1, 1, c(0.1))];
        let g = extract_graph(&scalars, &[linalg::identity(1)], 1e-12).unwrap();
        assert!(crate::graph::find_isomorphism(&g, &catalog::c2()).is_some());

        let nilpotent = matrix_unit(2, 0, 1) * c(0.7);
        let g = extract_graph(&[nilpotent], &ps, 1e-12).unwrap();
        assert!(crate::graph::find_isomorphism(&g, &catalog::single_edge()).is_some());

        let mixed = &v1 + matrix_unit(2, 0, 0);
        assert!(matches!(
            check_stabilization(&[mixed], &ps, 1e-12),
            Err(FamilyError::Stabilization { index: 0, .. })
        ));
        assert!(matches!(check_stabilization(&[v1], &[ps[0].clone()], 1e-12), Err(FamilyError::NotResolution(_))));
    }

    #[test]
    fn pure_model_graph_is_recovered_from_its_sections() {
        // Grading the pure model by range vertex stabilizes the sections of the creation operators.
        for (_, g) in catalog::all() {
            let fam = OperatorFamily::pure_model(Arc::new(g.clone()));
            let ts = fam.dense_edges(4);
            let ps = fam.dense_vertices(4);
            let h = extract_graph(&ts, &ps, 1e-12).unwrap();
            assert!(crate::graph::find_isomorphism(&h, &g).is_some());
        }
    }

    #[test]
    fn documents_round_trip() {
        let fam = two_cycle_ck_family();
        let doc = fam.to_document().unwrap();
        let text = doc.to_json();
        let back = FamilyDocument::parse(&text).unwrap();
        assert_eq!(back, doc);
        let again = OperatorFamily::from_document(&back).unwrap();
        assert_eq!(
            validate(&again, Mode::Ck, 0, 1e-10).unwrap().valid,
            validate(&fam, Mode::Ck, 0, 1e-10).unwrap().valid
        );
        assert!(text.find("\"graph\"").unwrap() < text.find("\"dim\"").unwrap());
        assert!(FamilyDocument::parse("{\"graph\": \"vertex v\", \"dim\": 1}").is_err());
    }

    #[test]
    fn finite_ckt_families_on_sink_free_graphs_have_no_wandering_vectors() {
        for fam in [two_cycle_ck_family(), two_cycle_ck_family().direct_sum(&two_cycle_ck_family()).unwrap()] {
            assert!(validate(&fam, Mode::Ckt, 0, 1e-10).unwrap().valid);
            assert_eq!(defect_matrix(&fam, 0).iter().map(|z| z.norm()).fold(0.0, f64::max), 0.0);
        }
    }
}
