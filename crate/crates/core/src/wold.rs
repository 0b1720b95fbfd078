//! Wold decomposition of CKT families, similarity-to-unitary upgrades, and
//! the Szego condition.

use serde::Serialize;
use thiserror::Error;

use crate::family::{require_ckt, wandering_subspace, Carrier, FamilyError, Operator, OperatorFamily};
use crate::fock::SparseVector;
use crate::json::NamedValues;
use crate::linalg::{self, c, max_abs_diff, CMatrix, CVector, C64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WoldError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("the graph has a sink at `{0}`")]
    Sink(String),
    #[error("graded family whose edge operators lower the level; sections are not exact")]
    InexactSections,
    #[error("1-eigenspace of the backward iteration did not stabilize within {steps} steps")]
    NoStabilization { steps: usize },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("the similarity is singular (smallest singular value {0:e})")]
    Singular(f64),
    #[error("`Y` is not positive invertible: {0}")]
    NotPositive(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct WoldResiduals {
    /// `‖B_p* B_c‖`: pure and coisometric parts are orthogonal.
    pub orthogonality: f64,
    /// `‖B_p B_p* + B_c B_c* - I‖`.
    pub completeness: f64,
    /// Largest increase `λ_max(Φ^{d+1}(I) - Φ^d(I))`, which must not be positive.
    pub monotonicity: f64,
    /// `‖G - I‖` for the Gram matrix of the vectors `w(S) ω`.
    pub isometry: f64,
    /// `dim H_p` minus the rank of the certificate vectors lying in the computed carrier.
    pub coverage_deficit: usize,
    /// Spectral gap around eigenvalue 1 at the final step.
    pub eigen_gap: f64,
}

/// Outcome of [`wold_decompose`].
#[derive(Debug, Clone, Serialize)]
pub struct WoldReport {
    pub alpha: NamedValues<usize>,
    pub dim_hc: usize,
    pub dim_hp: usize,
    pub residuals: WoldResiduals,
    /// Iterations of `Φ` performed.
    pub steps: usize,
    /// Levels examined on graded carriers.
    pub depth: Option<usize>,
    #[serde(skip)]
    pub hc_basis: CMatrix,
    #[serde(skip)]
    pub hp_basis: CMatrix,
}

fn sink_free(fam: &OperatorFamily) -> Result<(), WoldError> {
    let g = fam.graph();
    match g.vertex_ids().find(|v| g.out_edges(*v).is_empty()) {
        Some(v) => Err(WoldError::Sink(g.vertex_name(v).to_string())),
        None => Ok(()),
    }
}

fn phi(edges: &[CMatrix], x: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(x.nrows(), x.ncols());
    for s in edges {
        out += s * x * s.adjoint();
    }
    out
}

/// Splits a CKT family into its pure part `H_p` and its Cuntz-Krieger part `H_c`.
///
/// `H_c` is the set of vectors fixed by every `Φ^d(I)`, `Φ(X) = Σ_e S_e X S_e*`;
/// the iteration stops once the dimension of the 1-eigenspace has repeated for
/// two consecutive steps, or after as many steps as the dimension. Graded
/// carriers are handled on the levels `≤ depth`.
pub fn wold_decompose(fam: &OperatorFamily, depth: usize, tol: f64) -> Result<WoldReport, WoldError> {
    sink_free(fam)?;
    if !fam.sections_are_exact() {
        return Err(WoldError::InexactSections);
    }
    require_ckt(fam, depth, tol.max(linalg::RANK_TOL))?;
    let defect = wandering_subspace(fam, depth, linalg::RANK_TOL)?;
    let edges = fam.dense_edges(depth);
    let n = fam.dense_vertices(depth)[0].nrows();

    let mut x = linalg::identity(n);
    let mut dims: Vec<usize> = Vec::new();
    let mut monotonicity: f64 = 0.0;
    let mut eig;
    let max_steps = n + 2;
    let mut steps = 0;
    loop {
        let next = phi(&edges, &x);
        monotonicity = monotonicity.max(linalg::lambda_max(&(&next - &x)));
        x = next;
        steps += 1;
        eig = linalg::hermitian_eigen(&x);
        dims.push(eig.0.iter().filter(|l| (*l - 1.0).abs() <= tol).count());
        let k = dims.len();
        if k >= 3 && dims[k - 1] == dims[k - 2] && dims[k - 2] == dims[k - 3] {
            break;
        }
        if steps >= max_steps {
            if k >= 2 && dims[k - 1] == dims[k - 2] {
                break;
            }
            return Err(WoldError::NoStabilization { steps });
        }
    }
    let (values, vectors) = eig;
    let keep: Vec<usize> = (0..n).filter(|&i| (values[i] - 1.0).abs() <= tol).collect();
    let rest: Vec<usize> = (0..n).filter(|&i| (values[i] - 1.0).abs() > tol).collect();
    let pick = |idx: &[usize]| CMatrix::from_fn(n, idx.len(), |r, k| vectors[(r, idx[k])]);
    let hc = pick(&keep);
    let hp = pick(&rest);
    let eigen_gap = {
        let inside = keep.iter().map(|&i| (values[i] - 1.0).abs()).fold(0.0, f64::max);
        let outside = rest.iter().map(|&i| (values[i] - 1.0).abs()).fold(f64::INFINITY, f64::min);
        if outside.is_finite() { outside - inside } else { tol - inside }
    };

    let (isometry, coverage_deficit) = certify_pure_part(fam, &defect.basis, &hp, depth)?;
    let g = fam.graph();
    Ok(WoldReport {
        alpha: NamedValues(g.vertex_ids().map(|v| (g.vertex_name(v).to_string(), defect.alpha[v.0])).collect()),
        dim_hc: hc.ncols(),
        dim_hp: hp.ncols(),
        residuals: WoldResiduals {
            orthogonality: linalg::max_abs(&(hp.adjoint() * &hc)),
            completeness: max_abs_diff(&(&hp * hp.adjoint() + &hc * hc.adjoint()), &linalg::identity(n)),
            monotonicity: monotonicity.max(0.0),
            isometry,
            coverage_deficit,
            eigen_gap,
        },
        steps,
        depth: matches!(fam.carrier(), Carrier::Graded(_)).then_some(depth),
        hc_basis: hc,
        hp_basis: hp,
    })
}

/// Builds the vectors `w(S) ω` for wandering vectors `ω ∈ P_x W` and paths
/// `w` with `s(w) = x`, checks they are orthonormal, and measures how much of
/// `H_p` they fail to span inside the computed carrier.
fn certify_pure_part(
    fam: &OperatorFamily,
    wandering: &CMatrix,
    hp: &CMatrix,
    depth: usize,
) -> Result<(f64, usize), WoldError> {
    let g = fam.graph();
    let n = wandering.nrows();
    let vertices = fam.dense_vertices(depth);
    // Wandering vectors split by vertex.
    let mut frontier: Vec<(usize, CVector)> = Vec::new();
    for x in g.vertex_ids() {
        let (b, _) = linalg::range_basis(&(&vertices[x.0] * wandering), linalg::RANK_TOL);
        for k in 0..b.ncols() {
            frontier.push((x.0, b.column(k).into_owned()));
        }
    }
    let mut vectors: Vec<CVector> = Vec::new();
    let max_len = if fam.is_matrix() { n } else { depth };
    for _ in 0..=max_len {
        if frontier.is_empty() {
            break;
        }
        let mut next = Vec::new();
        for (x, v) in frontier {
            vectors.push(v.clone());
            for &e in g.out_edges(crate::graph::VertexId(x)) {
                let image = apply_exact(fam.edge(e), &v)?;
                if let Some(img) = image {
                    next.push((g.range(e).0, img));
                }
            }
        }
        frontier = next;
    }
    let m = vectors.len();
    let mut gram = CMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            gram[(i, j)] = vectors[i].dotc(&vectors[j]);
        }
    }
    let isometry = if m == 0 { 0.0 } else { max_abs_diff(&gram, &linalg::identity(m)) };
    let spanned = if vectors.is_empty() {
        0
    } else {
        let mat = CMatrix::from_columns(&vectors);
        linalg::rank(&(hp.adjoint() * mat), linalg::RANK_TOL).rank
    };
    Ok((isometry, hp.ncols().saturating_sub(spanned)))
}

/// Applies an edge operator to a vector of the computed carrier; on graded
/// carriers the result is dropped when a non-negligible part leaves the
/// computed levels.
fn apply_exact(op: &Operator, v: &CVector) -> Result<Option<CVector>, WoldError> {
    match op {
        Operator::Matrix(m) => Ok(Some(m * v)),
        Operator::Local(l) => {
            let n = v.len();
            let sparse: SparseVector = v.iter().enumerate().filter(|(_, z)| z.norm() > 0.0).map(|(i, z)| (i, *z)).collect();
            let image = l.apply_vector(&sparse);
            let negligible = linalg::RANK_TOL * v.norm();
            let mut out = CVector::zeros(n);
            for (i, z) in &image {
                if *i >= n {
                    if z.norm() <= negligible {
                        continue;
                    }
                    return Ok(None);
                }
                out[*i] = *z;
            }
            Ok(Some(out))
        }
    }
}

/// Basis of the commutant `{B : B S_e = S_e B, B P_x = P_x B}` of a matrix family.
pub fn commutant_basis(fam: &OperatorFamily, tol: f64) -> Result<Vec<CMatrix>, WoldError> {
    let n = fam.dim().filter(|_| fam.is_matrix()).ok_or(FamilyError::NeedsMatrices)?;
    let ops: Vec<CMatrix> = fam.dense_edges(0).into_iter().chain(fam.dense_vertices(0)).collect();
    // vec(B S - S B) = (S^T ⊗ I - I ⊗ S) vec(B), column-major vec.
    let id = linalg::identity(n);
    let mut system = CMatrix::zeros(ops.len() * n * n, n * n);
    for (k, s) in ops.iter().enumerate() {
        let block = s.transpose().kronecker(&id) - id.kronecker(s);
        system.view_mut((k * n * n, 0), (n * n, n * n)).copy_from(&block);
    }
    let null = linalg::null_space(&system, tol);
    Ok((0..null.ncols())
        .map(|k| CMatrix::from_column_slice(n, n, null.column(k).as_slice()))
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct SimilarityCertificate {
    #[serde(skip)]
    pub unitary: CMatrix,
    /// `‖U*U - I‖` (max entry).
    pub unitarity: f64,
    /// Largest of `‖U S_e U* - S'_e‖`, `‖U P_x U* - P'_x‖`.
    pub intertwining: f64,
    /// Largest residual of the hypothesis `A S_e = S'_e A`, `A P_x = P'_x A`.
    pub hypothesis: f64,
    pub condition_number: f64,
}

/// Given `A` with `A S_e A^{-1} = S'_e` and `A P_x A^{-1} = P'_x`, produces a
/// unitary `U` with the same intertwining property.
///
/// On sink-free graphs a finite-dimensional CKT family is Cuntz-Krieger, so its
/// pure part vanishes and `U` is the unitary factor of the polar decomposition of `A`.
pub fn similarity_to_unitary(
    fam: &OperatorFamily,
    other: &OperatorFamily,
    a: &CMatrix,
    tol: f64,
) -> Result<SimilarityCertificate, WoldError> {
    if !fam.is_matrix() || !other.is_matrix() {
        return Err(FamilyError::NeedsMatrices.into());
    }
    if fam.graph().as_ref() != other.graph().as_ref() || fam.dim() != other.dim() {
        return Err(FamilyError::CarrierMismatch.into());
    }
    sink_free(fam)?;
    let n = fam.dim().unwrap();
    if a.shape() != (n, n) {
        return Err(WoldError::Hypothesis(format!("A has shape {:?}, expected {n}x{n}", a.shape())));
    }
    let sv = linalg::singular_values(a);
    let smin = sv.last().copied().unwrap_or(0.0);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smin <= tol * smax.max(1.0) {
        return Err(WoldError::Singular(smin));
    }
    let kappa = smax / smin;
    let pairs: Vec<(CMatrix, CMatrix)> = fam
        .dense_edges(0)
        .into_iter()
        .zip(other.dense_edges(0))
        .chain(fam.dense_vertices(0).into_iter().zip(other.dense_vertices(0)))
        .collect();
    // Scale-free residual: ‖A S - S' A‖ / ‖A‖.
    let hypothesis = pairs
        .iter()
        .map(|(s, t)| linalg::max_abs(&(a * s - t * a)) / smax)
        .fold(0.0, f64::max);
    if hypothesis > tol * kappa {
        return Err(WoldError::Hypothesis(format!("A does not intertwine the families (residual {hypothesis:e})")));
    }
    require_ckt(fam, 0, tol)?;
    require_ckt(other, 0, tol)?;
    let w = wold_decompose(fam, 0, tol.max(1e-9))?;
    if w.dim_hp != 0 {
        return Err(WoldError::Hypothesis(format!("unexpected pure part of dimension {}", w.dim_hp)));
    }
    let u = linalg::polar_unitary(a).ok_or(WoldError::Singular(smin))?;
    let unitarity = max_abs_diff(&(u.adjoint() * &u), &linalg::identity(n));
    let intertwining = pairs
        .iter()
        .map(|(s, t)| max_abs_diff(&(&u * s * u.adjoint()), t))
        .fold(0.0, f64::max);
    Ok(SimilarityCertificate { unitary: u, unitarity, intertwining, hypothesis, condition_number: kappa })
}

#[derive(Debug, Clone, Serialize)]
pub struct SzegoReport {
    pub holds: bool,
    pub residual: f64,
    /// Edge pair `(e, f)` with the largest violation.
    pub worst_pair: Option<(String, String)>,
    /// Smallest eigenvalue of `Y` (of its section on graded carriers).
    pub lambda_min: f64,
}

/// Checks `S_e* Y S_f = Y S_e* S_f = S_e* S_f Y` for every pair of edges.
pub fn szego_condition(fam: &OperatorFamily, y: &Operator, depth: usize, tol: f64) -> Result<SzegoReport, WoldError> {
    let asym = y.max_diff(&y.adjoint(), depth)?;
    if asym > tol {
        return Err(WoldError::NotPositive(format!("not self-adjoint (residual {asym:e})")));
    }
    let lambda_min = linalg::lambda_min(&y.dense(depth));
    if lambda_min <= tol {
        return Err(WoldError::NotPositive(format!("smallest eigenvalue {lambda_min:e}")));
    }
    let g = fam.graph();
    let mut worst = (0.0, None);
    for e in g.edge_ids() {
        for f in g.edge_ids() {
            let se_star = fam.edge(e).adjoint();
            let sf = fam.edge(f);
            let a = se_star.compose(y)?.compose(sf)?;
            let b = y.compose(&se_star)?.compose(sf)?;
            let cc = se_star.compose(sf)?.compose(y)?;
            let r = a.max_diff(&b, depth)?.max(b.max_diff(&cc, depth)?);
            if r > worst.0 || worst.1.is_none() && r > tol {
                worst = (r, Some((g.edge_name(e).to_string(), g.edge_name(f).to_string())));
            }
        }
    }
    Ok(SzegoReport { holds: worst.0 <= tol, residual: worst.0, worst_pair: worst.1, lambda_min })
}

/// `Y = A* A + ε I`.
pub fn gram_plus(a: &Operator, eps: f64, identity: &Operator) -> Result<Operator, WoldError> {
    Ok(a.adjoint().compose(a)?.add(&identity.scale(C64::new(eps, 0.0)))?)
}

/// Random element `Σ c_k B_k` of a commutant, shifted to be comfortably invertible.
pub fn random_commutant_element(basis: &[CMatrix], rng: &mut impl rand::Rng) -> Option<CMatrix> {
    let first = basis.first()?;
    let n = first.nrows();
    for _ in 0..32 {
        let mut b = CMatrix::zeros(n, n);
        for m in basis {
            b += m * crate::synth::gaussian(rng);
        }
        let sv = linalg::singular_values(&b);
        if sv.last().copied().unwrap_or(0.0) > 0.05 * sv[0] {
            return Some(b * c(1.0 / sv[0]));
        }
    }
    None
}
