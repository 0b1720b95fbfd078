//! Seeded random inputs: matrices, unitaries, Cuntz-Krieger blocks and
//! stabilized row contractions.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::family::{FamilyError, OperatorFamily, Tuple};
use crate::graph::Graph;
use crate::linalg::{self, c, CMatrix, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix with independent standard complex Gaussian entries.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-distributed unitary (QR of a Gaussian matrix with phases fixed).
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> CMatrix {
    let qr = gaussian_matrix(n, n, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                c(1.0)
            }
        } else {
            C64::new(0.0, 0.0)
        }
    });
    q * phases
}

/// First index of each vertex block when vertex `x` carries `dims[x]` coordinates.
pub fn block_offsets(dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0];
    for d in dims {
        out.push(out.last().unwrap() + d);
    }
    out
}

/// Coordinate projections onto consecutive blocks of sizes `dims`.
pub fn block_projections(dims: &[usize]) -> Vec<CMatrix> {
    let off = block_offsets(dims);
    let n = off[dims.len()];
    (0..dims.len())
        .map(|x| CMatrix::from_fn(n, n, |i, j| if i == j && off[x] <= i && i < off[x + 1] { c(1.0) } else { C64::new(0.0, 0.0) }))
        .collect()
}

/// Places `block` at the `(range, source)` position of a block matrix.
pub fn place_block(dims: &[usize], range: usize, source: usize, block: &CMatrix) -> CMatrix {
    let off = block_offsets(dims);
    let n = off[dims.len()];
    let mut m = CMatrix::zeros(n, n);
    m.view_mut((off[range], off[source]), (dims[range], dims[source])).copy_from(block);
    m
}

/// True when every vertex has exactly one incoming and one outgoing edge,
/// which is when finite-dimensional Cuntz-Krieger families exist.
pub fn admits_finite_ck(g: &Graph) -> bool {
    g.vertex_count() > 0 && g.vertex_ids().all(|v| g.in_edges(v).len() == 1 && g.out_edges(v).len() == 1)
}

/// A Cuntz-Krieger family on `C^{m |V|}` with a random unitary block per edge.
pub fn random_ck_family(graph: Arc<Graph>, m: usize, rng: &mut impl Rng) -> Result<OperatorFamily, FamilyError> {
    if !admits_finite_ck(&graph) || m == 0 {
        return Err(FamilyError::Invalid {
            mode: crate::family::Mode::Ck,
            detail: "finite Cuntz-Krieger families need a disjoint union of cycles".into(),
        });
    }
    let dims = vec![m; graph.vertex_count()];
    let edges = graph
        .edge_ids()
        .map(|e| place_block(&dims, graph.range(e).0, graph.source(e).0, &random_unitary(m, rng)))
        .collect();
    OperatorFamily::from_matrices(graph, edges, block_projections(&dims))
}

/// How to draw a stabilized row contraction.
#[derive(Debug, Clone, Copy)]
pub struct ContractionShape {
    /// Largest block size per vertex; sizes are drawn from `1..=max_dim`.
    pub max_dim: usize,
    /// Row norm of the result; `None` draws it from `[0.2, 1]`, with norm 1 half of the time.
    pub row_norm: Option<f64>,
}

impl Default for ContractionShape {
    fn default() -> Self {
        ContractionShape { max_dim: 3, row_norm: None }
    }
}

/// A random tuple stabilized along `graph`, scaled to a prescribed row norm.
///
/// Each `T_e` is a random block from `P_{s(e)}` to `P_{r(e)}` of random rank.
pub fn random_row_contraction(graph: Arc<Graph>, shape: ContractionShape, rng: &mut impl Rng) -> Tuple {
    let dims: Vec<usize> = (0..graph.vertex_count()).map(|_| rng.random_range(1..=shape.max_dim)).collect();
    random_row_contraction_with_dims(graph, &dims, shape.row_norm, rng)
}

pub fn random_row_contraction_with_dims(graph: Arc<Graph>, dims: &[usize], row_norm: Option<f64>, rng: &mut impl Rng) -> Tuple {
    let mut ts: Vec<CMatrix> = graph
        .edge_ids()
        .map(|e| {
            let (r, s) = (graph.range(e).0, graph.source(e).0);
            let k = rng.random_range(1..=dims[r].min(dims[s]));
            let block = gaussian_matrix(dims[r], k, rng) * gaussian_matrix(k, dims[s], rng);
            place_block(dims, r, s, &block)
        })
        .collect();
    let target = row_norm.unwrap_or_else(|| if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.2..1.0) });
    let current = crate::family::validate_row_contraction(&ts, 0.0).row_norm;
    if current > 0.0 {
        for t in &mut ts {
            *t *= c(target / current);
        }
    }
    let ps = block_projections(dims);
    Tuple::new(graph, ts, ps, 1e-9).expect("random blocks follow the graph")
}

/// Random invertible matrix with condition number at most about `kappa`.
pub fn random_invertible(n: usize, kappa: f64, rng: &mut impl Rng) -> CMatrix {
    let u = random_unitary(n, rng);
    let v = random_unitary(n, rng);
    let s = CMatrix::from_fn(n, n, |i, j| if i == j { c(rng.random_range(1.0..kappa.max(1.0 + 1e-9))) } else { C64::new(0.0, 0.0) });
    u * s * v
}

pub fn is_unitary(u: &CMatrix, tol: f64) -> bool {
    linalg::max_abs_diff(&(u.adjoint() * u), &linalg::identity(u.ncols())) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{validate, validate_row_contraction, Mode};
    use crate::graph::catalog;

    #[test]
    fn unitaries_are_unitary() {
        let mut r = rng(7);
        for n in 1..6 {
            assert!(is_unitary(&random_unitary(n, &mut r), 1e-12));
        }
    }

    #[test]
    fn ck_families_validate() {
        let mut r = rng(1);
        for g in [catalog::c1(), catalog::cyc2(), catalog::cycle3()] {
            let fam = random_ck_family(Arc::new(g), 2, &mut r).unwrap();
            assert!(validate(&fam, Mode::Ck, 0, 1e-10).unwrap().valid);
        }
        assert!(random_ck_family(Arc::new(catalog::c2()), 1, &mut r).is_err());
    }

    #[test]
    fn contractions_have_the_requested_norm() {
        let mut r = rng(3);
        for (_, g) in catalog::all() {
            let t = random_row_contraction(Arc::new(g), ContractionShape { max_dim: 3, row_norm: Some(0.7) }, &mut r);
            assert!((validate_row_contraction(&t.ts, 0.0).row_norm - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn seeds_reproduce() {
        let a = random_row_contraction(Arc::new(catalog::multi2()), ContractionShape::default(), &mut rng(11));
        let b = random_row_contraction(Arc::new(catalog::multi2()), ContractionShape::default(), &mut rng(11));
        assert_eq!(a.ts, b.ts);
    }
}
