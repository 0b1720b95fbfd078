//! Hypotheses for injectivity of representations of graph algebras, and the
//! isometry trick behind the essential-norm identity on the pure model.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::family::{wandering_subspace, FamilyError, OperatorFamily};
use crate::fock::{right_path_operator, FockBasis, FockError, LocalOperator, SparseVector};
use crate::graph::{enumerate_paths, sources_and_sinks, vertex_simple_loops, Graph, Path, VertexId};
use crate::json::NamedValues;
use crate::linalg::{self, C64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CstarError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("vertex `{0}` is a source: no path of positive length ends there")]
    Source(String),
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("{0} paths of length {1} exceed the enumeration budget")]
    TooManyPaths(u128, usize),
}

/// One checked condition. `holds` is `None` when the condition cannot be
/// decided from finite data.
#[derive(Debug, Clone, Serialize)]
pub struct Condition {
    pub name: String,
    pub holds: Option<bool>,
    /// Vertices, loops or ranks that decide the verdict.
    pub witnesses: Vec<String>,
    /// What was checked exhaustively when no witness is needed.
    pub certificate: Option<String>,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub conditions: Vec<Condition>,
    /// All decided conditions hold.
    pub holds: bool,
}

impl HypothesisReport {
    fn new(conditions: Vec<Condition>) -> Self {
        let holds = conditions.iter().all(|c| c.holds != Some(false));
        HypothesisReport { conditions, holds }
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn names(g: &Graph, vs: &[VertexId]) -> Vec<String> {
    vs.iter().map(|v| g.vertex_name(*v).to_string()).collect()
}

/// Graph-side checks: sources, sinks, and the vertex-simple loops without an
/// entrance (the loops whose spectrum would have to contain the circle).
pub fn szymanski_graph_conditions(g: &Graph) -> HypothesisReport {
    let (sources, sinks) = sources_and_sinks(g);
    let n = g.vertex_count();
    let absent = |what: &str, found: &[VertexId]| Condition {
        name: format!("no {what}"),
        holds: Some(found.is_empty()),
        witnesses: names(g, found),
        certificate: found.is_empty().then(|| format!("all {n} vertices checked")),
        residual: None,
    };
    let loops = vertex_simple_loops(g);
    let open: Vec<String> = loops.iter().filter(|l| !l.has_entrance).map(|l| g.path_name(&l.path)).collect();
    let spectral = Condition {
        name: "entrance-free loops".into(),
        // Vacuous when there are none; otherwise a spectral condition on the representation.
        holds: open.is_empty().then_some(true),
        certificate: Some(format!("{} vertex-simple loops examined", loops.len())),
        witnesses: open,
        residual: None,
    };
    HypothesisReport::new(vec![absent("sources", &sources), absent("sinks", &sinks), spectral])
}

/// Per vertex, the rank of `P_x - Σ_{r(e)=x} S_e S_e*`; holds when every rank is positive.
pub fn coburn_condition(fam: &OperatorFamily, depth: usize, tol: f64) -> Result<HypothesisReport, CstarError> {
    let g = fam.graph();
    let defect = wandering_subspace(fam, depth, tol)?;
    let conditions = g
        .vertex_ids()
        .map(|x| {
            let rank = defect.alpha[x.0];
            Condition {
                name: format!("defect at {}", g.vertex_name(x)),
                holds: Some(rank >= 1),
                witnesses: vec![format!("rank {rank}")],
                certificate: None,
                residual: Some(defect.ranks[x.0].gap()),
            }
        })
        .collect();
    Ok(HypothesisReport::new(conditions))
}

/// Outcome of the norm identity on one trial vector, as squared norms.
#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub shifted: f64,
    pub plain: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EssentialNormProbe {
    pub depth: usize,
    /// The chosen `w_x`, per vertex.
    pub paths: NamedValues<String>,
    /// Largest entry of `R* R - I` on levels `≤ check_depth`.
    pub isometry: f64,
    /// Largest entry of `R_{w_x}* R_{w_y} - δ_{xy} Q_x`.
    pub orthogonality: f64,
    /// Largest entry of `A R - R A`.
    pub commutation: f64,
    pub trials: Vec<TrialOutcome>,
    /// Every residual is zero and every trial matches bit for bit.
    pub exact: bool,
}

const PATH_BUDGET: u128 = 1 << 20;

/// For each vertex the canonically least path of length `d` ending there.
pub fn least_paths_into(g: &Arc<Graph>, d: usize) -> Result<Vec<Path>, CstarError> {
    let count = FockBasis::new(g.clone()).count_through(d);
    if count > PATH_BUDGET {
        return Err(CstarError::TooManyPaths(count, d));
    }
    let paths = enumerate_paths(g, d);
    g.vertex_ids()
        .map(|x| {
            paths
                .iter()
                .find(|w| w.range(g) == x)
                .cloned()
                .ok_or_else(|| CstarError::Source(g.vertex_name(x).to_string()))
        })
        .collect()
}

/// Builds `R = Σ_x R_{w_x}` with `|w_x| = d`, and checks on the pure model
/// that `R` is an isometry with `Q`-orthogonal pieces, that it commutes with
/// `A`, and that `‖A R ξ‖ = ‖A ξ‖` on the trial vectors.
///
/// `A` must live on `basis` and be built from left creations, so that it
/// commutes with right creations.
pub fn essential_norm_probe(
    basis: &Arc<FockBasis>,
    a: &LocalOperator,
    d: usize,
    check_depth: usize,
    trials: &[SparseVector],
) -> Result<EssentialNormProbe, CstarError> {
    if d == 0 {
        return Err(CstarError::ZeroDepth);
    }
    let g = basis.graph().clone();
    let (sources, _) = sources_and_sinks(&g);
    if let Some(x) = sources.first() {
        return Err(CstarError::Source(g.vertex_name(*x).to_string()));
    }
    let paths = least_paths_into(&g, d)?;
    let pieces: Vec<LocalOperator> = paths.iter().map(|w| right_path_operator(basis, w)).collect::<Result<_, _>>()?;
    let r = LocalOperator::sum(basis.clone(), &pieces)?;
    let identity = LocalOperator::identity(basis.clone());
    let isometry = r.adjoint().compose(&r)?.max_entry_diff(&identity, check_depth)?;
    let mut orthogonality: f64 = 0.0;
    for (i, ri) in pieces.iter().enumerate() {
        for (j, rj) in pieces.iter().enumerate() {
            let expect = if i == j {
                crate::fock::tree_projection(basis, VertexId(i))?
            } else {
                LocalOperator::zero(basis.clone())
            };
            orthogonality = orthogonality.max(ri.adjoint().compose(rj)?.max_entry_diff(&expect, check_depth)?);
        }
    }
    let commutation = a.compose(&r)?.max_entry_diff(&r.compose(a)?, check_depth)?;
    let sq = |v: &SparseVector| -> f64 {
        let mut terms: Vec<f64> = v.values().map(|z: &C64| z.norm_sqr()).collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    };
    let trials: Vec<TrialOutcome> = trials
        .iter()
        .map(|xi| TrialOutcome { shifted: sq(&a.apply_vector(&r.apply_vector(xi))), plain: sq(&a.apply_vector(xi)) })
        .collect();
    let exact = isometry == 0.0 && orthogonality == 0.0 && commutation == 0.0 && trials.iter().all(|t| t.shifted == t.plain);
    Ok(EssentialNormProbe {
        depth: d,
        paths: NamedValues(paths.iter().zip(g.vertex_ids()).map(|(w, x)| (g.vertex_name(x).to_string(), g.path_name(w))).collect()),
        isometry,
        orthogonality,
        commutation,
        trials,
        exact,
    })
}

/// Largest entry of the pure-model defect minus `Σ_x ξ_x ⊗ ξ_x` on levels `≤ depth`.
pub fn vacuum_defect_residual(g: Arc<Graph>, depth: usize) -> f64 {
    let fam = OperatorFamily::pure_model(g.clone());
    let n = crate::fock::GradedBasis::dim_through(&*FockBasis::new(g.clone()), depth);
    let mut expect = linalg::CMatrix::zeros(n, n);
    for x in 0..g.vertex_count() {
        expect[(x, x)] = C64::new(1.0, 0.0);
    }
    let mut defect = crate::family::defect_matrix(&fam, depth);
    defect -= expect;
    linalg::max_abs(&defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::two_cycle_ck_family;
    use crate::fock::left_creation;
    use crate::graph::catalog;

    #[test]
    fn graph_conditions_on_the_catalog() {
        let r = szymanski_graph_conditions(&catalog::cyc2());
        let loops = r.condition("entrance-free loops").unwrap();
        assert_eq!(loops.witnesses, vec!["f.e".to_string()]);
        assert_eq!(loops.holds, None);
        assert!(r.holds);

        let r = szymanski_graph_conditions(&catalog::c2());
        assert_eq!(r.condition("entrance-free loops").unwrap().holds, Some(true));

        let r = szymanski_graph_conditions(&catalog::single_edge());
        assert_eq!(r.condition("no sources").unwrap().witnesses, vec!["x".to_string()]);
        assert_eq!(r.condition("no sinks").unwrap().witnesses, vec!["y".to_string()]);
        assert!(!r.holds);
    }

    #[test]
    fn loops_agree_with_the_graph_module() {
        for (_, g) in catalog::all() {
            let open: Vec<String> = vertex_simple_loops(&g).iter().filter(|l| !l.has_entrance).map(|l| g.path_name(&l.path)).collect();
            let r = szymanski_graph_conditions(&g);
            assert_eq!(r.condition("entrance-free loops").unwrap().witnesses, open);
        }
    }

    #[test]
    fn coburn_on_pure_and_ck_families() {
        let pure = OperatorFamily::pure_model(Arc::new(catalog::cyc2()));
        let r = coburn_condition(&pure, 6, 1e-10).unwrap();
        assert!(r.holds);
        assert!(r.conditions.iter().all(|c| c.witnesses == vec!["rank 1".to_string()]));

        let ck = two_cycle_ck_family();
        let r = coburn_condition(&ck, 0, 1e-10).unwrap();
        assert!(!r.holds);
        assert!(r.conditions.iter().all(|c| c.holds == Some(false)));

        let amp = OperatorFamily::pure_ampliation(Arc::new(catalog::cyc2()), &[1, 1]).unwrap();
        let sum = amp.direct_sum(&ck).unwrap();
        assert!(coburn_condition(&sum, 5, 1e-10).unwrap().holds);
    }

    #[test]
    fn vacuum_defect_is_exact() {
        for (_, g) in catalog::all() {
            assert_eq!(vacuum_defect_residual(Arc::new(g.clone()), 5), 0.0, "{g}");
        }
    }

    #[test]
    fn probe_on_the_two_cycle() {
        let g = Arc::new(catalog::cyc2());
        let basis = FockBasis::new(g.clone());
        let paths = least_paths_into(&g, 2).unwrap();
        assert_eq!(paths.iter().map(|w| g.path_name(w)).collect::<Vec<_>>(), vec!["f.e", "e.f"]);
        let le = left_creation(&basis, g.edge("e").unwrap()).unwrap();
        let xi_x = SparseVector::from([(0, C64::new(1.0, 0.0))]);
        let probe = essential_norm_probe(&basis, &le, 2, 6, &[xi_x]).unwrap();
        assert!(probe.exact);
        assert_eq!(probe.trials[0].shifted, 1.0);

        let zero = LocalOperator::zero(basis.clone());
        assert!(essential_norm_probe(&basis, &zero, 3, 5, &[]).unwrap().exact);
    }

    #[test]
    fn probe_rejects_sources() {
        let g = Arc::new(catalog::single_edge());
        let basis = FockBasis::new(g);
        let zero = LocalOperator::zero(basis.clone());
        assert!(matches!(essential_norm_probe(&basis, &zero, 1, 2, &[]), Err(CstarError::Source(_))));
        assert!(matches!(essential_norm_probe(&basis, &zero, 0, 2, &[]), Err(CstarError::ZeroDepth)));
    }
}
