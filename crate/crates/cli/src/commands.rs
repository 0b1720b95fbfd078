use std::fs;
use std::path::Path as FsPath;
use std::sync::Arc;

use fockforge::cstar::{coburn_condition, essential_norm_probe, szymanski_graph_conditions, vacuum_defect_residual, Condition, EssentialNormProbe, HypothesisReport};
use fockforge::dilation::{minimal_dilation, purity_check, summarize, verify_dilation, DilationSummary, PurityReport};
use fockforge::family::{validate, FamilyDocument, Mode, OperatorFamily, Tuple, ValidationReport};
use fockforge::fock::{FockBasis, GradedBasis, SparseVector};
use fockforge::graph::{catalog, deformation_leq, parse_graph, sources_and_sinks, uniform_aperiodic_path_property, vertex_simple_loops, Graph, UappReport};
use fockforge::linalg::C64;
use fockforge::poly::{
    evaluate, poset_norm_check, random_graph_polynomial, random_letter_polynomial, sup_norm_estimate, von_neumann_check, GraphPolynomial,
    LetterPolynomial, NormEstimate, NormOptions, PosetReport, StarPolynomial, Verdict, VonNeumannReport,
};
use fockforge::synth::{self, ContractionShape};
use fockforge::wold::wold_decompose;
use fockforge::family::Operator;
use serde::Serialize;

use crate::report::{flag, num, Report, Status};

pub type CliResult<T> = Result<T, String>;

fn read(path: &FsPath) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn load_graph(path: &FsPath, lenient: bool) -> CliResult<Arc<Graph>> {
    let text = read(path)?;
    parse_graph(&text, lenient).map(Arc::new).map_err(|e| format!("{}: {e}", path.display()))
}

/// Reads a family document; a separately given graph must agree with the embedded one.
pub fn load_family(path: &FsPath, graph: Option<&Arc<Graph>>) -> CliResult<FamilyDocument> {
    let doc = FamilyDocument::parse(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(g) = graph {
        if **g != doc.graph {
            return Err(format!("{}: embedded graph differs from the one given with --graph", path.display()));
        }
    }
    Ok(doc)
}

fn verdict_status(v: Verdict) -> Status {
    match v {
        Verdict::Pass => Status::Pass,
        Verdict::Fail => Status::Fail,
        Verdict::Inconclusive => Status::Inconclusive,
    }
}

// ---------------------------------------------------------------------------
// graph-info

#[derive(Serialize)]
struct EdgeInfo {
    name: String,
    source: String,
    range: String,
}

#[derive(Serialize)]
struct LoopInfo {
    path: String,
    has_entrance: bool,
}

#[derive(Serialize)]
struct GraphInfo {
    vertices: Vec<String>,
    edges: Vec<EdgeInfo>,
    sources: Vec<String>,
    sinks: Vec<String>,
    loops: Vec<LoopInfo>,
    uapp: UappReport,
}

pub fn graph_info(g: &Graph) -> Report {
    let names = |vs: &[fockforge::graph::VertexId]| vs.iter().map(|v| g.vertex_name(*v).to_string()).collect::<Vec<_>>();
    let (sources, sinks) = sources_and_sinks(g);
    let info = GraphInfo {
        vertices: g.vertex_ids().map(|x| g.vertex_name(x).to_string()).collect(),
        edges: g
            .edge_ids()
            .map(|e| EdgeInfo {
                name: g.edge_name(e).to_string(),
                source: g.vertex_name(g.source(e)).to_string(),
                range: g.vertex_name(g.range(e)).to_string(),
            })
            .collect(),
        sources: names(&sources),
        sinks: names(&sinks),
        loops: vertex_simple_loops(g).into_iter().map(|l| LoopInfo { path: g.path_name(&l.path), has_entrance: l.has_entrance }).collect(),
        uapp: uniform_aperiodic_path_property(g),
    };
    let mut r = Report::new(&info, &["vertex", "in", "out", "source", "sink", "saturation", "loops", "aperiodic path", "uapp"], Status::Pass);
    for (x, u) in g.vertex_ids().zip(&info.uapp.vertices) {
        r.row(vec![
            u.vertex.clone(),
            g.in_edges(x).len().to_string(),
            g.out_edges(x).len().to_string(),
            flag(sources.contains(&x)),
            flag(sinks.contains(&x)),
            u.saturation.join(" "),
            u.distinct_loops.join(" "),
            flag(u.aperiodic_path),
            flag(u.holds),
        ]);
    }
    r
}

// ---------------------------------------------------------------------------
// validate

pub fn validate_family(fam: &OperatorFamily, mode: Mode, depth: usize, tol: f64) -> CliResult<Report> {
    let report: ValidationReport = validate(fam, mode, depth, tol).map_err(|e| e.to_string())?;
    let status = if report.valid { Status::Pass } else { Status::Fail };
    let mut r = Report::new(&report, &["clause", "residual", "worst at", "ok"], status);
    for c in &report.clauses {
        r.row(vec![c.clause.to_string(), num(c.residual), c.worst_at.clone().unwrap_or_default(), flag(c.ok)]);
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// wold

pub fn wold(doc: &FamilyDocument, depth: usize, tol: f64) -> CliResult<Report> {
    let fam = OperatorFamily::from_document(doc).map_err(|e| e.to_string())?;
    let report = wold_decompose(&fam, depth, tol).map_err(|e| e.to_string())?;
    let mut r = Report::new(&report, &["quantity", "value"], Status::Pass);
    for (x, a) in &report.alpha.0 {
        r.row(vec![format!("alpha {x}"), a.to_string()]);
    }
    r.row(vec!["dim H_c".into(), report.dim_hc.to_string()]);
    r.row(vec!["dim H_p".into(), report.dim_hp.to_string()]);
    r.row(vec!["steps".into(), report.steps.to_string()]);
    let res = &report.residuals;
    r.row(vec!["orthogonality".into(), num(res.orthogonality)]);
    r.row(vec!["completeness".into(), num(res.completeness)]);
    r.row(vec!["monotonicity".into(), num(res.monotonicity)]);
    r.row(vec!["isometry".into(), num(res.isometry)]);
    r.row(vec!["coverage deficit".into(), res.coverage_deficit.to_string()]);
    Ok(r)
}

// ---------------------------------------------------------------------------
// dilate

#[derive(Serialize)]
struct DilateOutput {
    dilation: DilationSummary,
    purity: PurityReport,
}

/// Builds and verifies the minimal dilation; optionally writes its compression to
/// levels `≤ export_depth` as a family document.
pub fn dilate(doc: &FamilyDocument, depth: usize, tol: f64, export: Option<(&FsPath, usize)>) -> CliResult<Report> {
    let tuple = Tuple::from_document(doc, tol.max(1e-12)).map_err(|e| e.to_string())?;
    let dr = minimal_dilation(&tuple, tol).map_err(|e| e.to_string())?;
    let verification = verify_dilation(&dr, depth, tol).map_err(|e| e.to_string())?;
    if let Some((path, level)) = export {
        let exported = FamilyDocument {
            graph: doc.graph.clone(),
            dim: dr.family.dense_edges(level).first().map_or(0, |m| m.nrows()),
            edges: dr.family.dense_edges(level),
            vertices: dr.family.dense_vertices(level),
        };
        fs::write(path, exported.to_json() + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let out = DilateOutput { dilation: summarize(&dr, verification), purity: purity_check(&tuple, 64, tol) };
    let v = &out.dilation.verification;
    let status = if v.passed { Status::Pass } else { Status::Fail };
    let mut r = Report::new(&out, &["quantity", "value"], status);
    r.row(vec!["base dim".into(), out.dilation.base_dim.to_string()]);
    for (x, d) in &out.dilation.defect_dims.0 {
        r.row(vec![format!("defect dim {x}"), d.to_string()]);
    }
    for (k, n) in v.slots_per_level.iter().enumerate() {
        r.row(vec![format!("slots level {k}"), n.to_string()]);
    }
    r.row(vec!["(a) relations".into(), num(v.relations)]);
    r.row(vec!["(b) initial projections".into(), num(v.initial_projections)]);
    r.row(vec!["(c) coextension".into(), num(v.coextension)]);
    r.row(vec!["(d) spanning failure".into(), v.spanning_failure.map_or("none".into(), |k| k.to_string())]);
    r.row(vec!["compression".into(), num(v.compression)]);
    for ((x, a), (_, b)) in v.alpha_dilation.0.iter().zip(&v.alpha_defect.0) {
        r.row(vec![format!("alpha {x} (dilation / defect)"), format!("{a} / {b}")]);
    }
    r.row(vec!["pure".into(), flag(out.purity.pure)]);
    r.row(vec!["passed".into(), flag(v.passed)]);
    Ok(r)
}

// ---------------------------------------------------------------------------
// norm

#[derive(Serialize)]
struct NormOutput {
    polynomial: String,
    value: f64,
    estimate: NormEstimate,
}

pub fn norm(g: Arc<Graph>, text: &str, star: bool, opts: NormOptions) -> CliResult<Report> {
    let (polynomial, estimate) = if star {
        let p = StarPolynomial::parse(g, text).map_err(|e| e.to_string())?;
        (p.to_text(), sup_norm_estimate(&p, opts))
    } else {
        let p = GraphPolynomial::parse(g, text).map_err(|e| e.to_string())?;
        (p.to_text(), sup_norm_estimate(&p, opts))
    };
    let out = NormOutput { polynomial, value: estimate.value(), estimate };
    let mut r = Report::new(&out, &["d", "dim", "n_d"], Status::Pass);
    let e = &out.estimate;
    for ((d, dim), v) in e.depths.iter().zip(&e.dims).zip(&e.estimates) {
        r.row(vec![d.to_string(), dim.to_string(), num(*v)]);
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// vn-check

pub fn vn_check(doc: &FamilyDocument, text: &str, opts: NormOptions, tol: f64) -> CliResult<Report> {
    let tuple = Tuple::from_document(doc, 1e-8).map_err(|e| e.to_string())?;
    let p = GraphPolynomial::parse(tuple.graph.clone(), text).map_err(|e| e.to_string())?;
    let report = von_neumann_check(&tuple, &p, opts, tol).map_err(|e| e.to_string())?;
    let mut r = Report::new(&report, &["polynomial", "lhs", "estimate", "d", "verdict"], verdict_status(report.verdict));
    r.row(vn_row(&report));
    Ok(r)
}

fn vn_row(rep: &VonNeumannReport) -> Vec<String> {
    vec![
        rep.polynomial.clone(),
        num(rep.lhs),
        num(rep.estimate.value()),
        rep.estimate.depths.last().map_or(String::new(), |d| d.to_string()),
        format!("{:?}", rep.verdict).to_uppercase(),
    ]
}

#[derive(Serialize)]
struct RandomCase {
    graph: String,
    #[serde(flatten)]
    report: VonNeumannReport,
}

#[derive(Serialize)]
struct RandomSummary {
    seed: u64,
    pass: usize,
    inconclusive: usize,
    fail: usize,
    cases: Vec<RandomCase>,
}

/// Seeded random `(T, p)` pairs, on the given graph or cycling through the catalog.
pub fn vn_random(graph: Option<Arc<Graph>>, count: usize, seed: u64, opts: NormOptions, tol: f64) -> CliResult<Report> {
    let graphs: Vec<(String, Arc<Graph>)> = match graph {
        Some(g) => vec![("input".into(), g)],
        None => catalog::all().into_iter().map(|(n, g)| (n.to_string(), Arc::new(g))).collect(),
    };
    let mut rng = synth::rng(seed);
    let mut cases = Vec::with_capacity(count);
    for k in 0..count {
        let (name, g) = &graphs[k % graphs.len()];
        if g.edge_count() == 0 {
            return Err(format!("graph `{name}` has no edges to build polynomials from"));
        }
        let t = synth::random_row_contraction(g.clone(), ContractionShape::default(), &mut rng);
        let mut p = random_graph_polynomial(g.clone(), 4, 5, &mut rng);
        while p.is_zero() {
            p = random_graph_polynomial(g.clone(), 4, 5, &mut rng);
        }
        let report = von_neumann_check(&t, &p, opts, tol).map_err(|e| e.to_string())?;
        cases.push(RandomCase { graph: name.clone(), report });
    }
    let tally = |v: Verdict| cases.iter().filter(|c| c.report.verdict == v).count();
    let summary = RandomSummary { seed, pass: tally(Verdict::Pass), inconclusive: tally(Verdict::Inconclusive), fail: tally(Verdict::Fail), cases };
    let status = Status::worst(summary.cases.iter().map(|c| verdict_status(c.report.verdict)));
    let mut r = Report::new(&summary, &["graph", "polynomial", "lhs", "estimate", "d", "verdict"], status);
    for c in &summary.cases {
        let mut row = vec![c.graph.clone()];
        row.extend(vn_row(&c.report));
        r.row(row);
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// poset

#[derive(Serialize)]
struct PosetOutput {
    holds: bool,
    partitions_examined: usize,
    partition: Option<Vec<Vec<String>>>,
    checks: Vec<PosetReport>,
}

/// Decides `g1 <= g2` and, when it holds, checks the norm chain on each polynomial.
/// `polys` are letter polynomials over the edges of `g1`; `None` draws `random` of them.
pub fn poset(g1: Arc<Graph>, g2: Arc<Graph>, poly: Option<&str>, random: usize, seed: u64, opts: NormOptions, tol: f64) -> CliResult<Report> {
    let order = deformation_leq(&g1, &g2);
    let letters: Vec<String> = g1.edge_ids().map(|e| g1.edge_name(e).to_string()).collect();
    let polys: Vec<LetterPolynomial> = match poly {
        Some(text) => vec![LetterPolynomial::parse(&letters, text).map_err(|e| e.to_string())?],
        None => {
            let mut rng = synth::rng(seed);
            (0..random).map(|_| random_letter_polynomial(letters.len(), 3, 4, &mut rng)).collect()
        }
    };
    let checks: Vec<PosetReport> = if order.holds {
        polys.iter().map(|p| poset_norm_check(g1.clone(), g2.clone(), p, opts, tol)).collect::<Result<_, _>>().map_err(|e| e.to_string())?
    } else {
        Vec::new()
    };
    let out = PosetOutput {
        holds: order.holds,
        partitions_examined: order.partitions_examined,
        partition: order
            .witness
            .as_ref()
            .map(|w| w.partition.iter().map(|b| b.iter().map(|x| g1.vertex_name(*x).to_string()).collect()).collect()),
        checks,
    };
    let status = if out.holds && out.checks.iter().all(|c| c.chain_holds) { Status::Pass } else { Status::Fail };
    let mut r = Report::new(&out, &["polynomial", "finer", "coarser", "bouquet", "violation", "stalled", "chain"], status);
    for c in &out.checks {
        r.row(vec![
            c.polynomial.clone(),
            num(c.finer.value()),
            num(c.coarser.value()),
            num(c.bouquet.value()),
            num(c.violation),
            flag(c.all_stalled),
            flag(c.chain_holds),
        ]);
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// cstar

#[derive(Serialize)]
struct CstarOutput {
    graph_conditions: HypothesisReport,
    coburn: HypothesisReport,
    vacuum_defect_residual: Option<f64>,
    probes: Vec<EssentialNormProbe>,
}

/// Trial vectors: the basis of levels `≤ 3` (at most 256 of them) and one mixed vector.
fn trial_vectors(basis: &FockBasis) -> Vec<SparseVector> {
    let dim = basis.dim_through(3).min(256);
    (0..dim)
        .map(|i| SparseVector::from([(i, C64::new(1.0, 0.0))]))
        .chain(std::iter::once((0..dim).map(|i| (i, C64::new((i % 5) as f64 - 2.0, (i % 3) as f64))).collect()))
        .collect()
}

/// Graph hypotheses, the Coburn-type defect condition (on `family` or the pure
/// model), and essential-norm probes of `a` (default: the sum of all edges) for `d = 1..=probe_depth`.
pub fn cstar(g: Arc<Graph>, family: Option<&FamilyDocument>, a: Option<&str>, depth: usize, probe_depth: usize, tol: f64) -> CliResult<Report> {
    let graph_conditions = szymanski_graph_conditions(&g);
    let source_free = g.vertex_ids().all(|x| !g.in_edges(x).is_empty());
    let coburn = match family {
        Some(doc) => coburn_condition(&OperatorFamily::from_document(doc).map_err(|e| e.to_string())?, depth, tol),
        None => coburn_condition(&OperatorFamily::pure_model(g.clone()), depth, tol),
    }
    .map_err(|e| e.to_string())?;
    let mut probes = Vec::new();
    if source_free && g.edge_count() > 0 {
        let basis = FockBasis::new(g.clone());
        let model = OperatorFamily::pure_model_on(basis.clone());
        let text = a.map(str::to_string).unwrap_or_else(|| g.edge_ids().map(|e| g.edge_name(e)).collect::<Vec<_>>().join(" + "));
        let p = GraphPolynomial::parse(g.clone(), &text).map_err(|e| e.to_string())?;
        let Operator::Local(op) = evaluate(&p, &model).map_err(|e| e.to_string())? else {
            return Err("pure model evaluated to a matrix".into());
        };
        let trials = trial_vectors(&basis);
        for d in 1..=probe_depth {
            probes.push(essential_norm_probe(&basis, &op, d, probe_depth, &trials).map_err(|e| e.to_string())?);
        }
    } else if a.is_some() {
        return Err("essential-norm probes need a source-free graph with edges".into());
    }
    let out = CstarOutput {
        graph_conditions,
        coburn,
        vacuum_defect_residual: family.is_none().then(|| vacuum_defect_residual(g.clone(), depth)),
        probes,
    };
    let mut r = Report::new(&out, &["check", "holds", "detail"], Status::Pass);
    let mut conditions = |section: &str, cs: &[Condition]| {
        for c in cs {
            let holds = c.holds.map_or("undecided".to_string(), flag);
            let mut detail = c.witnesses.join(" ");
            if let Some(cert) = &c.certificate {
                detail = if detail.is_empty() { cert.clone() } else { format!("{detail}; {cert}") };
            }
            r.row(vec![format!("{section}: {}", c.name), holds, detail]);
        }
    };
    conditions("graph", &out.graph_conditions.conditions);
    conditions("family", &out.coburn.conditions);
    if let Some(v) = out.vacuum_defect_residual {
        r.row(vec!["defect = vacuum projection".into(), flag(v == 0.0), format!("residual {}", num(v))]);
    }
    for p in &out.probes {
        let paths: Vec<String> = p.paths.0.iter().map(|(x, w)| format!("{x}:{w}")).collect();
        r.row(vec![format!("probe d = {}", p.depth), flag(p.exact), paths.join(" ")]);
    }
    Ok(r)
}
