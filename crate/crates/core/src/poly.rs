//! Polynomials in the generators of a graph, their evaluation on families,
//! and lower-bound estimates of their norm on the pure model.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::family::{validate_row_contraction, FamilyError, Operator, OperatorFamily, Tuple};
use crate::fock::{normalize, Column, FockBasis, GradedBasis};
use crate::graph::{catalog, deformation_leq, EdgeId, Graph, GraphError, Path};
use crate::linalg::{self, CMatrix, C64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("cannot parse term `{term}`: {message}")]
    Parse { term: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("polynomial and family are over different graphs")]
    AlphabetMismatch,
    #[error("not a row contraction: row norm {0}")]
    NotContraction(f64),
    #[error("{0} is not a deformation of {1}")]
    NotComparable(String, String),
    #[error("graph `{0}` has sinks")]
    HasSinks(String),
    #[error("polynomial uses {found} letters, graphs have {edges} edges")]
    LetterCount { found: usize, edges: usize },
}

fn same_graph(a: &Graph, b: &Graph) -> bool {
    std::ptr::eq(a, b) || a.to_text() == b.to_text()
}

// ---------------------------------------------------------------------------
// Text format

fn format_coeff(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("({},{})", z.re, z.im)
    }
}

fn parse_coeff(text: &str) -> Option<C64> {
    let t = text.trim();
    if let Some(inner) = t.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        let (re, im) = inner.split_once(',')?;
        return Some(C64::new(re.trim().parse().ok()?, im.trim().parse().ok()?));
    }
    t.parse::<f64>().ok().map(|x| C64::new(x, 0.0))
}

/// True when `cur` ends in the exponent marker of a float literal, e.g. `1.5e`.
fn in_exponent(cur: &str) -> bool {
    let t = cur.trim_start();
    match t.strip_suffix(['e', 'E']) {
        Some(mantissa) => !mantissa.is_empty() && mantissa.chars().all(|c| c.is_ascii_digit() || c == '.'),
        None => false,
    }
}

/// Splits `a + b - c` into signed terms, leaving signs inside `(re,im)` and float exponents alone.
fn split_terms(text: &str) -> Result<Vec<(f64, String)>, PolyError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut sign = 1.0;
    let mut depth = 0usize;
    for ch in text.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth = depth.checked_sub(1).ok_or_else(|| PolyError::Parse {
                    term: text.to_string(),
                    message: "unbalanced `)`".into(),
                })?;
                cur.push(ch);
            }
            '+' | '-' if depth == 0 && !in_exponent(&cur) => {
                if cur.trim().is_empty() {
                    if ch == '-' {
                        sign = -sign;
                    }
                } else {
                    out.push((sign, std::mem::take(&mut cur)));
                    sign = if ch == '-' { -1.0 } else { 1.0 };
                }
            }
            _ => cur.push(ch),
        }
    }
    if depth != 0 {
        return Err(PolyError::Parse { term: text.to_string(), message: "unbalanced `(`".into() });
    }
    if !cur.trim().is_empty() {
        out.push((sign, cur));
    } else if !out.is_empty() || sign < 0.0 {
        return Err(PolyError::Parse { term: text.to_string(), message: "dangling sign".into() });
    }
    Ok(out)
}

/// Parses `coeff * monomial`, `monomial` or a bare `coeff` (returned with `None`).
fn parse_terms<M>(text: &str, mut monomial: impl FnMut(&str) -> Result<M, PolyError>) -> Result<Vec<(C64, Option<M>)>, PolyError> {
    let mut out = Vec::new();
    for (sign, term) in split_terms(text)? {
        let t = term.trim();
        let parsed = match t.split_once('*') {
            Some((c, m)) => {
                let coeff = parse_coeff(c).ok_or_else(|| PolyError::Parse {
                    term: t.to_string(),
                    message: format!("bad coefficient `{}`", c.trim()),
                })?;
                (coeff, Some(monomial(m.trim())?))
            }
            None => match monomial(t) {
                Ok(m) => (C64::new(1.0, 0.0), Some(m)),
                Err(err) => match parse_coeff(t) {
                    Some(coeff) => (coeff, None),
                    None => return Err(err),
                },
            },
        };
        out.push((parsed.0 * sign, parsed.1));
    }
    Ok(out)
}

fn prune<K: Ord>(terms: &mut BTreeMap<K, C64>) {
    terms.retain(|_, z| *z != C64::new(0.0, 0.0));
}

// ---------------------------------------------------------------------------
// Path polynomials

/// A finite combination of paths; the vertex path `@x` stands for `P_x`.
#[derive(Debug, Clone)]
pub struct GraphPolynomial {
    graph: Arc<Graph>,
    terms: BTreeMap<Path, C64>,
}

impl PartialEq for GraphPolynomial {
    fn eq(&self, other: &Self) -> bool {
        same_graph(&self.graph, &other.graph) && self.terms == other.terms
    }
}

impl GraphPolynomial {
    pub fn zero(graph: Arc<Graph>) -> Self {
        GraphPolynomial { graph, terms: BTreeMap::new() }
    }

    /// `Σ_x P_x`.
    pub fn one(graph: Arc<Graph>) -> Self {
        let terms = graph.vertex_ids().map(|x| (Path::vertex(x), C64::new(1.0, 0.0))).collect();
        GraphPolynomial { graph, terms }
    }

    pub fn monomial(graph: Arc<Graph>, w: Path, coeff: C64) -> Self {
        let mut p = Self::zero(graph);
        p.add_term(w, coeff);
        p
    }

    pub fn from_terms(graph: Arc<Graph>, terms: impl IntoIterator<Item = (Path, C64)>) -> Self {
        let mut p = Self::zero(graph);
        for (w, z) in terms {
            p.add_term(w, z);
        }
        p
    }

    pub fn add_term(&mut self, w: Path, coeff: C64) {
        *self.terms.entry(w).or_insert(C64::new(0.0, 0.0)) += coeff;
        prune(&mut self.terms);
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn terms(&self) -> &BTreeMap<Path, C64> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Path::len).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, z) in &other.terms {
            out.add_term(w.clone(), *z);
        }
        out
    }

    pub fn scale(&self, z: C64) -> Self {
        Self::from_terms(self.graph.clone(), self.terms.iter().map(|(w, c)| (w.clone(), c * z)))
    }

    /// The product `self · other`; non-composable monomials vanish.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.graph.clone());
        for (v, a) in &self.terms {
            for (w, b) in &other.terms {
                if let Some(vw) = v.concat(&self.graph, w) {
                    out.add_term(vw, a * b);
                }
            }
        }
        out
    }

    pub fn parse(graph: Arc<Graph>, text: &str) -> Result<Self, PolyError> {
        let g = graph.clone();
        let mut p = Self::zero(graph);
        for (coeff, mono) in parse_terms(text, |m| Ok(g.parse_path(m)?))? {
            match mono {
                Some(w) => p.add_term(w, coeff),
                None => p = p.add(&Self::one(g.clone()).scale(coeff)),
            }
        }
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|(w, z)| format!("{} * {}", format_coeff(*z), self.graph.path_name(w)))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

impl fmt::Display for GraphPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Combination of monomials `v w̄`, evaluated as `v(S) w(S)*`.
#[derive(Debug, Clone)]
pub struct StarPolynomial {
    graph: Arc<Graph>,
    terms: BTreeMap<(Path, Path), C64>,
}

impl StarPolynomial {
    pub fn zero(graph: Arc<Graph>) -> Self {
        StarPolynomial { graph, terms: BTreeMap::new() }
    }

    /// Adds `coeff · v w̄`. Monomials with `s(v) ≠ s(w)` are zero and dropped.
    pub fn add_term(&mut self, v: Path, w: Path, coeff: C64) {
        if v.source() != w.source() {
            return;
        }
        *self.terms.entry((v, w)).or_insert(C64::new(0.0, 0.0)) += coeff;
        prune(&mut self.terms);
    }

    pub fn from_terms(graph: Arc<Graph>, terms: impl IntoIterator<Item = (Path, Path, C64)>) -> Self {
        let mut p = Self::zero(graph);
        for (v, w, z) in terms {
            p.add_term(v, w, z);
        }
        p
    }

    /// Embeds `Σ c_w w` as `Σ c_w w · \overline{s(w)}`.
    pub fn from_graph_polynomial(p: &GraphPolynomial) -> Self {
        Self::from_terms(p.graph.clone(), p.terms.iter().map(|(w, z)| (w.clone(), Path::vertex(w.source()), *z)))
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn terms(&self) -> &BTreeMap<(Path, Path), C64> {
        &self.terms
    }

    /// Largest `max(|v|, |w|)` over the monomials.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|(v, w)| v.len().max(w.len())).max().unwrap_or(0)
    }

    fn creation_degree(&self) -> usize {
        self.terms.keys().map(|(v, _)| v.len()).max().unwrap_or(0)
    }

    pub fn parse(graph: Arc<Graph>, text: &str) -> Result<Self, PolyError> {
        let g = graph.clone();
        let mut p = Self::zero(graph);
        let monomial = |m: &str| -> Result<(Path, Path), PolyError> {
            match m.split_once('~') {
                Some((v, w)) => Ok((g.parse_path(v)?, g.parse_path(w)?)),
                None => {
                    let v = g.parse_path(m)?;
                    let s = Path::vertex(v.source());
                    Ok((v, s))
                }
            }
        };
        for (coeff, mono) in parse_terms(text, monomial)? {
            match mono {
                Some((v, w)) => p.add_term(v, w, coeff),
                None => {
                    for x in g.vertex_ids() {
                        p.add_term(Path::vertex(x), Path::vertex(x), coeff);
                    }
                }
            }
        }
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|((v, w), z)| format!("{} * {} ~ {}", format_coeff(*z), self.graph.path_name(v), self.graph.path_name(w)))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

// ---------------------------------------------------------------------------
// Evaluation

fn path_operator(fam: &OperatorFamily, w: &Path) -> Result<Operator, PolyError> {
    if w.is_vertex() {
        return Ok(fam.vertex(w.source()).clone());
    }
    let edges = w.edges();
    let mut op = fam.edge(edges[0]).clone();
    for e in &edges[1..] {
        op = fam.edge(*e).compose(&op)?;
    }
    Ok(op)
}

/// `p(S)`: `e_k ⋯ e_1 ↦ S_{e_k} ⋯ S_{e_1}`, `@x ↦ P_x`, extended linearly.
pub fn evaluate(p: &GraphPolynomial, fam: &OperatorFamily) -> Result<Operator, PolyError> {
    if !same_graph(p.graph(), fam.graph()) {
        return Err(PolyError::AlphabetMismatch);
    }
    let mut acc = fam.identity().scale(C64::new(0.0, 0.0));
    for (w, z) in p.terms() {
        acc = acc.add(&path_operator(fam, w)?.scale(*z))?;
    }
    Ok(acc)
}

/// `p(S, S*)`: `v w̄ ↦ v(S) w(S)*`, extended linearly.
pub fn evaluate_star(p: &StarPolynomial, fam: &OperatorFamily) -> Result<Operator, PolyError> {
    if !same_graph(p.graph(), fam.graph()) {
        return Err(PolyError::AlphabetMismatch);
    }
    let mut acc = fam.identity().scale(C64::new(0.0, 0.0));
    for ((v, w), z) in p.terms() {
        let term = path_operator(fam, v)?.compose(&path_operator(fam, w)?.adjoint())?;
        acc = acc.add(&term.scale(*z))?;
    }
    Ok(acc)
}

/// `p(T)` for a matrix tuple, by direct products.
pub fn evaluate_matrix(p: &GraphPolynomial, t: &Tuple) -> Result<CMatrix, PolyError> {
    if !same_graph(p.graph(), &t.graph) {
        return Err(PolyError::AlphabetMismatch);
    }
    let mut acc = CMatrix::zeros(t.dim(), t.dim());
    for (w, z) in p.terms() {
        acc += crate::dilation::path_matrix(t, w) * *z;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Norm estimates on the pure model

/// Polynomials whose pure-model columns can be generated directly from path indices.
pub trait FockPolynomial: Sync {
    fn graph(&self) -> &Arc<Graph>;
    /// Smallest domain depth in the estimate sequence.
    fn degree(&self) -> usize;
    /// How many levels a column can climb.
    fn reach(&self) -> usize;
    /// Column `u` of the operator on the pure model.
    fn column(&self, basis: &FockBasis, u: usize) -> Column;
}

fn extend_along(basis: &FockBasis, mut i: usize, w: &Path) -> Option<usize> {
    if w.is_vertex() {
        return (basis.range(i) == w.source()).then_some(i);
    }
    for e in w.edges() {
        i = basis.left_extend(i, *e)?;
    }
    Some(i)
}

/// Index of `u'` when `ξ_u = ξ_{w u'}`.
fn strip_along(basis: &FockBasis, mut i: usize, w: &Path) -> Option<usize> {
    if w.is_vertex() {
        return (basis.range(i) == w.source()).then_some(i);
    }
    for e in w.edges().iter().rev() {
        let (lead, parent) = basis.left_strip(i)?;
        if lead != *e {
            return None;
        }
        i = parent;
    }
    Some(i)
}

impl FockPolynomial for GraphPolynomial {
    fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    fn degree(&self) -> usize {
        GraphPolynomial::degree(self)
    }

    fn reach(&self) -> usize {
        GraphPolynomial::degree(self)
    }

    fn column(&self, basis: &FockBasis, u: usize) -> Column {
        normalize(self.terms.iter().filter_map(|(w, z)| extend_along(basis, u, w).map(|i| (i, *z))).collect())
    }
}

impl FockPolynomial for StarPolynomial {
    fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    fn degree(&self) -> usize {
        StarPolynomial::degree(self)
    }

    fn reach(&self) -> usize {
        self.creation_degree()
    }

    fn column(&self, basis: &FockBasis, u: usize) -> Column {
        normalize(
            self.terms
                .iter()
                .filter_map(|((v, w), z)| {
                    let i = strip_along(basis, u, w)?;
                    extend_along(basis, i, v).map(|j| (j, *z))
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormOptions {
    /// Largest domain depth; `None` means `degree + 12`.
    pub d_max: Option<usize>,
    pub stall_tol: f64,
    /// Largest codomain dimension attempted.
    pub budget: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { d_max: None, stall_tol: 1e-10, budget: 1 << 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stalled,
    DepthLimit,
    Budget,
    /// The caller asked to stop.
    Target,
    /// The pure model is finite-dimensional and fully covered.
    Exhausted,
}

/// The nondecreasing sequence `n_d` of compressed norms.
#[derive(Debug, Clone, Serialize)]
pub struct NormEstimate {
    pub depths: Vec<usize>,
    pub estimates: Vec<f64>,
    /// Domain dimension at each depth.
    pub dims: Vec<usize>,
    pub stalled: bool,
    pub stop: StopReason,
}

impl NormEstimate {
    /// The last (largest) estimate.
    pub fn value(&self) -> f64 {
        self.estimates.last().copied().unwrap_or(0.0)
    }
}

/// Euclidean norm with the squares summed in increasing order, so that
/// permuted vectors get bit-identical norms.
fn sorted_norm(v: &[C64]) -> f64 {
    let mut sq: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
    sq.sort_by(f64::total_cmp);
    sq.iter().sum::<f64>().sqrt()
}

fn apply_cols(cols: &[Column], rows: usize, x: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); rows];
    for (col, xj) in cols.iter().zip(x) {
        if *xj == C64::new(0.0, 0.0) {
            continue;
        }
        for (i, z) in col {
            y[*i] += z * xj;
        }
    }
    y
}

fn apply_cols_adjoint(cols: &[Column], y: &[C64]) -> Vec<C64> {
    if cols.len() < PARALLEL_LEN {
        return cols.iter().map(|col| col.iter().map(|(i, z)| z.conj() * y[*i]).sum()).collect();
    }
    cols.par_iter().map(|col| col.iter().map(|(i, z)| z.conj() * y[*i]).sum()).collect()
}

fn rayleigh(cols: &[Column], rows: usize, x: &[C64]) -> f64 {
    let nx = sorted_norm(x);
    if nx == 0.0 {
        return 0.0;
    }
    sorted_norm(&apply_cols(cols, rows, x)) / nx
}

const DENSE_LIMIT: usize = 400;
const LANCZOS_STEPS: usize = 20;
const LANCZOS_RESTARTS: usize = 60;

/// `M* M` for the sparse matrix with the given columns.
fn gram(cols: &[Column], rows: usize) -> CMatrix {
    let n = cols.len();
    let mut by_row: Vec<Vec<(usize, C64)>> = vec![Vec::new(); rows];
    for (j, col) in cols.iter().enumerate() {
        for (i, z) in col {
            by_row[*i].push((j, *z));
        }
    }
    let mut g = CMatrix::zeros(n, n);
    for entries in &by_row {
        for (a, za) in entries {
            for (b, zb) in entries {
                g[(*a, *b)] += za.conj() * zb;
            }
        }
    }
    g
}

/// Top right singular vector of the sparse matrix with the given columns.
fn top_right_vector(cols: &[Column], rows: usize, start: &[C64]) -> Vec<C64> {
    let n = cols.len();
    if n <= DENSE_LIMIT {
        let (_, vecs) = linalg::hermitian_eigen(&gram(cols, rows));
        return vecs.column(n - 1).iter().copied().collect();
    }
    let mut x = start.to_vec();
    let mut last = 0.0;
    for _ in 0..LANCZOS_RESTARTS {
        let (theta, ritz, residual) = lanczos(cols, rows, &x, LANCZOS_STEPS.min(n));
        x = ritz;
        if residual <= 1e-10 * theta.max(1e-300) || (theta - last).abs() <= 1e-15 * theta {
            break;
        }
        last = theta;
    }
    x
}

/// Below this length vector kernels run sequentially.
const PARALLEL_LEN: usize = 1 << 15;

fn dot(a: &[C64], b: &[C64]) -> C64 {
    if a.len() < PARALLEL_LEN {
        return a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    }
    a.par_iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    if y.len() < PARALLEL_LEN {
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
        return;
    }
    y.par_iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Lanczos on `M* M` with full reorthogonalization; returns the top Ritz pair and its residual.
fn lanczos(cols: &[Column], rows: usize, start: &[C64], steps: usize) -> (f64, Vec<C64>, f64) {
    let n = start.len();
    let norm0 = dot(start, start).re.sqrt();
    let mut q: Vec<Vec<C64>> = vec![start.iter().map(|z| z / norm0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut theta = 0.0;
    let mut s = nalgebra::DVector::<f64>::zeros(1);
    let mut residual = f64::INFINITY;
    for k in 0..steps {
        let mut w = apply_cols_adjoint(cols, &apply_cols(cols, rows, &q[k]));
        alpha.push(dot(&q[k], &w).re);
        for _ in 0..2 {
            for qi in &q {
                let h = dot(qi, &w);
                axpy(&mut w, -h, qi);
            }
        }
        let b = dot(&w, &w).re.sqrt();
        let m = alpha.len();
        let last = k + 1 == steps || q.len() == n || b <= 1e-14 * alpha.iter().fold(0.0, |a: f64, x| a.max(x.abs()));
        if !m.is_multiple_of(4) && !last {
            beta.push(b);
            q.push(w.iter().map(|z| z / b).collect());
            continue;
        }
        let mut tri = nalgebra::DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            tri[(i, i)] = alpha[i];
            if i + 1 < m {
                tri[(i, i + 1)] = beta[i];
                tri[(i + 1, i)] = beta[i];
            }
        }
        let eig = tri.symmetric_eigen();
        let top = eig.eigenvalues.imax();
        theta = eig.eigenvalues[top];
        s = eig.eigenvectors.column(top).into_owned();
        residual = b * s[m - 1].abs();
        if residual <= 1e-14 * theta.max(1e-300) || b <= 1e-14 * theta.max(1e-300) || k + 1 == steps || q.len() == n {
            break;
        }
        beta.push(b);
        q.push(w.iter().map(|z| z / b).collect());
    }
    let mut ritz = vec![C64::new(0.0, 0.0); n];
    for (i, qi) in q.iter().enumerate().take(s.len()) {
        axpy(&mut ritz, C64::new(s[i], 0.0), qi);
    }
    (theta, ritz, residual)
}

/// Estimates `‖p(L_G)‖` from below by compressing the pure model to domain
/// levels `≤ d` (codomain levels `≤ d + reach`), for `d = degree ..= d_max`.
pub fn sup_norm_estimate<P: FockPolynomial>(p: &P, opts: NormOptions) -> NormEstimate {
    sup_norm_estimate_until(p, opts, |_| false)
}

/// As [`sup_norm_estimate`], stopping early once `stop(n_d)` returns true.
pub fn sup_norm_estimate_until<P: FockPolynomial>(p: &P, opts: NormOptions, stop: impl Fn(f64) -> bool) -> NormEstimate {
    let basis = FockBasis::new(p.graph().clone());
    let deg = p.degree();
    let reach = p.reach();
    let d_max = opts.d_max.unwrap_or(deg + 12).max(deg);
    let mut rng = crate::synth::rng(0x5eed);
    let mut out = NormEstimate { depths: Vec::new(), estimates: Vec::new(), dims: Vec::new(), stalled: false, stop: StopReason::DepthLimit };
    let mut cols: Vec<Column> = Vec::new();
    let mut x: Vec<C64> = Vec::new();
    let mut small_steps = 0;
    let finite = basis.top_level();
    for d in deg..=d_max {
        if basis.count_through(d + reach) > opts.budget as u128 {
            out.stop = StopReason::Budget;
            break;
        }
        let rows = basis.dim_through(d + reach);
        let n = basis.dim_through(d);
        let start = cols.len();
        cols.par_extend((start..n).into_par_iter().map(|u| p.column(&basis, u)));
        x.extend((start..n).map(|_| crate::synth::gaussian(&mut rng) * 1e-3));
        if x.iter().all(|z| *z == C64::new(0.0, 0.0)) {
            x.iter_mut().for_each(|z| *z = C64::new(1.0, 0.0));
        }
        x = top_right_vector(&cols, rows, &x);
        let prev = out.estimates.last().copied();
        let nd = rayleigh(&cols, rows, &x).max(prev.unwrap_or(0.0));
        out.depths.push(d);
        out.estimates.push(nd);
        out.dims.push(n);
        if let Some(prev) = prev {
            small_steps = if nd - prev <= opts.stall_tol { small_steps + 1 } else { 0 };
        }
        if small_steps >= 2 {
            out.stalled = true;
            out.stop = StopReason::Stalled;
            break;
        }
        if stop(nd) {
            out.stop = StopReason::Target;
            break;
        }
        if finite.is_some_and(|t| d >= t) {
            out.stalled = true;
            out.stop = StopReason::Exhausted;
            break;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Harnesses

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VonNeumannReport {
    pub polynomial: String,
    /// `‖p(T)‖`.
    pub lhs: f64,
    pub estimate: NormEstimate,
    pub verdict: Verdict,
}

/// Checks `‖p(T)‖ ≤ ‖p(L_G)‖` against lower bounds for the right side.
///
/// PASS as soon as some `n_d` reaches `lhs - tol`; FAIL only when the
/// sequence has stalled below `lhs - tol`; INCONCLUSIVE otherwise.
pub fn von_neumann_check(t: &Tuple, p: &GraphPolynomial, opts: NormOptions, tol: f64) -> Result<VonNeumannReport, PolyError> {
    let rc = validate_row_contraction(&t.ts, tol);
    if !rc.holds {
        return Err(PolyError::NotContraction(rc.row_norm));
    }
    let lhs = linalg::op_norm(&evaluate_matrix(p, t)?);
    let estimate = sup_norm_estimate_until(p, opts, |nd| lhs <= nd + tol);
    let verdict = if lhs <= estimate.value() + tol {
        Verdict::Pass
    } else if estimate.stalled {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Ok(VonNeumannReport { polynomial: p.to_text(), lhs, estimate, verdict })
}

/// A polynomial in noncommuting letters `0..n`; words are stored in application order.
#[derive(Debug, Clone, PartialEq)]
pub struct LetterPolynomial {
    pub letters: usize,
    pub terms: BTreeMap<Vec<usize>, C64>,
}

impl LetterPolynomial {
    pub fn new(letters: usize) -> Self {
        LetterPolynomial { letters, terms: BTreeMap::new() }
    }

    pub fn add_term(&mut self, word: Vec<usize>, coeff: C64) {
        assert!(word.iter().all(|l| *l < self.letters), "letter out of range");
        *self.terms.entry(word).or_insert(C64::new(0.0, 0.0)) += coeff;
        prune(&mut self.terms);
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    /// Parses with the given letter names; `c.b.a` applies `a` first, a bare coefficient is the empty word.
    pub fn parse(names: &[String], text: &str) -> Result<Self, PolyError> {
        let mut p = Self::new(names.len());
        let word = |m: &str| -> Result<Vec<usize>, PolyError> {
            m.split('.')
                .rev()
                .map(|name| {
                    names.iter().position(|n| n == name.trim()).ok_or_else(|| PolyError::Parse {
                        term: m.to_string(),
                        message: format!("unknown letter `{}`", name.trim()),
                    })
                })
                .collect()
        };
        for (coeff, w) in parse_terms(text, word)? {
            p.add_term(w.unwrap_or_default(), coeff);
        }
        Ok(p)
    }

    pub fn to_text(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|(w, z)| {
                if w.is_empty() {
                    format_coeff(*z)
                } else {
                    let word: Vec<&str> = w.iter().rev().map(|l| names[*l].as_str()).collect();
                    format!("{} * {}", format_coeff(*z), word.join("."))
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }

    /// Substitutes letter `i ↦ edges[i]`; words that are not paths vanish and
    /// the empty word becomes `Σ_x P_x`.
    pub fn on_graph(&self, graph: Arc<Graph>, edges: &[EdgeId]) -> GraphPolynomial {
        let mut p = GraphPolynomial::zero(graph.clone());
        for (w, z) in &self.terms {
            if w.is_empty() {
                p = p.add(&GraphPolynomial::one(graph.clone()).scale(*z));
            } else if let Some(path) = Path::from_edges(&graph, w.iter().map(|l| edges[*l]).collect()) {
                p.add_term(path, *z);
            }
        }
        p
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PosetReport {
    pub polynomial: String,
    /// Blocks of the first graph's vertices merged by the witness.
    pub partition: Vec<Vec<String>>,
    pub finer: NormEstimate,
    pub coarser: NormEstimate,
    pub bouquet: NormEstimate,
    /// `max(n(G1) - n(G2), n(G2) - n(C_n), 0)` at the final estimates.
    pub violation: f64,
    pub chain_holds: bool,
    /// True when all three sequences stalled.
    pub all_stalled: bool,
}

/// Checks `‖p‖_{G1} ≤ ‖p‖_{G2} ≤ ‖p‖_{C_n}` for a deformation `G1 ≤ G2`.
///
/// Letter `i` is edge `i` of `g1`, its image under the witness in `g2`, and
/// the `i`-th loop of the bouquet `C_n`.
pub fn poset_norm_check(g1: Arc<Graph>, g2: Arc<Graph>, p: &LetterPolynomial, opts: NormOptions, tol: f64) -> Result<PosetReport, PolyError> {
    for g in [&g1, &g2] {
        if g.has_sinks() {
            return Err(PolyError::HasSinks(g.to_text().lines().next().unwrap_or("").to_string()));
        }
    }
    if p.letters != g1.edge_count() {
        return Err(PolyError::LetterCount { found: p.letters, edges: g1.edge_count() });
    }
    let order = deformation_leq(&g1, &g2);
    let witness = order
        .witness
        .ok_or_else(|| PolyError::NotComparable(graph_label(&g1), graph_label(&g2)))?;
    let n = g1.edge_count();
    let bouquet = Arc::new(catalog::cn(n));
    let finer_edges: Vec<EdgeId> = g1.edge_ids().collect();
    let coarser_edges: Vec<EdgeId> = witness.edge_map().to_vec();
    let bouquet_edges: Vec<EdgeId> = bouquet.edge_ids().collect();
    let estimates: Vec<NormEstimate> = [(g1.clone(), finer_edges), (g2.clone(), coarser_edges), (bouquet, bouquet_edges)]
        .into_par_iter()
        .map(|(g, edges)| sup_norm_estimate(&p.on_graph(g, &edges), opts))
        .collect();
    let [finer, coarser, bouquet]: [NormEstimate; 3] = estimates.try_into().expect("three estimates");
    let violation = (finer.value() - coarser.value()).max(coarser.value() - bouquet.value()).max(0.0);
    let names: Vec<String> = g1.edge_ids().map(|e| g1.edge_name(e).to_string()).collect();
    Ok(PosetReport {
        polynomial: p.to_text(&names),
        partition: witness
            .partition
            .iter()
            .map(|b| b.iter().map(|v| g1.vertex_name(*v).to_string()).collect())
            .collect(),
        all_stalled: finer.stalled && coarser.stalled && bouquet.stalled,
        chain_holds: violation <= tol,
        violation,
        finer,
        coarser,
        bouquet,
    })
}

fn graph_label(g: &Graph) -> String {
    let names: Vec<&str> = g.vertex_ids().map(|v| g.vertex_name(v)).collect();
    format!("graph({}; {} edges)", names.join(","), g.edge_count())
}

// ---------------------------------------------------------------------------
// Random polynomials

/// A random word of length `len` along the graph, by a uniform walk; `None` if it hits a sink.
fn random_path(g: &Graph, len: usize, rng: &mut impl Rng) -> Option<Path> {
    let x = crate::graph::VertexId(rng.random_range(0..g.vertex_count()));
    let mut w = Path::vertex(x);
    for _ in 0..len {
        let out = g.out_edges(w.range(g));
        if out.is_empty() {
            return None;
        }
        let e = out[rng.random_range(0..out.len())];
        w = w.prepend(g, e).expect("out edge composes");
    }
    Some(w)
}

/// Up to `terms` random paths of length `≤ max_degree` with Gaussian coefficients.
pub fn random_graph_polynomial(graph: Arc<Graph>, max_degree: usize, terms: usize, rng: &mut impl Rng) -> GraphPolynomial {
    let mut p = GraphPolynomial::zero(graph.clone());
    for _ in 0..terms {
        let len = rng.random_range(0..=max_degree);
        if let Some(w) = random_path(&graph, len, rng) {
            p.add_term(w, crate::synth::gaussian(rng));
        }
    }
    p
}

pub fn random_letter_polynomial(letters: usize, max_degree: usize, terms: usize, rng: &mut impl Rng) -> LetterPolynomial {
    let mut p = LetterPolynomial::new(letters);
    for _ in 0..terms {
        let len = rng.random_range(0..=max_degree);
        let word = (0..len).map(|_| rng.random_range(0..letters)).collect();
        p.add_term(word, crate::synth::gaussian(rng));
    }
    p
}
