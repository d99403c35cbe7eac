//! Gates as continuous-time quantum walks: all drive harmonics are applied
//! at once under one envelope and the evolution in the rotating frame is
//! `exp(−iΩ̂τ)`, with `Ω̂` the adjacency matrix of Rabi amplitudes over the
//! graph of dressed states.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::BareLabel;
use crate::envelope::{Envelope, GAUSSIAN_CUTOFF};
use crate::error::{Error, Result};
use crate::gates::CMatrix;
use crate::schedule::{wrap_phase, DriveTerm, RenderedDrive};
use crate::spectroscopy::Transition;

/// A distinguishable drive amplitude: transitions of one QS whose
/// spectators hold `tier − 1` auxiliary excitations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RabiSymbol {
    pub qs: usize,
    pub tier: usize,
}

impl RabiSymbol {
    pub fn new(qs: usize, tier: usize) -> Self {
        RabiSymbol { qs, tier }
    }
}

fn roman(t: usize) -> String {
    match t {
        1 => "i".into(),
        2 => "ii".into(),
        3 => "iii".into(),
        4 => "iv".into(),
        5 => "v".into(),
        t => t.to_string(),
    }
}

impl fmt::Display for RabiSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Omega[{}]_{}", self.qs + 1, roman(self.tier))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WalkEdge {
    /// Node with the addressed QS in the active level.
    pub lower: usize,
    /// Node with the addressed QS in the auxiliary level.
    pub upper: usize,
    pub symbol: RabiSymbol,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WalkGraph {
    pub n: usize,
    pub active_level: usize,
    pub aux_level: usize,
    /// Physical level of every QS, one entry per node.
    pub nodes: Vec<Vec<usize>>,
    pub edges: Vec<WalkEdge>,
    /// Node indices of each connected component.
    pub components: Vec<Vec<usize>>,
    /// Computational node of each component.
    pub anchors: Vec<usize>,
}

impl WalkGraph {
    pub fn component_sizes(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.len()).collect()
    }

    pub fn label(&self, node: usize) -> BareLabel {
        BareLabel::new(self.nodes[node].clone(), 0)
    }

    /// Component anchored at computational state `x` (binary order).
    pub fn component_of_state(&self, x: usize) -> usize {
        let levels: Vec<usize> = (0..self.n).map(|k| x >> (self.n - 1 - k) & 1).collect();
        self.anchors
            .iter()
            .position(|&a| self.nodes[a] == levels)
            .expect("every computational state anchors a component")
    }

    pub fn symbols(&self) -> Vec<RabiSymbol> {
        let mut s: Vec<RabiSymbol> = self.edges.iter().map(|e| e.symbol).collect();
        s.sort();
        s.dedup();
        s
    }
}

/// Graph reached from the computational states by the activated symbols.
/// An edge lifts QS `m` from `active_level` to `aux_level`; its tier is one
/// plus the number of other QSs already in the auxiliary level.
pub fn build_walk_graph(activated: &[RabiSymbol], n: usize, active_level: usize, aux_level: usize) -> Result<WalkGraph> {
    if n == 0 || n > 16 {
        return Err(Error::Design(format!("{n} qubit systems are outside the supported range")));
    }
    if active_level > 1 || aux_level < 2 {
        return Err(Error::Design("active level must be 0 or 1 and the auxiliary level ≥ 2".into()));
    }
    for s in activated {
        if s.qs >= n || s.tier == 0 || s.tier > n {
            return Err(Error::Design(format!("symbol {s} does not exist for {n} qubit systems")));
        }
    }
    let mut nodes: Vec<Vec<usize>> = Vec::new();
    let mut index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut edges = Vec::new();
    let mut components = Vec::new();
    let mut anchors = Vec::new();
    for x in 0..1usize << n {
        let start: Vec<usize> = (0..n).map(|k| x >> (n - 1 - k) & 1).collect();
        let anchor = nodes.len();
        index.insert(start.clone(), anchor);
        nodes.push(start);
        let mut comp = vec![anchor];
        let mut queue = VecDeque::from([anchor]);
        while let Some(u) = queue.pop_front() {
            let state = nodes[u].clone();
            for m in 0..n {
                let excited = (0..n).filter(|&q| q != m && state[q] == aux_level).count();
                let symbol = RabiSymbol::new(m, excited + 1);
                if !activated.contains(&symbol) {
                    continue;
                }
                let mut next = state.clone();
                let going_up = if state[m] == active_level {
                    next[m] = aux_level;
                    true
                } else if state[m] == aux_level {
                    next[m] = active_level;
                    false
                } else {
                    continue;
                };
                let v = match index.get(&next) {
                    Some(&v) => v,
                    None => {
                        let v = nodes.len();
                        index.insert(next.clone(), v);
                        nodes.push(next);
                        comp.push(v);
                        queue.push_back(v);
                        v
                    }
                };
                if going_up {
                    edges.push(WalkEdge { lower: u, upper: v, symbol });
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
        anchors.push(anchor);
    }
    edges.sort_by_key(|e| (e.lower, e.upper));
    edges.dedup_by_key(|e| (e.lower, e.upper));
    Ok(WalkGraph {
        n,
        active_level,
        aux_level,
        nodes,
        edges,
        components,
        anchors,
    })
}

/// Real amplitude per symbol, in units of `1/τ`.
pub type AmplitudeTable = BTreeMap<RabiSymbol, f64>;

/// Ω̂ over all graph nodes.
pub fn adjacency(graph: &WalkGraph, amplitudes: &AmplitudeTable) -> Result<CMatrix> {
    let dim = graph.nodes.len();
    let mut m = CMatrix::zeros(dim, dim);
    for e in &graph.edges {
        let w = *amplitudes
            .get(&e.symbol)
            .ok_or_else(|| Error::Design(format!("no amplitude for {}", e.symbol)))?;
        m[(e.lower, e.upper)] = Complex64::new(w, 0.0);
        m[(e.upper, e.lower)] = Complex64::new(w, 0.0);
    }
    Ok(m)
}

/// Collect `(symbol, amplitude)` pairs into a table; a symbol listed twice
/// with different amplitudes cannot be realized because its transitions are
/// spectrally indistinguishable.
pub fn amplitude_table(pairs: &[(RabiSymbol, f64)]) -> Result<AmplitudeTable> {
    let mut t = AmplitudeTable::new();
    for &(s, w) in pairs {
        if let Some(&old) = t.get(&s) {
            if old != w {
                return Err(Error::Design(format!(
                    "{s} is assigned both {old} and {w}; its transitions cannot be driven independently"
                )));
            }
        }
        t.insert(s, w);
    }
    Ok(t)
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && (m - m.adjoint()).iter().all(|z| z.norm() <= tol)
}

/// `exp(−iΩ̂τ)` by eigendecomposition.
pub fn walk_unitary(omega: &CMatrix, tau: f64) -> Result<CMatrix> {
    let scale = omega.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    if !is_hermitian(omega, 1e-12 * scale) {
        return Err(Error::Domain("adjacency matrix is not Hermitian".into()));
    }
    if omega.nrows() == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(omega.clone());
    let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -l * tau)));
    Ok(&eig.eigenvectors * phases * eig.eigenvectors.adjoint())
}

/// Rows/columns of the computational anchors of `u`, in binary order.
pub fn computational_block(graph: &WalkGraph, u: &CMatrix) -> CMatrix {
    let dim = 1usize << graph.n;
    let idx: Vec<usize> = (0..dim).map(|x| graph.anchors[graph.component_of_state(x)]).collect();
    CMatrix::from_fn(dim, dim, |r, c| u[(idx[r], idx[c])])
}

/// `{−Ω₊, −Ω₋, 0, Ω₋, Ω₊}` of the 5-state chain with couplings
/// `(ω_α, ω_β, ω_δ, ω_γ)` in that order along the chain.
pub fn chain_eigenfrequencies(a: f64, b: f64, d: f64, g: f64) -> [f64; 5] {
    let (a2, b2, d2, g2) = (a * a, b * b, d * d, g * g);
    let r2 = a2 + b2 + d2 + g2;
    let p = a2 * d2 + b2 * g2 + a2 * g2;
    let chi = (r2 * r2 - 4.0 * p).max(0.0).sqrt();
    let plus = ((r2 + chi) / 2.0).sqrt();
    let minus = ((r2 - chi) / 2.0).max(0.0).sqrt();
    [-plus, -minus, 0.0, minus, plus]
}

/// Unitary taking the balloon basis `[000, e00, ee0, e0e, eee]` to the
/// chain basis `[000, e00, S, eee, A]` with `S, A = (ee0 ± e0e)/√2`,
/// and the transformed adjacency matrix.
pub fn balloon_to_chain(balloon: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    if balloon.shape() != (5, 5) {
        return Err(Error::Domain("balloon adjacency must be 5×5".into()));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let r = |v: f64| Complex64::new(v, 0.0);
    #[rustfmt::skip]
    let t = CMatrix::from_row_slice(5, 5, &[
        r(1.0), r(0.0), r(0.0), r(0.0), r(0.0),
        r(0.0), r(1.0), r(0.0), r(0.0), r(0.0),
        r(0.0), r(0.0), r(h),   r(h),   r(0.0),
        r(0.0), r(0.0), r(0.0), r(0.0), r(1.0),
        r(0.0), r(0.0), r(h),   r(-h),  r(0.0),
    ]);
    let chain = &t * balloon * t.adjoint();
    Ok((t, chain))
}

/// A walk gate: graph, amplitudes (units of `1/τ`) and the envelope area.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WalkDesign {
    pub graph: WalkGraph,
    pub amplitudes: Vec<(RabiSymbol, f64)>,
    pub tau: f64,
    /// Computational states carrying phase π in the rotating frame.
    pub flipped_states: Vec<usize>,
    /// Qubits to relabel with a classically tracked X to present the gate
    /// as a standard multi-controlled Z on `|1…1>`.
    pub x_frame: Vec<usize>,
}

impl WalkDesign {
    pub fn table(&self) -> AmplitudeTable {
        self.amplitudes.iter().copied().collect()
    }

    pub fn adjacency(&self) -> Result<CMatrix> {
        adjacency(&self.graph, &self.table())
    }

    pub fn unitary(&self) -> Result<CMatrix> {
        walk_unitary(&self.adjacency()?, self.tau)
    }

    pub fn computational_unitary(&self) -> Result<CMatrix> {
        Ok(computational_block(&self.graph, &self.unitary()?))
    }
}

/// The symbols activated by the three-qubit CCZ walk.
pub fn ccz_symbols() -> [RabiSymbol; 5] {
    [
        RabiSymbol::new(0, 1),
        RabiSymbol::new(1, 2),
        RabiSymbol::new(2, 2),
        RabiSymbol::new(1, 3),
        RabiSymbol::new(2, 3),
    ]
}

/// Analytic CCZ walk on three QSs driven on `|0> <-> |e0>`: phase π on
/// `|011>`, identity on the other computational states.
pub fn design_ccz(tau: f64) -> Result<WalkDesign> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("envelope area τ = {tau} must be positive")));
    }
    let graph = build_walk_graph(&ccz_symbols(), 3, 0, 2)?;
    let s17 = 17f64.sqrt();
    let [s1, s2ii, s3ii, s2iii, s3iii] = ccz_symbols();
    let amplitudes = vec![
        (s1, PI / tau),
        (s2ii, 3f64.sqrt() * PI / tau),
        (s3ii, 3f64.sqrt() * PI / tau),
        (s2iii, (3.0 + s17) * PI / (2.0 * tau)),
        (s3iii, (3.0 - s17) * PI / (2.0 * tau)),
    ];
    Ok(WalkDesign {
        graph,
        amplitudes,
        tau,
        flipped_states: vec![0b011],
        x_frame: vec![0],
    })
}

/// Options for [`solve_return_conditions`].
#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Largest eigenphase index `j` in `λτ = πj`.
    pub max_index: usize,
    pub fixed: Vec<(RabiSymbol, f64)>,
    /// Pairs forced to share one amplitude.
    pub ties: Vec<(RabiSymbol, RabiSymbol)>,
    /// Random starts per index assignment.
    pub starts: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Restrict a component to one index tuple.
    pub indices: BTreeMap<usize, Vec<usize>>,
    /// Upper bound on the number of index assignments tried.
    pub max_assignments: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_index: 6,
            fixed: Vec::new(),
            ties: Vec::new(),
            starts: 6,
            seed: 7,
            tolerance: 1e-10,
            indices: BTreeMap::new(),
            max_assignments: 20_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReturnSolution {
    pub amplitudes: Vec<(RabiSymbol, f64)>,
    /// Eigenphase indices per constrained component.
    pub indices: Vec<(usize, Vec<usize>)>,
    pub residual: f64,
}

struct Problem<'a> {
    graph: &'a WalkGraph,
    tau: f64,
    /// Unknown index of every symbol, or its fixed value.
    slot: BTreeMap<RabiSymbol, std::result::Result<usize, f64>>,
    unknowns: usize,
    /// (component, number of positive eigenvalues, target phase)
    conditions: Vec<(usize, usize, f64)>,
}

impl Problem<'_> {
    fn amplitudes(&self, x: &[f64]) -> AmplitudeTable {
        self.slot
            .iter()
            .map(|(&s, v)| (s, match v {
                Ok(i) => x[*i],
                Err(w) => *w,
            }))
            .collect()
    }

    fn component_matrix(&self, comp: usize, table: &AmplitudeTable) -> (DMatrix<f64>, Vec<(usize, usize, RabiSymbol)>) {
        let nodes = &self.graph.components[comp];
        let pos: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut m = DMatrix::zeros(nodes.len(), nodes.len());
        let mut edges = Vec::new();
        for e in &self.graph.edges {
            if let (Some(&i), Some(&j)) = (pos.get(&e.lower), pos.get(&e.upper)) {
                let w = table[&e.symbol];
                m[(i, j)] = w;
                m[(j, i)] = w;
                edges.push((i, j, e.symbol));
            }
        }
        (m, edges)
    }

    /// Residuals `λ_k τ − π j_k` and their Jacobian.
    fn evaluate(&self, x: &[f64], indices: &[Vec<usize>]) -> (Vec<f64>, DMatrix<f64>) {
        let table = self.amplitudes(x);
        let rows: usize = self.conditions.iter().map(|c| c.1).sum();
        let mut r = Vec::with_capacity(rows);
        let mut jac = DMatrix::zeros(rows, self.unknowns);
        let mut row = 0;
        for ((comp, npos, _), js) in self.conditions.iter().zip(indices) {
            let (m, edges) = self.component_matrix(*comp, &table);
            let size = m.nrows();
            let eig = SymmetricEigen::new(m);
            let mut order: Vec<usize> = (0..size).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let positive = &order[size - npos..];
            for (k, &col) in positive.iter().enumerate() {
                let lambda = eig.eigenvalues[col];
                r.push(lambda * self.tau - PI * js[k] as f64);
                let v = eig.eigenvectors.column(col);
                for &(i, j, s) in &edges {
                    if let Ok(u) = self.slot[&s] {
                        jac[(row, u)] += 2.0 * v[i] * v[j] * self.tau;
                    }
                }
                row += 1;
            }
        }
        (r, jac)
    }

    fn levenberg_marquardt(&self, mut x: Vec<f64>, indices: &[Vec<usize>], tol: f64) -> Option<(Vec<f64>, f64)> {
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
        let (mut r, mut jac) = self.evaluate(&x, indices);
        let mut cost = norm(&r);
        let mut mu = 1e-3;
        for _ in 0..300 {
            if cost.sqrt() < tol {
                break;
            }
            let jt = jac.transpose();
            let jtj = &jt * &jac;
            let g = &jt * nalgebra::DVector::from_column_slice(&r);
            let mut improved = false;
            for _ in 0..30 {
                let mut a = jtj.clone();
                for d in 0..a.nrows() {
                    a[(d, d)] += mu * (1.0 + jtj[(d, d)]);
                }
                let Some(step) = a.lu().solve(&(-&g)) else {
                    mu *= 10.0;
                    continue;
                };
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let (tr, tj) = self.evaluate(&trial, indices);
                let tc = norm(&tr);
                if tc < cost {
                    x = trial;
                    r = tr;
                    jac = tj;
                    cost = tc;
                    mu = (mu / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        let res = cost.sqrt();
        (res < tol).then_some((x, res))
    }
}

/// Amplitudes for which every constrained component returns to its anchor
/// with the target phase (0 or π) after the walk. Each positive eigenvalue
/// of a component must satisfy `λτ = πj` with `j` even (phase 0) or odd
/// (phase π); integer tuples up to `max_index` are enumerated and the
/// resulting systems solved by Levenberg–Marquardt from seeded starts.
pub fn solve_return_conditions(
    graph: &WalkGraph,
    tau: f64,
    targets: &[(usize, f64)],
    options: &SolveOptions,
) -> Result<Vec<ReturnSolution>> {
    if !(tau > 0.0) {
        return Err(Error::Domain("τ must be positive".into()));
    }
    let symbols = graph.symbols();
    let fixed: BTreeMap<RabiSymbol, f64> = options.fixed.iter().copied().collect();
    let mut slot = BTreeMap::new();
    let mut unknowns = 0;
    for &s in &symbols {
        if let Some(&w) = fixed.get(&s) {
            slot.insert(s, Err(w));
        }
    }
    for &(a, b) in &options.ties {
        let known = slot.get(&a).or_else(|| slot.get(&b)).cloned();
        let v = known.unwrap_or_else(|| {
            unknowns += 1;
            Ok(unknowns - 1)
        });
        slot.insert(a, v.clone());
        slot.insert(b, v);
    }
    for &s in &symbols {
        slot.entry(s).or_insert_with(|| {
            unknowns += 1;
            Ok(unknowns - 1)
        });
    }

    let mut conditions = Vec::new();
    for &(comp, phase) in targets {
        if comp >= graph.components.len() {
            return Err(Error::Design(format!("component {comp} does not exist")));
        }
        let parity = if wrap_phase(phase).abs() < 1e-12 {
            0
        } else if (wrap_phase(phase) - PI).abs() < 1e-12 {
            1
        } else {
            return Err(Error::Design("return phases other than 0 and π need complex amplitudes".into()));
        };
        let nodes = &graph.components[comp];
        let even = nodes
            .iter()
            .filter(|&&v| graph.nodes[v].iter().filter(|&&l| l == graph.aux_level).count() % 2 == 0)
            .count();
        let npos = even.min(nodes.len() - even);
        if npos == 0 {
            if parity == 1 {
                return Err(Error::NoSolution {
                    max_index: options.max_index,
                    detail: format!("component {comp} is a single state and cannot acquire phase π"),
                });
            }
            continue;
        }
        conditions.push((comp, npos, parity as f64));
    }
    let problem = Problem {
        graph,
        tau,
        slot,
        unknowns,
        conditions,
    };

    // integer tuples per component
    let per_comp: Vec<Vec<Vec<usize>>> = problem
        .conditions
        .iter()
        .map(|&(comp, npos, parity)| {
            if let Some(js) = options.indices.get(&comp) {
                return vec![js.clone()];
            }
            let allowed: Vec<usize> = (1..=options.max_index)
                .filter(|j| j % 2 == parity as usize)
                .collect();
            increasing_tuples(&allowed, npos)
        })
        .collect();
    let mut assignments: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for choices in &per_comp {
        let mut next = Vec::new();
        for a in &assignments {
            for c in choices {
                let mut b = a.clone();
                b.push(c.clone());
                next.push(b);
                if next.len() > options.max_assignments {
                    return Err(Error::Design(format!(
                        "more than {} index assignments; lower max_index or fix amplitudes",
                        options.max_assignments
                    )));
                }
            }
        }
        assignments = next;
    }

    let scale = PI * options.max_index as f64 / tau;
    let mut found: Vec<ReturnSolution> = assignments
        .par_iter()
        .enumerate()
        .flat_map_iter(|(ai, js)| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ (ai as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut local = Vec::new();
            if problem.unknowns == 0 {
                let (r, _) = problem.evaluate(&[], js);
                let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                if res < options.tolerance {
                    local.push((Vec::new(), res));
                }
                return local.into_iter().map(|(x, res)| (js.clone(), x, res)).collect::<Vec<_>>().into_iter();
            }
            for _ in 0..options.starts {
                let x0: Vec<f64> = (0..problem.unknowns).map(|_| rng.random_range(-scale..scale)).collect();
                if let Some(sol) = problem.levenberg_marquardt(x0, js, options.tolerance) {
                    local.push(sol);
                }
            }
            local.into_iter().map(|(x, res)| (js.clone(), x, res)).collect::<Vec<_>>().into_iter()
        })
        .filter_map(|(js, x, res)| {
            let table = problem.amplitudes(&x);
            verify_return(graph, &table, tau, targets).then(|| ReturnSolution {
                amplitudes: table.into_iter().collect(),
                indices: problem.conditions.iter().map(|c| c.0).zip(js).collect(),
                residual: res,
            })
        })
        .collect();

    found.sort_by(|a, b| {
        a.indices.cmp(&b.indices).then_with(|| {
            a.amplitudes
                .iter()
                .map(|p| p.1)
                .partial_cmp(b.amplitudes.iter().map(|p| p.1))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut unique: Vec<ReturnSolution> = Vec::new();
    for s in found {
        let dup = unique.iter().any(|u| {
            u.amplitudes
                .iter()
                .zip(&s.amplitudes)
                .all(|(a, b)| (a.1 - b.1).abs() < 1e-7 * (1.0 + a.1.abs()))
        });
        if !dup {
            unique.push(s);
        }
    }
    if unique.is_empty() {
        return Err(Error::NoSolution {
            max_index: options.max_index,
            detail: format!("{} index assignments searched", assignments.len()),
        });
    }
    Ok(unique)
}

fn increasing_tuples(allowed: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &a) in allowed.iter().enumerate() {
        for mut rest in increasing_tuples(&allowed[i + 1..], k - 1) {
            rest.insert(0, a);
            out.push(rest);
        }
    }
    out
}

/// Every targeted anchor returns to itself with its target phase, relative
/// to the first targeted anchor.
fn verify_return(graph: &WalkGraph, table: &AmplitudeTable, tau: f64, targets: &[(usize, f64)]) -> bool {
    let Ok(m) = adjacency(graph, table) else { return false };
    let Ok(u) = walk_unitary(&m, tau) else { return false };
    targets.iter().all(|&(comp, phase)| {
        let a = graph.anchors[comp];
        (u[(a, a)] - Complex64::from_polar(1.0, phase)).norm() < 1e-8
    })
}

/// Drive of a walk design: one tone per symbol, all sharing a Gaussian
/// envelope of unit area scaled by `τ`, narrow enough that the largest
/// instantaneous Rabi amplitude stays at `peak_limit`.
pub fn render_walk(design: &WalkDesign, catalog: &[Transition], peak_limit: f64) -> Result<RenderedDrive> {
    if !(peak_limit > 0.0) {
        return Err(Error::Domain("peak Rabi limit must be positive".into()));
    }
    let table = design.table();
    let max_amp = table.values().fold(0.0f64, |m, v| m.max(v.abs())) * design.tau;
    let mut out = RenderedDrive::default();
    if max_amp == 0.0 {
        return Ok(out);
    }
    // peak of the truncated unit-area Gaussian is σ/(√(2π) erf(c/√2))
    let erf = libm::erf(GAUSSIAN_CUTOFF / 2f64.sqrt());
    let sigma = peak_limit * (2.0 * PI).sqrt() * erf / max_amp;
    let envelope = Envelope::gaussian(GAUSSIAN_CUTOFF / sigma, sigma)?;
    for (symbol, amp) in &design.amplitudes {
        let mut lines = Vec::new();
        for e in design.graph.edges.iter().filter(|e| e.symbol == *symbol) {
            let lo = design.graph.label(e.lower);
            let hi = design.graph.label(e.upper);
            let t = catalog
                .iter()
                .find(|t| t.qs_index == symbol.qs && ((t.from_label == lo && t.to_label == hi) || (t.from_label == hi && t.to_label == lo)))
                .ok_or_else(|| Error::Precondition(format!("no catalog transition {lo} <-> {hi} for {symbol}")))?;
            lines.push(t);
        }
        if lines.is_empty() {
            continue;
        }
        let k = lines.len() as f64;
        let carrier = lines.iter().map(|t| t.frequency).sum::<f64>() / k;
        let element = lines.iter().map(|t| t.matrix_element).sum::<f64>() / k;
        let spread = lines.iter().map(|t| (t.frequency - carrier).abs()).fold(0.0, f64::max);
        if spread > 0.1 * sigma {
            out.warnings.push(format!(
                "{symbol}: its {} transitions spread by {:.3e} rad/s, beyond 0.1σ of the envelope",
                lines.len(),
                spread
            ));
        }
        if lines.iter().any(|t| t.matrix_element.signum() != element.signum()) {
            out.warnings.push(format!("{symbol}: transitions have opposite matrix-element signs"));
        }
        out.terms.push(DriveTerm {
            envelope,
            carrier,
            phase: 0.0,
            amplitude: 2.0 * design.tau * amp / element,
            qs: symbol.qs,
            targets: lines.iter().map(|t| (t.from, t.to)).collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_components() {
        let g = build_walk_graph(&[], 3, 0, 2).unwrap();
        assert_eq!(g.component_sizes(), vec![1; 8]);
        let g = build_walk_graph(&[RabiSymbol::new(0, 1)], 3, 0, 2).unwrap();
        let mut sizes = g.component_sizes();
        sizes.sort();
        assert_eq!(sizes, vec![1, 1, 1, 1, 2, 2, 2, 2]);
        let g = build_walk_graph(&ccz_symbols(), 3, 0, 2).unwrap();
        assert_eq!(g.component_sizes(), vec![5, 3, 3, 2, 1, 1, 1, 1]);
    }

    #[test]
    fn single_symbol_activation_on_one_state() {
        // tier iii on QS0 needs both spectators excited: unreachable
        let g = build_walk_graph(&[RabiSymbol::new(0, 3)], 3, 0, 2).unwrap();
        assert_eq!(g.component_sizes(), vec![1; 8]);
        assert!(build_walk_graph(&[RabiSymbol::new(3, 1)], 3, 0, 2).is_err());
    }

    #[test]
    fn conflicting_amplitudes() {
        let s = RabiSymbol::new(0, 1);
        assert!(amplitude_table(&[(s, 1.0), (s, 2.0)]).is_err());
        assert!(amplitude_table(&[(s, 1.0), (s, 1.0)]).is_ok());
    }

    #[test]
    fn pauli_x_exponential() {
        let m = CMatrix::from_row_slice(2, 2, &[0.0.into(), PI.into(), PI.into(), 0.0.into()]);
        let u = walk_unitary(&m, 1.0).unwrap();
        assert!((u[(0, 0)] + 1.0).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-14);
        let z = walk_unitary(&CMatrix::zeros(3, 3), 2.0).unwrap();
        assert!((z - CMatrix::identity(3, 3)).norm() < 1e-15);
        let bad = CMatrix::from_row_slice(2, 2, &[0.0.into(), 1.0.into(), 2.0.into(), 0.0.into()]);
        assert!(walk_unitary(&bad, 1.0).is_err());
    }

    #[test]
    fn decoupled_chain() {
        let e = chain_eigenfrequencies(1.5, 0.0, 0.0, 0.0);
        assert_eq!(e, [-1.5, 0.0, 0.0, 0.0, 1.5]);
    }

    #[test]
    fn two_node_pi_return() {
        let g = build_walk_graph(&[RabiSymbol::new(0, 1)], 1, 0, 2).unwrap();
        let sols = solve_return_conditions(&g, 1.0, &[(0, PI)], &SolveOptions { max_index: 3, ..Default::default() }).unwrap();
        let mags: Vec<f64> = sols.iter().map(|s| s.amplitudes[0].1.abs()).collect();
        assert!(mags.iter().any(|m| (m - PI).abs() < 1e-9));
        assert!(mags.iter().any(|m| (m - 3.0 * PI).abs() < 1e-9));
    }
}
