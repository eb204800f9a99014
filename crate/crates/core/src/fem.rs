//! P1 finite elements on metric graphs with phased vertex unknowns.
//!
//! Each interior vertex carries one unknown whose trace on an incident edge end is
//! `e^{iχ_{v,e}}` times its value. Dirichlet ends carry none. Mass is lumped, and the
//! magnetic kinetic term uses link phases `e^{iuΔΘ}` along each element.

use std::io::Write;

use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::graph::{Attachment, End, IncidencePhases, QuantumGraph, QuasiDelta};
use crate::potential::EdgePotential;

pub const DEFAULT_ELEMENTS_PER_EDGE: usize = 200;

fn phase(x: f64) -> c64 {
    c64::new(x.cos(), x.sin())
}

/// Uniform subdivision of each edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    elements: Vec<usize>,
    lengths: Vec<f64>,
}

impl Mesh {
    pub fn uniform(graph: &QuantumGraph, elements_per_edge: usize) -> Result<Self> {
        Self::with_elements(graph, vec![elements_per_edge; graph.edge_count()])
    }

    /// Roughly `total` elements distributed in proportion to edge length.
    pub fn with_spacing(graph: &QuantumGraph, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::schema("mesh.h", "spacing must be positive"));
        }
        Self::with_elements(graph, graph.edges().iter().map(|e| ((e.length / h).round() as usize).max(2)).collect())
    }

    pub fn with_elements(graph: &QuantumGraph, elements: Vec<usize>) -> Result<Self> {
        if elements.len() != graph.edge_count() {
            return Err(Error::schema("mesh", "one element count per edge expected"));
        }
        if let Some(e) = elements.iter().position(|&n| n == 0) {
            return Err(Error::schema(format!("mesh[{e}]"), "at least one element per edge"));
        }
        Ok(Self { elements, lengths: graph.edges().iter().map(|e| e.length).collect() })
    }

    pub fn elements(&self, e: usize) -> usize {
        self.elements[e]
    }

    pub fn spacing(&self, e: usize) -> f64 {
        self.lengths[e] / self.elements[e] as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.spacing(e)).fold(0.0, f64::max)
    }

    pub fn position(&self, e: usize, k: usize) -> f64 {
        self.lengths[e] * k as f64 / self.elements[e] as f64
    }

    /// The same mesh with every element split in two.
    pub fn refined(&self) -> Self {
        Self { elements: self.elements.iter().map(|n| 2 * n).collect(), lengths: self.lengths.clone() }
    }
}

/// Global unknown and phase attached to a mesh node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDof {
    pub dof: usize,
    pub phase: c64,
}

/// Node to unknown map. Interior edge nodes come first, edge by edge, then one unknown per vertex.
#[derive(Debug, Clone)]
pub struct DofMap {
    offsets: Vec<usize>,
    elements: Vec<usize>,
    ends: Vec<[Option<NodeDof>; 2]>,
    interior: usize,
    vertices: usize,
}

impl DofMap {
    pub fn new(graph: &QuantumGraph, mesh: &Mesh, chi: &IncidencePhases) -> Self {
        let mut offsets = Vec::with_capacity(graph.edge_count());
        let mut next = 0;
        for e in 0..graph.edge_count() {
            offsets.push(next);
            next += mesh.elements(e) - 1;
        }
        let interior = next;
        let ends = (0..graph.edge_count())
            .map(|e| {
                let mut pair = [None; 2];
                for end in [End::Start, End::Finish] {
                    if let Attachment::Vertex(v) = graph.edge(e).ends[end.index()] {
                        let (_, slot) = graph.incidence_slot(e, end).expect("attached end");
                        pair[end.index()] = Some(NodeDof { dof: interior + v, phase: phase(chi.get(v, slot)) });
                    }
                }
                pair
            })
            .collect();
        Self { offsets, elements: (0..graph.edge_count()).map(|e| mesh.elements(e)).collect(), ends, interior, vertices: graph.vertex_count() }
    }

    pub fn len(&self) -> usize {
        self.interior + self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vertex_dof(&self, v: usize) -> usize {
        self.interior + v
    }

    pub fn is_vertex_dof(&self, i: usize) -> bool {
        i >= self.interior
    }

    /// Unknown and phase of node `k` on edge `e`, `None` at Dirichlet ends.
    pub fn node(&self, e: usize, k: usize) -> Option<NodeDof> {
        let n = self.elements[e];
        if k == 0 {
            self.ends[e][0]
        } else if k == n {
            self.ends[e][1]
        } else {
            Some(NodeDof { dof: self.offsets[e] + k - 1, phase: c64::new(1.0, 0.0) })
        }
    }

    /// Nodal values of `x` along edge `e`, including both ends.
    pub fn edge_values(&self, x: &[c64], e: usize) -> Vec<c64> {
        (0..=self.elements[e])
            .map(|k| self.node(e, k).map_or(c64::new(0.0, 0.0), |nd| nd.phase * x[nd.dof]))
            .collect()
    }
}

/// Column-compressed sparsity pattern shared by every matrix of a family.
#[derive(Debug, Clone)]
pub struct SparsePattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    diag: Vec<usize>,
    symbolic: SymbolicSparseColMat<usize>,
}

impl SparsePattern {
    fn from_pairs(n: usize, mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        pairs.extend((0..n).map(|i| (i, i)));
        pairs.sort_unstable_by_key(|&(r, c)| (c, r));
        pairs.dedup();
        let mut col_ptr = vec![0; n + 1];
        for &(_, c) in &pairs {
            col_ptr[c + 1] += 1;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        let row_idx: Vec<usize> = pairs.iter().map(|&(r, _)| r).collect();
        let symbolic = SymbolicSparseColMat::new_checked(n, n, col_ptr.clone(), None, row_idx.clone());
        let mut out = Self { n, col_ptr, row_idx, diag: Vec::new(), symbolic };
        out.diag = (0..n).map(|i| out.index(i, i).expect("diagonal present")).collect();
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn index(&self, row: usize, col: usize) -> Option<usize> {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        self.row_idx[range.clone()].binary_search(&row).ok().map(|k| range.start + k)
    }

    pub fn diag_index(&self, i: usize) -> usize {
        self.diag[i]
    }

    pub fn symbolic(&self) -> &SymbolicSparseColMat<usize> {
        &self.symbolic
    }

    /// `(row, col)` of every stored entry in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |c| (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |k| (self.row_idx[k], c)))
    }

    pub fn sparse(&self, values: Vec<c64>) -> SparseColMat<usize, c64> {
        SparseColMat::new(self.symbolic.clone(), values)
    }

    pub fn dense(&self, values: &[c64]) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.n, self.n);
        for ((r, c), v) in self.entries().zip(values) {
            m[(r, c)] += *v;
        }
        m
    }

    /// `y = A x`.
    pub fn matvec(&self, values: &[c64], x: &[c64]) -> Vec<c64> {
        let mut y = vec![c64::new(0.0, 0.0); self.n];
        for c in 0..self.n {
            let xc = x[c];
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += values[k] * xc;
            }
        }
        y
    }

    /// `x† A y`.
    pub fn form(&self, values: &[c64], x: &[c64], y: &[c64]) -> c64 {
        let ay = self.matvec(values, y);
        x.iter().zip(&ay).map(|(a, b)| a.conj() * b).sum()
    }

    /// Writes `row col re im` lines, one per stored entry.
    pub fn write_triplets<W: Write>(&self, values: &[c64], mut out: W) -> std::io::Result<()> {
        for ((r, c), v) in self.entries().zip(values) {
            writeln!(out, "{r} {c} {:e} {:e}", v.re, v.im)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Link {
    forward: usize,
    backward: usize,
    coef: c64,
    delta: f64,
}

/// Discrete quadratic forms of `Δ_{uΘ₀', U} + vΘ₀` over a fixed mesh:
/// `K(u, v) = K_mag(u) + v W` with `K_mag(u)` the Peierls-phased stiffness plus the vertex term.
#[derive(Debug, Clone)]
pub struct FormFamily {
    mesh: Mesh,
    dofs: DofMap,
    pattern: SparsePattern,
    mass: Vec<f64>,
    kinetic: Vec<c64>,
    vertex_term: Vec<(usize, f64)>,
    links: Vec<Link>,
    potential: Vec<f64>,
    vertex_coefficients: Vec<f64>,
}

impl FormFamily {
    pub fn assemble(graph: &QuantumGraph, mesh: &Mesh, params: &QuasiDelta, theta: &EdgePotential) -> Result<Self> {
        if theta.edge_count() != graph.edge_count() {
            return Err(Error::schema("theta", "potential does not match graph"));
        }
        let dofs = DofMap::new(graph, mesh, params.chi());
        let n = dofs.len();
        if n == 0 {
            return Err(Error::schema("mesh", "discretisation has no unknowns"));
        }
        struct Element {
            a: NodeDof,
            b: NodeDof,
            h: f64,
            delta: f64,
        }
        let mut elements = Vec::new();
        let mut mass = vec![0.0; n];
        let mut potential = vec![0.0; n];
        let mut pairs = Vec::new();
        for e in 0..graph.edge_count() {
            let h = mesh.spacing(e);
            let ne = mesh.elements(e);
            for k in 0..ne {
                let (xa, xb) = (mesh.position(e, k), mesh.position(e, k + 1));
                let (na, nb) = (dofs.node(e, k), dofs.node(e, k + 1));
                for (nd, x) in [(na, xa), (nb, xb)] {
                    if let Some(nd) = nd {
                        mass[nd.dof] += h / 2.0;
                        potential[nd.dof] += h / 2.0 * theta.value(e, x);
                    }
                }
                if let (Some(a), Some(b)) = (na, nb) {
                    pairs.push((a.dof, b.dof));
                    pairs.push((b.dof, a.dof));
                }
                elements.push((e, k, na, nb, h, theta.value(e, xb) - theta.value(e, xa)));
            }
        }
        let pattern = SparsePattern::from_pairs(n, pairs)?;
        let mut kinetic = vec![c64::new(0.0, 0.0); pattern.nnz()];
        let mut links = Vec::new();
        for (_, _, na, nb, h, delta) in elements {
            for nd in [na, nb].into_iter().flatten() {
                kinetic[pattern.diag_index(nd.dof)] += 1.0 / h;
            }
            if let (Some(a), Some(b)) = (na, nb) {
                let el = Element { a, b, h, delta };
                let coef = -(el.a.phase.conj() * el.b.phase) / el.h;
                let forward = pattern.index(el.a.dof, el.b.dof).expect("pattern entry");
                let backward = pattern.index(el.b.dof, el.a.dof).expect("pattern entry");
                kinetic[forward] += coef;
                kinetic[backward] += coef.conj();
                links.push(Link { forward, backward, coef, delta: el.delta });
            }
        }
        let vertex_coefficients: Vec<f64> = (0..graph.vertex_count()).map(|v| params.vertex_coefficient(graph, v)).collect();
        let vertex_term = (0..graph.vertex_count())
            .map(|v| (pattern.diag_index(dofs.vertex_dof(v)), vertex_coefficients[v]))
            .collect();
        Ok(Self { mesh: mesh.clone(), dofs, pattern, mass, kinetic, vertex_term, links, potential, vertex_coefficients })
    }

    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.pattern
    }

    /// Lumped mass matrix diagonal.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Lumped matrix of the potential `Θ₀` (diagonal).
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn vertex_coefficients(&self) -> &[f64] {
        &self.vertex_coefficients
    }

    /// Plain stiffness `∫|Φ'|²` without vertex term or magnetic phases.
    pub fn kinetic(&self) -> &[c64] {
        &self.kinetic
    }

    /// Values of `K(u, v)` in pattern order.
    pub fn evaluate(&self, u: f64, v: f64) -> Vec<c64> {
        let mut out = self.kinetic.clone();
        for &(idx, c) in &self.vertex_term {
            out[idx] += c;
        }
        if u != 0.0 {
            for l in &self.links {
                let d = l.coef * (phase(u * l.delta) - 1.0);
                out[l.forward] += d;
                out[l.backward] += d.conj();
            }
        }
        if v != 0.0 {
            for (i, w) in self.potential.iter().enumerate() {
                out[self.pattern.diag_index(i)] += v * w;
            }
        }
        out
    }

    /// `∂ᵏ/∂uᵏ K_mag(u)` in pattern order, `k ≥ 1`.
    pub fn magnetic_derivative(&self, u: f64, k: u32) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); self.pattern.nnz()];
        for l in &self.links {
            let d = l.coef * c64::new(0.0, l.delta).powu(k) * phase(u * l.delta);
            out[l.forward] += d;
            out[l.backward] += d.conj();
        }
        out
    }

    /// `K₀ = K(0, 0)`.
    pub fn k0(&self) -> Vec<c64> {
        self.evaluate(0.0, 0.0)
    }

    /// `K₁ = ∂_u K(0, 0)`.
    pub fn k1(&self) -> Vec<c64> {
        self.magnetic_derivative(0.0, 1)
    }

    /// `K₂ = ½ ∂²_u K(0, 0)`.
    pub fn k2(&self) -> Vec<c64> {
        self.magnetic_derivative(0.0, 2).into_iter().map(|z| z * 0.5).collect()
    }

    /// `W` as pattern-ordered values.
    pub fn potential_values(&self) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); self.pattern.nnz()];
        for (i, w) in self.potential.iter().enumerate() {
            out[self.pattern.diag_index(i)] = c64::new(*w, 0.0);
        }
        out
    }

    pub fn dense(&self, values: &[c64]) -> Mat<c64> {
        self.pattern.dense(values)
    }

    pub fn mass_dense(&self) -> Mat<c64> {
        Mat::from_fn(self.dim(), self.dim(), |i, j| if i == j { c64::new(self.mass[i], 0.0) } else { c64::new(0.0, 0.0) })
    }

    /// `⟨x, y⟩_M`.
    pub fn inner(&self, x: &[c64], y: &[c64]) -> c64 {
        x.iter().zip(y).zip(&self.mass).map(|((a, b), m)| a.conj() * b * *m).sum()
    }

    pub fn norm(&self, x: &[c64]) -> f64 {
        self.inner(x, x).re.max(0.0).sqrt()
    }

    /// Nodal interpolant of `f(edge, x)`. Vertex unknowns take the phase-corrected value at the first incidence.
    pub fn interpolate(&self, f: impl Fn(usize, f64) -> c64) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); self.dim()];
        let mut seen = vec![false; self.dim()];
        for e in 0..self.mesh.elements.len() {
            for k in 0..=self.mesh.elements(e) {
                if let Some(nd) = self.dofs.node(e, k) {
                    if !seen[nd.dof] {
                        out[nd.dof] = f(e, self.mesh.position(e, k)) * nd.phase.conj();
                        seen[nd.dof] = true;
                    }
                }
            }
        }
        out
    }

    /// Worst violation over vertices of `Σ_e e^{-iχ} ∂_n Φ_e + |E_v| tan(δ_v/2) φ_v`,
    /// using second-order one-sided outward differences.
    pub fn vertex_flux_residual(&self, graph: &QuantumGraph, x: &[c64]) -> f64 {
        let mut worst: f64 = 0.0;
        for v in 0..graph.vertex_count() {
            let dof = self.dofs.vertex_dof(v);
            let mut sum = c64::new(self.vertex_coefficients[v], 0.0) * x[dof];
            for inc in graph.incidences(v) {
                let e = inc.edge;
                let n = self.mesh.elements(e);
                let h = self.mesh.spacing(e);
                let vals = self.dofs.edge_values(x, e);
                let (end_node, inner, next) = match inc.end {
                    End::Start => (0, 1, 2.min(n)),
                    End::Finish => (n, n - 1, n.saturating_sub(2)),
                };
                let outward = if n >= 2 {
                    (vals[end_node] * 3.0 - vals[inner] * 4.0 + vals[next]) / (2.0 * h)
                } else {
                    (vals[end_node] - vals[inner]) / h
                };
                let ph = self.dofs.node(e, end_node).expect("vertex node").phase;
                sum += ph.conj() * outward;
            }
            worst = worst.max(sum.norm());
        }
        worst
    }
}
