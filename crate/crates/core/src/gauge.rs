//! Gauge maps between the boundary picture (phases in the vertex conditions)
//! and the induction picture (phases in the magnetic potential).

use faer::c64;

use crate::control::ControlFunction;
use crate::error::{Error, Result};
use crate::fem::{FormFamily, Mesh, SparsePattern};
use crate::graph::{IncidencePhases, QuantumGraph, QuasiDelta};
use crate::potential::EdgePotential;
use crate::propagator::HamiltonianPath;
use crate::spectral::generalized_eigenvalues_lumped;

/// Endpoint phases must agree with the potential to this accuracy.
pub const GAUGE_TOL: f64 = 1e-10;

fn phase(x: f64) -> c64 {
    c64::new(x.cos(), x.sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Boundary picture to induction picture.
    Forward,
    /// Induction picture to boundary picture.
    Backward,
}

/// Diagonal unitary `J` acting on unknowns: `ψ_induction = J ψ_boundary`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeMap {
    phases: Vec<c64>,
}

impl GaugeMap {
    pub fn identity(n: usize) -> Self {
        Self { phases: vec![c64::new(1.0, 0.0); n] }
    }

    pub fn phases(&self) -> &[c64] {
        &self.phases
    }

    pub fn apply(&self, psi: &[c64], direction: Direction) -> Vec<c64> {
        match direction {
            Direction::Forward => psi.iter().zip(&self.phases).map(|(x, p)| x * p).collect(),
            Direction::Backward => psi.iter().zip(&self.phases).map(|(x, p)| x * p.conj()).collect(),
        }
    }

    /// Pattern values of `J K J†`.
    pub fn conjugate(&self, pattern: &SparsePattern, values: &[c64]) -> Vec<c64> {
        pattern.entries().zip(values).map(|((r, c), v)| self.phases[r] * v * self.phases[c].conj()).collect()
    }
}

pub fn map_state(gauge: &GaugeMap, psi: &[c64], direction: Direction) -> Vec<c64> {
    gauge.apply(psi, direction)
}

/// `e^{-iuΘ(x_k)}` at every node of edge `e`, ends included.
pub fn nodal_phases(mesh: &Mesh, theta: &EdgePotential, u: f64, e: usize) -> Vec<c64> {
    (0..=mesh.elements(e)).map(|k| phase(-u * theta.value(e, mesh.position(e, k)))).collect()
}

/// Gauge from vertex phases `source` to `target` through `e^{-iuΘ}`.
///
/// Requires `χ_source - χ_target ≡ uΘ` at every interior edge end.
pub fn build_gauge(
    graph: &QuantumGraph,
    mesh: &Mesh,
    source: &IncidencePhases,
    target: &IncidencePhases,
    theta: &EdgePotential,
    u: f64,
) -> Result<GaugeMap> {
    for v in 0..graph.vertex_count() {
        for (slot, inc) in graph.incidences(v).iter().enumerate() {
            let expected = phase(source.get(v, slot) - target.get(v, slot));
            let got = phase(u * theta.endpoint(inc.edge, inc.end));
            let mismatch = (expected - got).norm();
            if mismatch > GAUGE_TOL {
                return Err(Error::GaugeMismatch { vertex: graph.vertex_name(v).to_string(), mismatch });
            }
        }
    }
    let dofs = crate::fem::DofMap::new(graph, mesh, target);
    let mut phases = vec![c64::new(1.0, 0.0); dofs.len()];
    for e in 0..graph.edge_count() {
        for k in 1..mesh.elements(e) {
            let nd = dofs.node(e, k).expect("interior node");
            phases[nd.dof] = phase(-u * theta.value(e, mesh.position(e, k)));
        }
    }
    Ok(GaugeMap { phases })
}

/// Agreement between `K_induction` and `J K_boundary J†`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    pub form_residual: f64,
    pub mass_residual: f64,
    /// `max_k |λ_k - μ_k| / max(|λ_k|, 1)`.
    pub spectral_residual: f64,
}

pub fn verify_form_equivalence(
    boundary: &FormFamily,
    induction: &FormFamily,
    gauge: &GaugeMap,
    u: f64,
) -> Result<EquivalenceReport> {
    if boundary.dim() != induction.dim() || gauge.phases().len() != boundary.dim() {
        return Err(Error::schema("gauge", "dimension mismatch between pictures"));
    }
    let kb = boundary.evaluate(0.0, 0.0);
    let ki = induction.evaluate(u, 0.0);
    let conj = gauge.conjugate(boundary.pattern(), &kb);
    let mut form_residual: f64 = 0.0;
    for ((r, c), v) in induction.pattern().entries().zip(&ki) {
        let other = boundary.pattern().index(r, c).map_or(c64::new(0.0, 0.0), |k| conj[k]);
        form_residual = form_residual.max((v - other).norm());
    }
    for ((r, c), v) in boundary.pattern().entries().zip(&conj) {
        if induction.pattern().index(r, c).is_none() {
            form_residual = form_residual.max(v.norm());
        }
    }
    let mass_residual = boundary.mass().iter().zip(induction.mass()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let lb = generalized_eigenvalues_lumped(boundary.dense(&kb).as_ref(), boundary.mass())?;
    let li = generalized_eigenvalues_lumped(induction.dense(&ki).as_ref(), induction.mass())?;
    let spectral_residual = lb.iter().zip(&li).map(|(a, b)| (a - b).abs() / a.abs().max(1.0)).fold(0.0, f64::max);
    Ok(EquivalenceReport { form_residual, mass_residual, spectral_residual })
}

/// Circuit in the boundary picture with vertex phases `χ + u(t) χ̄` moving in time.
///
/// The moving phased basis adds `u'(t) X` with `X_vv = Σ_e (h_e/2) χ̄_{v,e}`.
pub struct BoundaryPicture<'a> {
    graph: &'a QuantumGraph,
    mesh: &'a Mesh,
    base: &'a QuasiDelta,
    chi_bar: &'a IncidencePhases,
    control: &'a ControlFunction,
    template: FormFamily,
    rate: Vec<f64>,
}

impl<'a> BoundaryPicture<'a> {
    pub fn new(
        graph: &'a QuantumGraph,
        mesh: &'a Mesh,
        base: &'a QuasiDelta,
        chi_bar: &'a IncidencePhases,
        control: &'a ControlFunction,
    ) -> Result<Self> {
        let template = Self::assemble(graph, mesh, base, chi_bar, control.start_value())?;
        let mut rate = vec![0.0; template.dim()];
        for v in 0..graph.vertex_count() {
            let dof = template.dofs().vertex_dof(v);
            for (slot, inc) in graph.incidences(v).iter().enumerate() {
                rate[dof] += 0.5 * mesh.spacing(inc.edge) * chi_bar.get(v, slot);
            }
        }
        Ok(Self { graph, mesh, base, chi_bar, control, template, rate })
    }

    fn assemble(
        graph: &QuantumGraph,
        mesh: &Mesh,
        base: &QuasiDelta,
        chi_bar: &IncidencePhases,
        u: f64,
    ) -> Result<FormFamily> {
        let params = base.with_chi(base.chi().plus(&chi_bar.scaled(u)));
        FormFamily::assemble(graph, mesh, &params, &EdgePotential::zero(graph))
    }

    /// Boundary-picture form at control value `u`.
    pub fn family_at(&self, u: f64) -> Result<FormFamily> {
        Self::assemble(self.graph, self.mesh, self.base, self.chi_bar, u)
    }

    pub fn rate_matrix(&self) -> &[f64] {
        &self.rate
    }

    pub fn mass(&self) -> &[f64] {
        self.template.mass()
    }
}

impl HamiltonianPath for BoundaryPicture<'_> {
    fn pattern(&self) -> &SparsePattern {
        self.template.pattern()
    }

    fn mass(&self) -> &[f64] {
        self.template.mass()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.control.breakpoints().to_vec()
    }

    fn values_at(&self, t: f64) -> Result<Vec<c64>> {
        let (u, du) = self.control.eval(t)?;
        let family = self.family_at(u)?;
        let mut values = family.evaluate(0.0, 0.0);
        for (i, x) in self.rate.iter().enumerate() {
            if *x != 0.0 {
                values[family.pattern().diag_index(i)] += du * x;
            }
        }
        Ok(values)
    }
}
