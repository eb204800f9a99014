//! Metric graphs, quasi-delta vertex data and the JSON graph description.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which end of an edge, in the edge's own coordinate `x ∈ [0, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum End {
    Start,
    Finish,
}

impl End {
    pub fn index(self) -> usize {
        match self {
            End::Start => 0,
            End::Finish => 1,
        }
    }
}

/// What an edge endpoint is glued to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attachment {
    Vertex(usize),
    /// Boundary point of the circuit carrying a Dirichlet condition.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub name: String,
    pub length: f64,
    pub ends: [Attachment; 2],
}

/// One edge endpoint meeting an interior vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub edge: usize,
    pub end: End,
}

/// Finite metric graph. Every vertex has at least one incident edge end.
#[derive(Debug, Clone)]
pub struct QuantumGraph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    incidences: Vec<Vec<Incidence>>,
}

impl QuantumGraph {
    pub fn new(vertices: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::schema("edges", "graph has no edges"));
        }
        for (i, name) in vertices.iter().enumerate() {
            if vertices[..i].contains(name) {
                return Err(Error::schema(format!("vertices[{i}]"), format!("duplicate vertex `{name}`")));
            }
        }
        let mut incidences = vec![Vec::new(); vertices.len()];
        for (e, edge) in edges.iter().enumerate() {
            if edges[..e].iter().any(|other| other.name == edge.name) {
                return Err(Error::schema(format!("edges[{e}].id"), format!("duplicate edge `{}`", edge.name)));
            }
            if !(edge.length.is_finite() && edge.length > 0.0) {
                return Err(Error::schema(format!("edges[{e}].length"), "length must be positive and finite"));
            }
            for (k, end) in [End::Start, End::Finish].into_iter().enumerate() {
                if let Attachment::Vertex(v) = edge.ends[k] {
                    if v >= vertices.len() {
                        return Err(Error::schema(format!("edges[{e}].ends[{k}]"), "unknown vertex"));
                    }
                    incidences[v].push(Incidence { edge: e, end });
                }
            }
        }
        for (v, inc) in incidences.iter().enumerate() {
            if inc.is_empty() {
                return Err(Error::schema(format!("vertices[{v}]"), format!("vertex `{}` has no incident edge", vertices[v])));
            }
        }
        Ok(Self { vertices, edges, incidences })
    }

    /// Single edge `[0, length]` with Dirichlet conditions at both ends.
    pub fn interval(length: f64) -> Result<Self> {
        Self::new(
            Vec::new(),
            vec![Edge { name: "e0".into(), length, ends: [Attachment::External, Attachment::External] }],
        )
    }

    /// Star with one centre vertex `c`. Edge `k` runs from an external end (x = 0) to the centre.
    pub fn star(lengths: &[f64]) -> Result<Self> {
        let edges = lengths
            .iter()
            .enumerate()
            .map(|(k, &length)| Edge {
                name: format!("e{k}"),
                length,
                ends: [Attachment::External, Attachment::Vertex(0)],
            })
            .collect();
        Self::new(vec!["c".into()], edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_name(&self, v: usize) -> &str {
        &self.vertices[v]
    }

    pub fn vertex_index(&self, name: &str) -> Option<usize> {
        self.vertices.iter().position(|n| n == name)
    }

    pub fn edge_index(&self, name: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.name == name)
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Incident edge ends of vertex `v`, in a fixed order shared by all per-incidence data.
    pub fn incidences(&self, v: usize) -> &[Incidence] {
        &self.incidences[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incidences[v].len()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Position of `(edge, end)` within the incidence list of the vertex it touches.
    pub fn incidence_slot(&self, edge: usize, end: End) -> Option<(usize, usize)> {
        match self.edges[edge].ends[end.index()] {
            Attachment::Vertex(v) => {
                let slot = self.incidences[v].iter().position(|i| i.edge == edge && i.end == end)?;
                Some((v, slot))
            }
            Attachment::External => None,
        }
    }
}

/// A real number attached to every interior incidence, grouped by vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidencePhases(Vec<Vec<f64>>);

impl IncidencePhases {
    pub fn zeros(graph: &QuantumGraph) -> Self {
        Self((0..graph.vertex_count()).map(|v| vec![0.0; graph.degree(v)]).collect())
    }

    pub fn new(graph: &QuantumGraph, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != graph.vertex_count() {
            return Err(Error::schema("chi", "one phase list per vertex expected"));
        }
        for (v, row) in values.iter().enumerate() {
            if row.len() != graph.degree(v) {
                return Err(Error::schema(
                    format!("chi.{}", graph.vertex_name(v)),
                    format!("expected {} phases, got {}", graph.degree(v), row.len()),
                ));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::schema(format!("chi.{}", graph.vertex_name(v)), "phases must be finite"));
            }
        }
        Ok(Self(values))
    }

    pub fn at(&self, v: usize) -> &[f64] {
        &self.0[v]
    }

    pub fn get(&self, v: usize, slot: usize) -> f64 {
        self.0[v][slot]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|row| row.iter().map(|x| x * factor).collect()).collect())
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect())
    }

    /// Representatives in `[0, 2π)`.
    pub fn reduced(&self) -> Self {
        Self(self.0.iter().map(|row| row.iter().map(|x| x.rem_euclid(TAU)).collect()).collect())
    }
}

/// Quasi-delta coupling: strength `δ_v` and phases `χ_{v,e}` for each vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiDelta {
    delta: Vec<f64>,
    chi: IncidencePhases,
}

impl QuasiDelta {
    pub fn new(graph: &QuantumGraph, delta: Vec<f64>, chi: IncidencePhases) -> Result<Self> {
        if delta.len() != graph.vertex_count() {
            return Err(Error::schema("delta", "one coupling per vertex expected"));
        }
        for (v, d) in delta.iter().enumerate() {
            if !d.is_finite() || (d.rem_euclid(TAU) - std::f64::consts::PI).abs() < 1e-14 {
                return Err(Error::schema(
                    format!("delta.{}", graph.vertex_name(v)),
                    "coupling must be finite and different from π mod 2π",
                ));
            }
        }
        Ok(Self { delta, chi: chi.reduced() })
    }

    /// Same couplings everywhere and vanishing phases.
    pub fn uniform(graph: &QuantumGraph, delta: f64) -> Result<Self> {
        Self::new(graph, vec![delta; graph.vertex_count()], IncidencePhases::zeros(graph))
    }

    pub fn delta(&self, v: usize) -> f64 {
        self.delta[v]
    }

    pub fn deltas(&self) -> &[f64] {
        &self.delta
    }

    pub fn chi(&self) -> &IncidencePhases {
        &self.chi
    }

    pub fn with_chi(&self, chi: IncidencePhases) -> Self {
        Self { delta: self.delta.clone(), chi: chi.reduced() }
    }

    /// Robin-type coefficient `|E_v| tan(δ_v / 2)` entering the vertex unknown.
    pub fn vertex_coefficient(&self, graph: &QuantumGraph, v: usize) -> f64 {
        graph.degree(v) as f64 * (self.delta[v] / 2.0).tan()
    }
}

/// JSON description of a circuit.
///
/// Edge ends are vertex names or `null` for a Dirichlet end. Phase maps are keyed by
/// vertex, then by edge id; a loop edge is addressed as `id:start` or `id:end`.
/// Missing phases default to zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    pub delta: BTreeMap<String, f64>,
    #[serde(default)]
    pub chi: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: String,
    pub length: f64,
    pub ends: [Option<String>; 2],
}

pub type PhaseMap = BTreeMap<String, BTreeMap<String, f64>>;

impl GraphSpec {
    pub fn graph(&self) -> Result<QuantumGraph> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for (e, spec) in self.edges.iter().enumerate() {
            let mut ends = [Attachment::External; 2];
            for (k, end) in spec.ends.iter().enumerate() {
                if let Some(name) = end {
                    let v = self.vertices.iter().position(|n| n == name).ok_or_else(|| {
                        Error::schema(format!("edges[{e}].ends[{k}]"), format!("unknown vertex `{name}`"))
                    })?;
                    ends[k] = Attachment::Vertex(v);
                }
            }
            edges.push(Edge { name: spec.id.clone(), length: spec.length, ends });
        }
        QuantumGraph::new(self.vertices.clone(), edges)
    }

    pub fn build(&self) -> Result<(QuantumGraph, QuasiDelta)> {
        let graph = self.graph()?;
        let mut delta = Vec::with_capacity(graph.vertex_count());
        for v in 0..graph.vertex_count() {
            let name = graph.vertex_name(v);
            let d = self
                .delta
                .get(name)
                .ok_or_else(|| Error::schema(format!("delta.{name}"), "missing coupling for vertex"))?;
            delta.push(*d);
        }
        if let Some(extra) = self.delta.keys().find(|k| graph.vertex_index(k).is_none()) {
            return Err(Error::schema(format!("delta.{extra}"), "unknown vertex"));
        }
        let chi = phases_from_map(&graph, &self.chi, "chi")?;
        let params = QuasiDelta::new(&graph, delta, chi)?;
        Ok((graph, params))
    }
}

/// Resolves a vertex → edge → value map into per-incidence phases.
pub fn phases_from_map(graph: &QuantumGraph, map: &PhaseMap, path: &str) -> Result<IncidencePhases> {
    let mut out = IncidencePhases::zeros(graph);
    for (vname, row) in map {
        let v = graph
            .vertex_index(vname)
            .ok_or_else(|| Error::schema(format!("{path}.{vname}"), "unknown vertex"))?;
        for (key, &value) in row {
            let field = format!("{path}.{vname}.{key}");
            let (ename, end) = match key.rsplit_once(':') {
                Some((name, "start")) => (name, Some(End::Start)),
                Some((name, "end")) => (name, Some(End::Finish)),
                _ => (key.as_str(), None),
            };
            let edge = graph.edge_index(ename).ok_or_else(|| Error::schema(&field, "unknown edge"))?;
            let slots: Vec<usize> = graph
                .incidences(v)
                .iter()
                .enumerate()
                .filter(|(_, inc)| inc.edge == edge && end.map_or(true, |e| e == inc.end))
                .map(|(s, _)| s)
                .collect();
            match slots.as_slice() {
                [] => return Err(Error::schema(&field, "edge is not incident to vertex")),
                [slot] => {
                    if !value.is_finite() {
                        return Err(Error::schema(&field, "phase must be finite"));
                    }
                    out.0[v][*slot] = value;
                }
                _ => return Err(Error::schema(&field, "loop edge needs `:start` or `:end`")),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> GraphSpec {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn star_has_one_vertex_of_full_degree() {
        let g = QuantumGraph::star(&[1.0, 2.0, 0.5]).unwrap();
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.degree(0), 3);
        assert!((g.total_length() - 3.5).abs() < 1e-15);
        assert_eq!(g.incidence_slot(1, End::Finish), Some((0, 1)));
        assert_eq!(g.incidence_slot(1, End::Start), None);
    }

    #[test]
    fn rejects_bad_lengths_and_isolated_vertices() {
        let bad = Edge { name: "a".into(), length: 0.0, ends: [Attachment::External; 2] };
        assert!(matches!(QuantumGraph::new(vec![], vec![bad]), Err(Error::Schema { .. })));
        let ok = Edge { name: "a".into(), length: 1.0, ends: [Attachment::External; 2] };
        let err = QuantumGraph::new(vec!["lonely".into()], vec![ok]).unwrap_err();
        assert!(err.to_string().contains("vertices[0]"));
    }

    #[test]
    fn phases_reduce_modulo_two_pi() {
        let g = QuantumGraph::star(&[1.0, 1.0]).unwrap();
        let chi = IncidencePhases::new(&g, vec![vec![-0.5, 7.0]]).unwrap();
        let q = QuasiDelta::new(&g, vec![0.3], chi).unwrap();
        assert!((q.chi().get(0, 0) - (TAU - 0.5)).abs() < 1e-14);
        assert!((q.chi().get(0, 1) - (7.0 - TAU)).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip_with_loop() {
        let s = spec(
            r#"{"vertices":["a"],
                "edges":[{"id":"l","length":2.0,"ends":["a","a"]},{"id":"t","length":1.0,"ends":[null,"a"]}],
                "delta":{"a":0.4},
                "chi":{"a":{"l:start":0.1,"l:end":0.2,"t":0.3}}}"#,
        );
        let (g, q) = s.build().unwrap();
        assert_eq!(g.degree(0), 3);
        assert_eq!(q.chi().at(0), &[0.1, 0.2, 0.3]);
        assert_eq!(q.delta(0), 0.4);
    }

    #[test]
    fn missing_delta_names_the_field() {
        let s = spec(r#"{"vertices":["a"],"edges":[{"id":"t","length":1.0,"ends":[null,"a"]}],"delta":{}}"#);
        let err = s.build().unwrap_err();
        assert!(matches!(&err, Error::Schema { path, .. } if path == "delta.a"));
    }

    #[test]
    fn ambiguous_loop_phase_is_rejected() {
        let s = spec(
            r#"{"vertices":["a"],"edges":[{"id":"l","length":1.0,"ends":["a","a"]}],
                "delta":{"a":0.0},"chi":{"a":{"l":1.0}}}"#,
        );
        assert!(s.build().is_err());
    }
}
