//! Fixtures shared by the benchmarks.

use qgraph_core::fem::{FormFamily, Mesh};
use qgraph_core::graph::{IncidencePhases, QuantumGraph, QuasiDelta};
use qgraph_core::potential::theta_from_chi;

/// Two unit edges meeting at a quasi-delta vertex, with the magnetic profile on the second edge.
pub fn two_star(elements_per_edge: usize) -> FormFamily {
    let graph = QuantumGraph::star(&[1.0, 1.0]).expect("valid star");
    let params = QuasiDelta::uniform(&graph, 0.4).expect("valid coupling");
    let chi_bar = IncidencePhases::new(&graph, vec![vec![0.0, std::f64::consts::PI]]).expect("phases");
    let mesh = Mesh::uniform(&graph, elements_per_edge).expect("mesh");
    FormFamily::assemble(&graph, &mesh, &params, &theta_from_chi(&graph, &chi_bar)).expect("assembly")
}
