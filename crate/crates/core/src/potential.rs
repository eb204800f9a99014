//! Edge potentials `Θ` whose derivative is the magnetic potential `A = Θ'`.

use crate::error::{Error, Result};
use crate::graph::{Attachment, End, IncidencePhases, QuantumGraph};

/// Per-edge cubic profile with prescribed endpoint values and zero endpoint slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePotential {
    lengths: Vec<f64>,
    ends: Vec<[f64; 2]>,
}

impl EdgePotential {
    pub fn zero(graph: &QuantumGraph) -> Self {
        Self { lengths: graph.edges().iter().map(|e| e.length).collect(), ends: vec![[0.0; 2]; graph.edge_count()] }
    }

    /// Profiles with the given `[Θ(0), Θ(L)]` per edge.
    pub fn from_endpoint_values(graph: &QuantumGraph, ends: Vec<[f64; 2]>) -> Result<Self> {
        if ends.len() != graph.edge_count() {
            return Err(Error::schema("theta", "one pair of endpoint values per edge expected"));
        }
        if ends.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::schema("theta", "endpoint values must be finite"));
        }
        Ok(Self { lengths: graph.edges().iter().map(|e| e.length).collect(), ends })
    }

    pub fn edge_count(&self) -> usize {
        self.ends.len()
    }

    pub fn endpoint(&self, e: usize, end: End) -> f64 {
        self.ends[e][end.index()]
    }

    pub fn value(&self, e: usize, x: f64) -> f64 {
        let s = (x / self.lengths[e]).clamp(0.0, 1.0);
        let [a, b] = self.ends[e];
        a + (b - a) * s * s * (3.0 - 2.0 * s)
    }

    /// `A = Θ'` on edge `e`.
    pub fn slope(&self, e: usize, x: f64) -> f64 {
        let l = self.lengths[e];
        let s = (x / l).clamp(0.0, 1.0);
        let [a, b] = self.ends[e];
        (b - a) * 6.0 * s * (1.0 - s) / l
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lengths: self.lengths.clone(),
            ends: self.ends.iter().map(|[a, b]| [a * factor, b * factor]).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ends.iter().flatten().all(|&x| x == 0.0)
    }
}

/// Potential equal to `χ̄_{v,e}` at each interior end of `e`, zero at external ends,
/// with vanishing slope at both ends.
pub fn theta_from_chi(graph: &QuantumGraph, chi_bar: &IncidencePhases) -> EdgePotential {
    let ends = (0..graph.edge_count())
        .map(|e| {
            let mut pair = [0.0; 2];
            for end in [End::Start, End::Finish] {
                if let Attachment::Vertex(_) = graph.edge(e).ends[end.index()] {
                    let (v, slot) = graph.incidence_slot(e, end).expect("incidence of attached end");
                    pair[end.index()] = chi_bar.get(v, slot);
                }
            }
            pair
        })
        .collect();
    EdgePotential { lengths: graph.edges().iter().map(|e| e.length).collect(), ends }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn endpoint_values_and_slopes() {
        let g = QuantumGraph::star(&[1.0, 2.0]).unwrap();
        let chi = IncidencePhases::new(&g, vec![vec![0.0, PI]]).unwrap();
        let theta = theta_from_chi(&g, &chi);
        assert_eq!(theta.value(1, 0.0), 0.0);
        assert!((theta.value(1, 2.0) - PI).abs() < 1e-15);
        assert_eq!(theta.slope(1, 0.0), 0.0);
        assert_eq!(theta.slope(1, 2.0), 0.0);
        assert!(theta.value(0, 0.7).abs() < 1e-15);
    }

    #[test]
    fn slope_is_derivative_of_value() {
        let g = QuantumGraph::interval(1.5).unwrap();
        let theta = EdgePotential::from_endpoint_values(&g, vec![[0.3, -1.1]]).unwrap();
        let h = 1e-6;
        for k in 1..10 {
            let x = 1.5 * k as f64 / 10.0;
            let fd = (theta.value(0, x + h) - theta.value(0, x - h)) / (2.0 * h);
            assert!((fd - theta.slope(0, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_in_phases() {
        let g = QuantumGraph::star(&[1.0, 1.0, 1.0]).unwrap();
        let chi = IncidencePhases::new(&g, vec![vec![0.2, 1.0, -0.4]]).unwrap();
        let a = theta_from_chi(&g, &chi.scaled(2.5));
        let b = theta_from_chi(&g, &chi).scaled(2.5);
        for e in 0..3 {
            for k in 0..=10 {
                let x = k as f64 / 10.0;
                assert!((a.value(e, x) - b.value(e, x)).abs() < 1e-14);
            }
        }
    }
}
