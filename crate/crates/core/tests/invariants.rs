use std::f64::consts::PI;

use proptest::prelude::*;
use qgraph_core::boundary::{partial_cayley, vertex_projector, vertex_unitary, CAYLEY_GAP_TOL};
use qgraph_core::fem::{FormFamily, Mesh};
use qgraph_core::gauge::{build_gauge, map_state, verify_form_equivalence, Direction};
use qgraph_core::graph::{IncidencePhases, QuantumGraph, QuasiDelta};
use qgraph_core::potential::{theta_from_chi, EdgePotential};
use qgraph_core::propagator::{evolve, Drive, Driven};
use qgraph_core::stability::lift_to_sawtooth;
use qgraph_core::{c64, ControlFunction};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cayley_block_is_scaled_projector(
        chi in prop::collection::vec(0.0..2.0 * PI, 1..6),
        delta in -3.0f64..3.0,
    ) {
        let blocks = partial_cayley(vertex_unitary(&chi, delta).as_ref(), CAYLEY_GAP_TOL).unwrap();
        let p = vertex_projector(&chi);
        let coef = -(0.5 * delta).tan();
        for i in 0..chi.len() {
            for j in 0..chi.len() {
                prop_assert!((blocks.cayley[(i, j)] - p[(i, j)] * coef).norm() <= 1e-12 * coef.abs().max(1.0));
                prop_assert!((blocks.range[(i, j)] - p[(i, j)]).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn gauge_conjugates_the_forms(
        chi_bar in prop::collection::vec(-PI..PI, 3),
        u in -1.5f64..1.5,
        delta in -2.5f64..2.5,
    ) {
        let g = QuantumGraph::star(&[1.0, 0.6, 1.4]).unwrap();
        let mesh = Mesh::uniform(&g, 12).unwrap();
        let chi_bar = IncidencePhases::new(&g, vec![chi_bar]).unwrap();
        let theta = theta_from_chi(&g, &chi_bar);
        let boundary = QuasiDelta::new(&g, vec![delta], chi_bar.scaled(u)).unwrap();
        let induction = QuasiDelta::uniform(&g, delta).unwrap();
        let fb = FormFamily::assemble(&g, &mesh, &boundary, &EdgePotential::zero(&g)).unwrap();
        let fi = FormFamily::assemble(&g, &mesh, &induction, &theta).unwrap();
        let j = build_gauge(&g, &mesh, boundary.chi(), induction.chi(), &theta, u).unwrap();
        let report = verify_form_equivalence(&fb, &fi, &j, u).unwrap();
        prop_assert!(report.form_residual < 1e-10);
        prop_assert!(report.spectral_residual < 1e-10);
        let psi: Vec<c64> = (0..fb.dim()).map(|i| c64::new((i as f64).sin(), 0.3)).collect();
        let mapped = map_state(&j, &psi, Direction::Forward);
        prop_assert!((fb.norm(&psi) - fi.norm(&mapped)).abs() < 1e-12 * fb.norm(&psi));
    }

    #[test]
    fn crank_nicolson_is_unitary(
        values in prop::collection::vec(-1.0f64..1.0, 1..5),
        seed in 0u64..1000,
    ) {
        let g = QuantumGraph::star(&[1.0, 1.0]).unwrap();
        let mesh = Mesh::uniform(&g, 20).unwrap();
        let chi = IncidencePhases::new(&g, vec![vec![0.0, PI]]).unwrap();
        let f = FormFamily::assemble(&g, &mesh, &QuasiDelta::uniform(&g, 0.4).unwrap(), &theta_from_chi(&g, &chi)).unwrap();
        let n = values.len();
        let bps: Vec<f64> = (0..=n).map(|k| 0.2 * k as f64).collect();
        let v = ControlFunction::piecewise_constant(bps, values).unwrap();
        let u = lift_to_sawtooth(&v, 0.1, 3).unwrap();
        let drive = Drive::Induction(u);
        let psi0: Vec<c64> = (0..f.dim()).map(|i| c64::new(((i as u64 * 31 + seed) % 17) as f64, 1.0)).collect();
        let out = evolve(&Driven::new(&f, &drive), &psi0, 0.0, drive.horizon(), 5e-3, 1).unwrap();
        prop_assert!(out.norm_drift < 1e-10);
    }

    #[test]
    fn sawtooth_derivative_is_the_auxiliary_control(
        values in prop::collection::vec(0.0f64..2.0, 1..6),
        n in 1usize..20,
        u0 in -1.0f64..1.0,
    ) {
        let m = values.len();
        let bps: Vec<f64> = (0..=m).map(|k| 0.37 * k as f64).collect();
        let v = ControlFunction::piecewise_constant(bps, values).unwrap();
        let u = lift_to_sawtooth(&v, u0, n).unwrap();
        let horizon = v.horizon();
        for w in u.breakpoints().windows(2) {
            prop_assert!((u.value(w[0]).unwrap() - u0).abs() < 1e-14);
            let mid = 0.5 * (w[0] + w[1]);
            prop_assert!((u.eval(mid).unwrap().1 - v.value(mid).unwrap()).abs() < 1e-14);
        }
        let bound = v.constant_values().unwrap().iter().fold(0.0, |a: f64, b| a.max(b.abs())) * horizon / n as f64;
        for k in 0..200 {
            let t = horizon * k as f64 / 200.0;
            prop_assert!((u.value(t).unwrap() - u0).abs() <= bound + 1e-12);
        }
    }
}
