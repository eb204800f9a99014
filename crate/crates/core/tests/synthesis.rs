use std::f64::consts::PI;

use qgraph_core::fem::{FormFamily, Mesh};
use qgraph_core::graph::{IncidencePhases, QuantumGraph, QuasiDelta};
use qgraph_core::potential::theta_from_chi;
use qgraph_core::spectral::family_eigen;
use qgraph_core::control::ControlFunction;
use qgraph_core::propagator::{evolve_with, Drive, Driven};
use qgraph_core::synthesis::{
    append_holds, design_pwc_auxiliary, design_smooth, fidelity, run_boundary_pipeline, sawtooth_stage, BoundaryTask,
    SynthesisOptions, TransferTask,
};
use qgraph_core::Error;

fn coarse_star() -> (QuantumGraph, Mesh, QuasiDelta, IncidencePhases) {
    let g = QuantumGraph::star(&[1.0, 1.0]).unwrap();
    let mesh = Mesh::uniform(&g, 40).unwrap();
    let params = QuasiDelta::uniform(&g, 0.4).unwrap();
    let chi_bar = IncidencePhases::new(&g, vec![vec![0.0, PI]]).unwrap();
    (g, mesh, params, chi_bar)
}

#[test]
fn auxiliary_and_sawtooth_reach_the_first_excited_state() {
    let (g, mesh, params, chi_bar) = coarse_star();
    let f = FormFamily::assemble(&g, &mesh, &params, &theta_from_chi(&g, &chi_bar)).unwrap();
    let eig = family_eigen(&f, 0.0, 0.0).unwrap();
    let task = TransferTask { family: &f, u0: 0.0, u1: 0.0, source: eig.vector(0), target: eig.vector(1), r: 1.0, eps: 0.02 };
    let options = SynthesisOptions { dt: 2e-3, ..SynthesisOptions::default() };
    let aux = design_pwc_auxiliary(&task, &options).unwrap();
    assert!(aux.converged, "auxiliary fidelity {}", aux.fidelity);
    let values = aux.control.constant_values().unwrap();
    assert!(values.iter().all(|v| *v > 0.0 && *v < 1.0));
    let (n, saw) = sawtooth_stage(&task, &aux, &options).unwrap();
    assert!(saw.converged && n <= 256);
    assert!(saw.control.max_rate() <= 1.0);
}

#[test]
fn uncoupled_levels_are_reported() {
    let (g, mesh, params, _) = coarse_star();
    let zero = IncidencePhases::zeros(&g);
    let f = FormFamily::assemble(&g, &mesh, &params, &theta_from_chi(&g, &zero)).unwrap();
    let eig = family_eigen(&f, 0.0, 0.0).unwrap();
    let task = TransferTask { family: &f, u0: 0.0, u1: 0.0, source: eig.vector(0), target: eig.vector(1), r: 1.0, eps: 0.01 };
    let err = design_pwc_auxiliary(&task, &SynthesisOptions::default()).unwrap_err();
    assert!(matches!(err, Error::ZeroCoupling(_)));
}

#[test]
fn pipeline_pins_distinct_endpoints() {
    let (g, mesh, params, chi_bar) = coarse_star();
    let task = BoundaryTask {
        graph: &g,
        mesh: &mesh,
        base: &params,
        chi_bar: &chi_bar,
        u0: 0.0,
        u1: 0.3,
        source_level: 0,
        target_level: 1,
        r: 1.0,
        eps: 0.02,
    };
    let options = SynthesisOptions { dt: 2e-3, ..SynthesisOptions::default() };
    let report = run_boundary_pipeline(&task, &options, 20).unwrap();
    let u = &report.control.control;
    assert_eq!(u.start_value(), 0.0);
    assert!((u.end_value() - 0.3).abs() < 1e-12);
    assert!(u.max_rate() <= 1.0);
    assert!(report.induction_fidelity > 0.97, "{}", report.induction_fidelity);
    assert!((report.boundary_fidelity - report.induction_fidelity).abs() < 1e-10);
    assert!(report.added_infidelity() < 1e-3);
    assert!(report.checkpoint_deviation < 1e-4, "{}", report.checkpoint_deviation);
    assert!(report.distance_minus <= report.distance + 1e-12);
}

#[test]
fn auxiliary_horizon_scales_inversely_with_the_bound() {
    let (g, mesh, params, chi_bar) = coarse_star();
    let f = FormFamily::assemble(&g, &mesh, &params, &theta_from_chi(&g, &chi_bar)).unwrap();
    let eig = family_eigen(&f, 0.0, 0.0).unwrap();
    let options = SynthesisOptions { dt: 2e-3, ..SynthesisOptions::default() };
    let scaled: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&r| {
            let task = TransferTask { family: &f, u0: 0.0, u1: 0.0, source: eig.vector(0), target: eig.vector(1), r, eps: 0.02 };
            let aux = design_pwc_auxiliary(&task, &options).unwrap();
            assert!(aux.converged, "r = {r}: {}", aux.fidelity);
            r * aux.control.horizon()
        })
        .collect();
    for x in &scaled {
        assert!((x / scaled[1] - 1.0).abs() < 0.25, "{scaled:?}");
    }
}

fn run(f: &FormFamily, u: &ControlFunction, psi: &[qgraph_core::c64], dt: f64) -> Vec<qgraph_core::c64> {
    let drive = Drive::Induction(u.clone());
    evolve_with(&Driven::new(f, &drive), psi, 0.0, u.horizon(), dt, |_, _| {}).unwrap()
}

#[test]
fn holding_an_eigenstate_keeps_the_overlap() {
    let (g, mesh, params, chi_bar) = coarse_star();
    let f = FormFamily::assemble(&g, &mesh, &params, &theta_from_chi(&g, &chi_bar)).unwrap();
    let eig = family_eigen(&f, 0.4, 0.0).unwrap();
    let u = ControlFunction::piecewise_constant(vec![0.0, 0.5], vec![0.4]).unwrap();
    let held = append_holds(&u, 0.4, 1.5, 1.0, 0.0).unwrap();
    assert_eq!(held.horizon(), 2.0);
    let psi = eig.vector(1);
    let out = run(&f, &held, &psi, 2e-3);
    assert!((fidelity(&f, &psi, &out) - 1.0).abs() < 1e-10);
    let unchanged = append_holds(&u, 0.4, 0.0, 1.0, 0.0).unwrap();
    assert_eq!(unchanged.breakpoints(), u.breakpoints());
    assert_eq!(unchanged.constant_values(), u.constant_values());
}

#[test]
fn short_hold_costs_little_fidelity() {
    let (g, mesh, params, chi_bar) = coarse_star();
    let f = FormFamily::assemble(&g, &mesh, &params, &theta_from_chi(&g, &chi_bar)).unwrap();
    let eig = family_eigen(&f, 0.0, 0.0).unwrap();
    let task = TransferTask { family: &f, u0: 0.0, u1: 0.0, source: eig.vector(0), target: eig.vector(1), r: 1.0, eps: 0.02 };
    let options = SynthesisOptions { dt: 2e-3, ..SynthesisOptions::default() };
    let smooth = design_smooth(&task, &options).unwrap();
    let held = append_holds(&smooth.control, 0.0, 1e-2, 1.0, 0.0).unwrap();
    let fa = fidelity(&f, &task.target, &run(&f, &smooth.control, &task.source, options.dt));
    let fb = fidelity(&f, &task.target, &run(&f, &held, &task.source, options.dt));
    assert!((fa - smooth.fidelity).abs() < 1e-12);
    assert!((fa - fb).abs() <= 1e-3, "{fa} vs {fb}");
}
