//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use qgraph_core::boundary::{partial_cayley, vertex_projector, vertex_unitary, CAYLEY_GAP_TOL};
use qgraph_core::fem::{FormFamily, Mesh};
use qgraph_core::gauge::{build_gauge, verify_form_equivalence};
use qgraph_core::propagator::{evolve, propagator_matrix, simon_bound_check, Drive, Driven};
use qgraph_core::spectral::{family_eigen, generalized_eigenvalues_lumped, semibound};
use qgraph_core::stability::{stability_experiment, StabilityOptions};
use qgraph_core::synthesis::{
    design_pwc_auxiliary, design_smooth, run_boundary_pipeline, sawtooth_stage, BoundaryTask, SynthesisOptions,
    TransferTask,
};
use qgraph_core::{c64, theta_from_chi, ControlFunction, EdgePotential, IncidencePhases, QuantumGraph, QuasiDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPECTRAL_REL_TOL: f64 = 1e-5;
const HALVING_RATIO: f64 = 4.0;
const HALVING_SLACK: f64 = 0.5;
const SPECTRAL_SECONDS: f64 = 10.0;

const VERTEX_REL_TOL: f64 = 1e-4;
const FLUX_FACTOR: f64 = 10.0;

const CAYLEY_DRAWS: usize = 1000;
const CAYLEY_TOL: f64 = 1e-12;

const GAUGE_TOL: f64 = 1e-10;

const NORM_TOL: f64 = 1e-10;
const COMPOSITION_TOL: f64 = 1e-8;
const MIN_ORDER: f64 = 1.8;

const SLOPE_RANGE: (f64, f64) = (-1.4, -0.6);
const STRONG_JITTER: f64 = 0.1;
const STABILITY_SECONDS: f64 = 600.0;

const TRANSFER_EPS: f64 = 0.01;
const MAX_SAWTOOTH: usize = 256;
const ADDED_INFIDELITY: f64 = 1e-3;
const CONTROL_SECONDS: f64 = 1800.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn star(lengths: &[f64], delta: f64) -> (QuantumGraph, QuasiDelta) {
    let g = QuantumGraph::star(lengths).unwrap();
    let p = QuasiDelta::uniform(&g, delta).unwrap();
    (g, p)
}

fn benchmark(elements: usize) -> (QuantumGraph, Mesh, QuasiDelta, IncidencePhases, FormFamily) {
    let (g, p) = star(&[1.0, 1.0], 0.4);
    let mesh = Mesh::uniform(&g, elements).unwrap();
    let chi_bar = IncidencePhases::new(&g, vec![vec![0.0, PI]]).unwrap();
    let f = FormFamily::assemble(&g, &mesh, &p, &theta_from_chi(&g, &chi_bar)).unwrap();
    (g, mesh, p, chi_bar, f)
}

fn plain(g: &QuantumGraph, p: &QuasiDelta, elements: usize) -> FormFamily {
    FormFamily::assemble(g, &Mesh::uniform(g, elements).unwrap(), p, &EdgePotential::zero(g)).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let g = QuantumGraph::interval(PI).unwrap();
    let p = QuasiDelta::uniform(&g, 0.0).unwrap();
    let errors = |n: usize| -> Vec<f64> {
        let f = plain(&g, &p, n);
        let values = generalized_eigenvalues_lumped(f.dense(&f.evaluate(0.0, 0.0)).as_ref(), f.mass()).unwrap();
        (1..=5).map(|k| ((values[k - 1] - (k * k) as f64) / (k * k) as f64).abs()).collect()
    };
    let fine = errors(2000);
    let elapsed = start.elapsed().as_secs_f64();
    let coarse = errors(1000);
    let worst = fine.iter().copied().fold(0.0, f64::max);
    let ratios: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| c / f).collect();
    let ratio_ok = ratios.iter().all(|r| (r - HALVING_RATIO).abs() <= HALVING_SLACK);
    check(
        worst <= SPECTRAL_REL_TOL && ratio_ok && elapsed <= SPECTRAL_SECONDS,
        format!(
            "spectral correctness: max rel err {worst:.2e} (tol {SPECTRAL_REL_TOL:e}), halving ratios {} (4.0 +/- 0.5), {elapsed:.1}s",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if fa * f(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

fn criterion_2() -> Outcome {
    let delta: f64 = 0.4;
    let (g, p) = star(&[1.0, 1.0], delta);
    let f = plain(&g, &p, 400);
    let eig = family_eigen(&f, 0.0, 0.0).unwrap();
    let c = 2.0 * (0.5 * delta).tan();
    let secular = |k: f64| k.tan() + 2.0 * k / c;
    let h = f.mesh().max_spacing();
    let mut worst_rel: f64 = 0.0;
    let mut worst_flux: f64 = 0.0;
    for j in 0..3 {
        let lo = (j as f64 + 0.5) * PI + 1e-12;
        let k = bisect(secular, lo, lo + PI / 2.0 - 2e-12);
        let lambda = k * k;
        let level = (0..eig.values.len())
            .min_by(|&a, &b| (eig.values[a] - lambda).abs().total_cmp(&(eig.values[b] - lambda).abs()))
            .unwrap();
        worst_rel = worst_rel.max((eig.values[level] - lambda).abs() / lambda);
        worst_flux = worst_flux.max(f.vertex_flux_residual(&g, &eig.vector(level)));
    }
    check(
        worst_rel <= VERTEX_REL_TOL && worst_flux <= FLUX_FACTOR * h,
        format!(
            "quasi-delta vertex law: symmetric levels rel err {worst_rel:.2e} (tol {VERTEX_REL_TOL:e}), flux residual {worst_flux:.2e} (limit {:.2e})",
            FLUX_FACTOR * h
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..CAYLEY_DRAWS {
        let d = rng.random_range(1..=6);
        let chi: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let delta = rng.random_range(-3.0..3.0);
        match partial_cayley(vertex_unitary(&chi, delta).as_ref(), CAYLEY_GAP_TOL) {
            Ok(blocks) => {
                let p = vertex_projector(&chi);
                let coef = -(0.5 * delta).tan();
                for i in 0..d {
                    for j in 0..d {
                        worst = worst.max((blocks.cayley[(i, j)] - p[(i, j)] * coef).norm());
                    }
                }
            }
            Err(_) => failures += 1,
        }
    }
    let chi = [0.0, 0.9, 2.3];
    let blocks = partial_cayley(vertex_unitary(&chi, PI / 2.0).as_ref(), CAYLEY_GAP_TOL).unwrap();
    let p = vertex_projector(&chi);
    let mut quarter: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            quarter = quarter.max((blocks.cayley[(i, j)] + p[(i, j)]).norm());
        }
    }
    check(
        failures == 0 && worst <= CAYLEY_TOL && quarter <= CAYLEY_TOL,
        format!(
            "Cayley identity: {CAYLEY_DRAWS} draws, max entry err {worst:.2e}, delta = pi/2 block err {quarter:.2e} (tol {CAYLEY_TOL:e}), {failures} failures"
        ),
    )
}

fn criterion_4() -> Outcome {
    let (g, p) = star(&[1.0, 1.0], 0.4);
    let mesh = Mesh::uniform(&g, 200).unwrap();
    let chi_bar = IncidencePhases::new(&g, vec![vec![0.0, PI / 2.0]]).unwrap();
    let theta = theta_from_chi(&g, &chi_bar);
    let u = 1.0;
    let boundary = QuasiDelta::new(&g, vec![0.4], chi_bar.scaled(u)).unwrap();
    let fb = FormFamily::assemble(&g, &mesh, &boundary, &EdgePotential::zero(&g)).unwrap();
    let fi = FormFamily::assemble(&g, &mesh, &p, &theta).unwrap();
    let j = build_gauge(&g, &mesh, boundary.chi(), p.chi(), &theta, u).unwrap();
    let r = verify_form_equivalence(&fb, &fi, &j, u).unwrap();
    check(
        r.form_residual <= GAUGE_TOL && r.spectral_residual <= GAUGE_TOL && r.mass_residual <= GAUGE_TOL,
        format!(
            "gauge equivalence: conjugation residual {:.2e}, spectral residual {:.2e}, mass residual {:.2e} (tol {GAUGE_TOL:e})",
            r.form_residual, r.spectral_residual, r.mass_residual
        ),
    )
}

fn criterion_5() -> Outcome {
    let (_, _, _, _, f) = benchmark(100);
    let eig = family_eigen(&f, 0.0, 0.0).unwrap();
    let mut psi0 = vec![c64::new(0.0, 0.0); f.dim()];
    for (k, w) in [(0, c64::new(0.8, 0.0)), (1, c64::new(0.0, 0.5)), (3, c64::new(0.3, -0.2))] {
        for (x, y) in psi0.iter_mut().zip(eig.vector(k)) {
            *x += w * y;
        }
    }
    let v = ControlFunction::piecewise_constant(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![0.9, -0.4, 0.6, -0.8]).unwrap();
    let u = qgraph_core::synthesis::lift_and_smooth(&v, 0.1, 0.05).unwrap();
    let drive = Drive::Induction(u);
    let path = Driven::new(&f, &drive);
    let run = evolve(&path, &psi0, 0.0, 1.0, 1e-3, 1000).unwrap();
    let drift = run.norm_drift / f.norm(&psi0);

    let dt = 1e-2;
    let u_rs = propagator_matrix(&path, 0.0, 1.0, dt).unwrap();
    let u_r = propagator_matrix(&path, 0.0, 0.4, dt).unwrap();
    let u_s = propagator_matrix(&path, 0.4, 1.0, dt).unwrap();
    let composed = &u_s * &u_r;
    let mut defect: f64 = 0.0;
    for i in 0..f.dim() {
        for j in 0..f.dim() {
            defect = defect.max((composed[(i, j)] - u_rs[(i, j)]).norm());
        }
    }

    let level = 1;
    let lambda = eig.values[level];
    let phi = eig.vector(level);
    let horizon = 1.0;
    let static_drive = Drive::Static { u: 0.0, v: 0.0, horizon };
    let steps = [0.02, 0.01, 0.005];
    let errors: Vec<f64> = steps
        .iter()
        .map(|&dt| {
            let out = evolve(&Driven::new(&f, &static_drive), &phi, 0.0, horizon, dt, usize::MAX).unwrap();
            let overlap = f.inner(&phi, out.last());
            (overlap - c64::new((lambda * horizon).cos(), -(lambda * horizon).sin())).norm()
        })
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        drift <= NORM_TOL && defect <= COMPOSITION_TOL && order >= MIN_ORDER,
        format!(
            "propagator axioms: norm drift {drift:.2e} (tol {NORM_TOL:e}), composition defect {defect:.2e} (tol {COMPOSITION_TOL:e}), phase order {order:.3} (min {MIN_ORDER})"
        ),
    )
}

fn criterion_6() -> Outcome {
    let (_, _, _, _, f) = benchmark(100);
    let ramp = ControlFunction::piecewise_linear(vec![0.0, 1.0], vec![0.0], vec![0.8]).unwrap();
    let drive = Drive::Induction(ramp);
    let shift = semibound(&f, &[0.0, 0.4, 0.8], &[0.0, 0.8]).unwrap();
    let eig = family_eigen(&f, 0.0, 0.0).unwrap();
    let mut psi0 = vec![c64::new(0.0, 0.0); f.dim()];
    for k in 0..4 {
        for (x, y) in psi0.iter_mut().zip(eig.vector(k)) {
            *x += y * (1.0 / (k + 1) as f64);
        }
    }
    let r = simon_bound_check(&f, &drive, &psi0, 0.0, 1.0, shift, 1e-3, 20).unwrap();
    check(
        r.plus_margin >= 0.0 && r.minus_margin >= 0.0,
        format!(
            "energy bounds on a linear ramp: plus margin {:.3e}, minus margin {:.3e}, int C = {:.3}",
            r.plus_margin,
            r.minus_margin,
            r.integral.last().unwrap()
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let (_, _, _, _, f) = benchmark(200);
    let v = ControlFunction::piecewise_constant(vec![0.0, 0.3, 0.7, 1.0], vec![0.8, 0.2, 0.6]).unwrap();
    let ns = [4, 8, 16, 32, 64, 128];
    let r = stability_experiment(&f, 0.0, &v, &ns, &StabilityOptions::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let bounded = r.rows.iter().all(|row| row.lhs <= r.proof_constant * row.rhs);
    let slope_ok = r.slope >= SLOPE_RANGE.0 && r.slope <= SLOPE_RANGE.1;
    let monotone = r.strong_monotone(STRONG_JITTER);
    check(
        bounded && r.fitted_constant <= r.proof_constant && slope_ok && monotone && elapsed <= STABILITY_SECONDS,
        format!(
            "stability: {} DOFs, fitted L {:.3e} <= proof L {:.3e}, slope {:.3} in [{}, {}], strong monotone {monotone}, {elapsed:.0}s",
            f.dim(),
            r.fitted_constant,
            r.proof_constant,
            r.slope,
            SLOPE_RANGE.0,
            SLOPE_RANGE.1
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let (g, mesh, p, chi_bar, f) = benchmark(200);
    let eig = family_eigen(&f, 0.0, 0.0).unwrap();
    let r = 1.0;
    let task = TransferTask { family: &f, u0: 0.0, u1: 0.0, source: eig.vector(0), target: eig.vector(1), r, eps: TRANSFER_EPS };
    let options = SynthesisOptions { max_sawtooth: MAX_SAWTOOTH, ..SynthesisOptions::default() };
    let aux = design_pwc_auxiliary(&task, &options).unwrap();
    let (n, saw) = sawtooth_stage(&task, &aux, &options).unwrap();
    let smooth = design_smooth(&task, &options).unwrap();
    let u = &smooth.control;
    let pinned = u.start_value() == task.u0 && (u.end_value() - task.u1).abs() <= 1e-12;
    let rate_ok = u.max_rate() <= r;
    let boundary = BoundaryTask {
        graph: &g,
        mesh: &mesh,
        base: &p,
        chi_bar: &chi_bar,
        u0: 0.0,
        u1: 0.0,
        source_level: 0,
        target_level: 1,
        r,
        eps: TRANSFER_EPS,
    };
    let pipeline = run_boundary_pipeline(&boundary, &options, 50).unwrap();
    let added = pipeline.added_infidelity().max(pipeline.induction_fidelity - pipeline.boundary_fidelity);
    let elapsed = start.elapsed().as_secs_f64();
    check(
        aux.infidelity() <= TRANSFER_EPS
            && saw.infidelity() <= TRANSFER_EPS
            && n <= MAX_SAWTOOTH
            && smooth.infidelity() <= TRANSFER_EPS
            && pinned
            && rate_ok
            && pipeline.induction_fidelity >= 1.0 - TRANSFER_EPS
            && added <= ADDED_INFIDELITY
            && elapsed <= CONTROL_SECONDS,
        format!(
            "controllability: 1-F pwc {:.2e}, sawtooth(n={n}) {:.2e}, smooth {:.2e} (eps {TRANSFER_EPS}), endpoints pinned {pinned}, max |u'| {:.3} <= r {r}, boundary added {added:.2e} (tol {ADDED_INFIDELITY:e}), checkpoint deviation {:.2e}, {elapsed:.0}s",
            aux.infidelity(),
            saw.infidelity(),
            smooth.infidelity(),
            u.max_rate(),
            pipeline.checkpoint_deviation
        ),
    )
}

fn manifests() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests")
}

fn csv_bodies(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_qgraph");
    let tmp = tempfile::tempdir().unwrap();
    let runs = [
        ("spectrum", "spectrum.json"),
        ("gauge-check", "gauge_check.json"),
        ("evolve", "evolve.json"),
        ("stability", "stability.json"),
        ("control", "control.json"),
        ("boundary-control", "boundary_control.json"),
    ];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (command, manifest) in runs {
        let mut bodies = Vec::new();
        for (k, threads) in ["1", "2"].iter().enumerate() {
            let out = tmp.path().join(format!("{command}-{k}"));
            let status = Command::new(bin)
                .args([command, "--manifest"])
                .arg(manifests().join(manifest))
                .arg("--out")
                .arg(&out)
                .args(["--threads", threads])
                .status()
                .unwrap();
            if !status.success() {
                mismatched.push(format!("{command} exited with {status}"));
            }
            bodies.push(csv_bodies(&out));
        }
        files += bodies[0].len();
        if bodies[0].is_empty() || bodies[0] != bodies[1] {
            mismatched.push(command.to_string());
        }
    }
    check(
        mismatched.is_empty(),
        format!("CLI determinism: {} manifests, {files} CSV files byte-identical across repeat runs; mismatches: {mismatched:?}", runs.len()),
    )
}

fn main() {
    let criteria: [(usize, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    let mut total = Duration::ZERO;
    for (k, run) in criteria {
        if only.is_some_and(|o| o != k) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        total += start.elapsed();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {k}: {verdict} | {}", outcome.detail);
        if !outcome.pass {
            failed += 1;
        }
    }
    println!("acceptance: {failed} failed, {:.0}s", total.as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
