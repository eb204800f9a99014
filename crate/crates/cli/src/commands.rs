//! One function per subcommand.

use std::path::Path;

use qgraph_core::fem::{FormFamily, Mesh};
use qgraph_core::gauge::{build_gauge, verify_form_equivalence};
use qgraph_core::graph::{PhaseMap, QuasiDelta};
use qgraph_core::potential::{theta_from_chi, EdgePotential};
use qgraph_core::propagator::{evolve_with, Drive, Driven};
use qgraph_core::spectral::{family_eigen, family_eigenvalues};
use qgraph_core::stability::{stability_experiment, StabilityOptions};
use qgraph_core::synthesis::{
    design_pwc_auxiliary, design_smooth, run_boundary_pipeline, sawtooth_stage, BoundaryTask, SynthesisOptions,
    SynthesizedControl, TransferTask,
};
use qgraph_core::{c64, ControlFunction, ControlKind, IncidencePhases};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::manifest::{decode, phases, Command, ControlSpec, Loaded};
use crate::output::{header, num, write_csv, write_report};
use crate::RunError;

pub fn execute(loaded: &Loaded, out: &Path, threads: usize) -> Result<(), RunError> {
    let params = if loaded.params.is_null() { json!({}) } else { loaded.params.clone() };
    let report = match loaded.command {
        Command::Spectrum => spectrum(loaded, decode(params, "params")?, out, threads)?,
        Command::Evolve => evolve(loaded, decode(params, "params")?, out)?,
        Command::GaugeCheck => gauge_check(loaded, decode(params, "params")?, out, threads)?,
        Command::Stability => stability(loaded, decode(params, "params")?, out)?,
        Command::Control => control(loaded, decode(params, "params")?, out)?,
        Command::BoundaryControl => boundary_control(loaded, decode(params, "params")?, out)?,
    };
    let mut report = report;
    report["command"] = json!(loaded.command.name());
    write_report(out, &report)
}

fn core<T>(r: qgraph_core::Result<T>) -> Result<T, RunError> {
    r.map_err(RunError::core)
}

struct Setup {
    params: QuasiDelta,
    mesh: Mesh,
    chi_bar: IncidencePhases,
}

fn setup(loaded: &Loaded, chi_bar: &Option<PhaseMap>) -> Result<Setup, RunError> {
    let (_, params) = loaded.spec.build().map_err(|e| RunError::core(e).under("graph"))?;
    let mesh = core(Mesh::uniform(&loaded.graph, loaded.numerics.elements_per_edge))?;
    let chi_bar = phases(&loaded.graph, chi_bar, "params.chi_bar")?;
    Ok(Setup { params, mesh, chi_bar })
}

impl Setup {
    fn induction(&self, loaded: &Loaded) -> Result<FormFamily, RunError> {
        core(FormFamily::assemble(&loaded.graph, &self.mesh, &self.params, &theta_from_chi(&loaded.graph, &self.chi_bar)))
    }
}

/// Runs `work` on every item with up to `threads` workers, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, work: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let chunk = items.len().div_ceil(threads.max(1)).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| scope.spawn(|| c.iter().map(&work).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn zero() -> f64 {
    0.0
}

fn zeros() -> Vec<f64> {
    vec![0.0]
}

fn ten() -> usize {
    10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumParams {
    #[serde(default)]
    chi_bar: Option<PhaseMap>,
    #[serde(default = "zeros")]
    u: Vec<f64>,
    #[serde(default = "zeros")]
    v: Vec<f64>,
    #[serde(default = "ten")]
    count: usize,
}

fn spectrum(loaded: &Loaded, p: SpectrumParams, out: &Path, threads: usize) -> Result<Value, RunError> {
    let s = setup(loaded, &p.chi_bar)?;
    let family = s.induction(loaded)?;
    let entries: Vec<(f64, f64)> = p.u.iter().flat_map(|&u| p.v.iter().map(move |&v| (u, v))).collect();
    let results = parallel_map(&entries, threads, |&(u, v)| family_eigenvalues(&family, u, v));
    let mut rows = Vec::new();
    for (&(u, v), values) in entries.iter().zip(results) {
        for (k, lambda) in core(values)?.iter().take(p.count).enumerate() {
            rows.push(vec![num(u), num(v), k.to_string(), num(*lambda)]);
        }
    }
    write_csv(out, "spectrum.csv", &header(&["u", "v", "level", "eigenvalue"]), &rows)?;
    Ok(json!({ "dofs": family.dim(), "entries": entries.len(), "levels": p.count }))
}

#[derive(Debug, Deserialize)]
#[serde(tag = "picture", rename_all = "kebab-case", deny_unknown_fields)]
enum DriveSpec {
    Induction { control: ControlSpec },
    Auxiliary { base: f64, control: ControlSpec },
    Static { u: f64, v: f64, horizon: f64 },
}

impl DriveSpec {
    fn build(&self) -> Result<Drive, RunError> {
        Ok(match self {
            DriveSpec::Induction { control } => Drive::Induction(control.build("params.drive.control")?),
            DriveSpec::Auxiliary { base, control } => {
                Drive::Auxiliary { base: *base, potential: control.build("params.drive.control")? }
            }
            DriveSpec::Static { u, v, horizon } => {
                if !(*horizon > 0.0) {
                    return Err(RunError::schema("params.drive.horizon", "horizon must be positive"));
                }
                Drive::Static { u: *u, v: *v, horizon: *horizon }
            }
        })
    }
}

fn four() -> usize {
    4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvolveParams {
    #[serde(default)]
    chi_bar: Option<PhaseMap>,
    drive: DriveSpec,
    #[serde(default)]
    initial: usize,
    #[serde(default = "four")]
    levels: usize,
    #[serde(default = "ten")]
    record_every: usize,
}

fn evolve(loaded: &Loaded, p: EvolveParams, out: &Path) -> Result<Value, RunError> {
    let s = setup(loaded, &p.chi_bar)?;
    let family = s.induction(loaded)?;
    let drive = p.drive.build()?;
    let (a0, _) = core(drive.coefficients(0.0))?;
    let eig = core(family_eigen(&family, a0, 0.0))?;
    let levels = p.levels.min(family.dim());
    if p.initial >= family.dim() {
        return Err(RunError::schema("params.initial", "level exceeds the number of unknowns"));
    }
    let basis: Vec<Vec<c64>> = (0..levels).map(|k| eig.vector(k)).collect();
    let psi0 = eig.vector(p.initial);
    let norm0 = family.norm(&psi0);
    let mut rows = Vec::new();
    let mut record = |t: f64, psi: &[c64]| -> Result<(), RunError> {
        let (a, b) = core(drive.coefficients(t))?;
        let mut row = vec![num(t), num(a), num(b), num(family.norm(psi) - norm0)];
        row.extend(basis.iter().map(|phi| num(family.inner(phi, psi).norm_sqr())));
        rows.push(row);
        Ok(())
    };
    let every = p.record_every.max(1);
    let mut calls = 0usize;
    let mut last_time = f64::NAN;
    let mut failure = None;
    let last = core(evolve_with(&Driven::new(&family, &drive), &psi0, 0.0, drive.horizon(), loaded.numerics.dt, |t, psi| {
        if calls % every == 0 && failure.is_none() {
            failure = record(t, psi).err();
            last_time = t;
        }
        calls += 1;
    }))?;
    if let Some(e) = failure {
        return Err(e);
    }
    if last_time != drive.horizon() {
        record(drive.horizon(), &last)?;
    }
    let step = calls - 1;
    let mut names = vec!["t".to_string(), "a".into(), "b".into(), "norm_drift".into()];
    names.extend((0..levels).map(|k| format!("population_{k}")));
    write_csv(out, "trajectory.csv", &names, &rows)?;
    let drift = (family.norm(&last) - norm0).abs();
    Ok(json!({ "dofs": family.dim(), "steps": step, "horizon": drive.horizon(), "norm_drift": drift }))
}

fn one() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaugeParams {
    chi_bar: PhaseMap,
    #[serde(default = "one")]
    u: Vec<f64>,
    #[serde(default = "ten")]
    count: usize,
}

fn gauge_check(loaded: &Loaded, p: GaugeParams, out: &Path, threads: usize) -> Result<Value, RunError> {
    let s = setup(loaded, &Some(p.chi_bar))?;
    let graph = &loaded.graph;
    let theta = theta_from_chi(graph, &s.chi_bar);
    let induction = s.induction(loaded)?;
    let results = parallel_map(&p.u, threads, |&u| -> qgraph_core::Result<_> {
        let chi = s.params.chi().plus(&s.chi_bar.scaled(u));
        let bparams = s.params.with_chi(chi);
        let boundary = FormFamily::assemble(graph, &s.mesh, &bparams, &EdgePotential::zero(graph))?;
        let j = build_gauge(graph, &s.mesh, bparams.chi(), s.params.chi(), &theta, u)?;
        let report = verify_form_equivalence(&boundary, &induction, &j, u)?;
        let lb = family_eigenvalues(&boundary, 0.0, 0.0)?;
        let li = family_eigenvalues(&induction, u, 0.0)?;
        Ok((report, lb, li))
    });
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (&u, result) in p.u.iter().zip(results) {
        let (report, lb, li) = core(result)?;
        for k in 0..p.count.min(lb.len()) {
            let residual = (lb[k] - li[k]).abs() / lb[k].abs().max(1.0);
            rows.push(vec![num(u), k.to_string(), num(lb[k]), num(li[k]), num(residual)]);
        }
        entries.push(json!({
            "u": u,
            "form_residual": report.form_residual,
            "mass_residual": report.mass_residual,
            "spectral_residual": report.spectral_residual,
        }));
    }
    write_csv(out, "spectrum.csv", &header(&["u", "level", "boundary", "induction", "residual"]), &rows)?;
    Ok(json!({ "dofs": induction.dim(), "checks": entries }))
}

fn default_ns() -> Vec<usize> {
    vec![4, 8, 16, 32, 64, 128]
}

fn eight() -> usize {
    8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StabilityParams {
    #[serde(default)]
    chi_bar: Option<PhaseMap>,
    #[serde(default = "zero")]
    u0: f64,
    v: ControlSpec,
    #[serde(default = "default_ns")]
    n: Vec<usize>,
    #[serde(default = "eight")]
    probes: usize,
    #[serde(default = "eight")]
    probe_modes: usize,
}

fn stability(loaded: &Loaded, p: StabilityParams, out: &Path) -> Result<Value, RunError> {
    let s = setup(loaded, &p.chi_bar)?;
    let family = s.induction(loaded)?;
    let v = p.v.build("params.v")?;
    if v.kind() != ControlKind::PiecewiseConstant {
        return Err(RunError::schema("params.v.kind", "auxiliary control must be piecewise-constant"));
    }
    if let Some(i) = p.n.iter().position(|&n| n == 0) {
        return Err(RunError::schema(format!("params.n[{i}]"), "partition sizes must be positive"));
    }
    let options =
        StabilityOptions { dt: loaded.numerics.dt, probes: p.probes, seed: loaded.numerics.seed, probe_modes: p.probe_modes };
    let report = core(stability_experiment(&family, p.u0, &v, &p.n, &options))?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let [d1, d2, d3] = r.coefficient_distances;
            vec![r.n.to_string(), num(r.lhs), num(r.strong), num(r.rhs), num(r.lhs / r.rhs), num(d1), num(d2), num(d3)]
        })
        .collect();
    write_csv(
        out,
        "stability.csv",
        &header(&["n", "lhs", "strong", "rhs", "ratio", "dist_u", "dist_u2", "dist_rate"]),
        &rows,
    )?;
    let [k1, k2, w] = report.block_norms;
    Ok(json!({
        "dofs": family.dim(),
        "block_norms": { "k1": k1, "k2": k2, "w": w },
        "fitted_constant": report.fitted_constant,
        "proof_constant": report.proof_constant,
        "equivalence": report.equivalence,
        "rate_bound": report.rate_bound,
        "slope": report.slope,
        "shift": report.shift,
        "strong_monotone": report.strong_monotone(0.1),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Stage {
    Pwc,
    Sawtooth,
    Smooth,
}

fn all_stages() -> Vec<Stage> {
    vec![Stage::Pwc, Stage::Sawtooth, Stage::Smooth]
}

fn unit() -> f64 {
    1.0
}

fn level_one() -> usize {
    1
}

fn default_eps() -> f64 {
    0.01
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionsSpec {
    depth: Option<f64>,
    smooth_depth: Option<f64>,
    sweep: Option<f64>,
    modes: Option<usize>,
    max_sawtooth: Option<usize>,
    smoothing: Option<f64>,
    ramp_periods: Option<f64>,
}

impl OptionsSpec {
    fn build(&self, dt: f64) -> Result<SynthesisOptions, RunError> {
        let d = SynthesisOptions::default();
        let o = SynthesisOptions {
            dt,
            depth: self.depth.unwrap_or(d.depth),
            smooth_depth: self.smooth_depth.unwrap_or(d.smooth_depth),
            sweep: self.sweep.unwrap_or(d.sweep),
            modes: self.modes.unwrap_or(d.modes),
            max_sawtooth: self.max_sawtooth.unwrap_or(d.max_sawtooth),
            smoothing: self.smoothing.unwrap_or(d.smoothing),
            ramp_periods: self.ramp_periods.unwrap_or(d.ramp_periods),
        };
        for (name, x) in [("depth", o.depth), ("smooth_depth", o.smooth_depth), ("sweep", o.sweep), ("smoothing", o.smoothing), ("ramp_periods", o.ramp_periods)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(RunError::schema(format!("params.options.{name}"), "must be positive"));
            }
        }
        if o.depth >= 0.5 {
            return Err(RunError::schema("params.options.depth", "depth must stay below half the range"));
        }
        if o.smooth_depth > 0.8 {
            return Err(RunError::schema("params.options.smooth_depth", "amplitude must stay below 0.8 r"));
        }
        Ok(o)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlParams {
    #[serde(default)]
    chi_bar: Option<PhaseMap>,
    #[serde(default = "zero")]
    u0: f64,
    #[serde(default = "zero")]
    u1: f64,
    #[serde(default)]
    source: usize,
    #[serde(default = "level_one")]
    target: usize,
    #[serde(default = "unit")]
    r: f64,
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default = "all_stages")]
    stages: Vec<Stage>,
    #[serde(default)]
    options: OptionsSpec,
}

fn check_task(r: f64, eps: f64, source: usize, target: usize, dim: usize) -> Result<(), RunError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(RunError::schema("params.r", "rate bound must be positive"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(RunError::schema("params.eps", "tolerance must lie in (0, 1)"));
    }
    if source >= dim {
        return Err(RunError::schema("params.source", "level exceeds the number of unknowns"));
    }
    if target >= dim {
        return Err(RunError::schema("params.target", "level exceeds the number of unknowns"));
    }
    if source == target {
        return Err(RunError::schema("params.target", "target must differ from source"));
    }
    Ok(())
}

/// `(t, value, rate)` rows describing a control exactly at its nodes.
fn control_rows(c: &ControlFunction) -> Vec<[f64; 3]> {
    let mut rows = Vec::new();
    match c.kind() {
        ControlKind::Smooth => {
            for &t in c.sample_times().unwrap_or(&[]) {
                let (u, du) = c.eval(t).unwrap_or((f64::NAN, f64::NAN));
                rows.push([t, u, du]);
            }
        }
        _ => {
            let bps = c.breakpoints();
            for w in bps.windows(2) {
                let (u, du) = c.eval(w[0]).unwrap_or((f64::NAN, f64::NAN));
                rows.push([w[0], u, du]);
                if c.kind() == ControlKind::PiecewiseLinear {
                    rows.push([w[1], u + du * (w[1] - w[0]), du]);
                }
            }
            if c.kind() == ControlKind::PiecewiseConstant {
                let last = *bps.last().unwrap();
                let (u, du) = c.eval(last).unwrap_or((f64::NAN, f64::NAN));
                rows.push([last, u, du]);
            }
        }
    }
    rows
}

fn stage_json(name: &str, s: &SynthesizedControl, extra: Value) -> Value {
    let mut v = json!({
        "stage": name,
        "fidelity": s.fidelity,
        "infidelity": s.infidelity(),
        "converged": s.converged,
        "horizon": s.control.horizon(),
        "frequency": s.frequency,
        "coupling": s.coupling,
        "amplitude": s.amplitude,
        "max_rate": s.control.max_rate(),
        "start_value": s.control.start_value(),
        "end_value": s.control.end_value(),
    });
    if let (Value::Object(map), Value::Object(more)) = (&mut v, extra) {
        map.extend(more);
    }
    v
}

fn control(loaded: &Loaded, p: ControlParams, out: &Path) -> Result<Value, RunError> {
    let s = setup(loaded, &p.chi_bar)?;
    let family = s.induction(loaded)?;
    check_task(p.r, p.eps, p.source, p.target, family.dim())?;
    let options = p.options.build(loaded.numerics.dt)?;
    let needs_aux = p.stages.iter().any(|s| *s != Stage::Smooth);
    if needs_aux && p.u1 != p.u0 {
        return Err(RunError::schema("params.u1", "pwc and sawtooth stages end at u0"));
    }
    let e0 = core(family_eigen(&family, p.u0, 0.0))?;
    let e1 = core(family_eigen(&family, p.u1, 0.0))?;
    let task = TransferTask {
        family: &family,
        u0: p.u0,
        u1: p.u1,
        source: e0.vector(p.source),
        target: e1.vector(p.target),
        r: p.r,
        eps: p.eps,
    };
    let mut rows = Vec::new();
    let mut stages = Vec::new();
    let mut push_rows = |name: &str, c: &ControlFunction| {
        for [t, u, du] in control_rows(c) {
            rows.push(vec![name.to_string(), num(t), num(u), num(du)]);
        }
    };
    let mut aux = None;
    for stage in &p.stages {
        match stage {
            Stage::Pwc | Stage::Sawtooth if aux.is_none() => aux = Some(core(design_pwc_auxiliary(&task, &options))?),
            _ => {}
        }
        match stage {
            Stage::Pwc => {
                let a = aux.as_ref().unwrap();
                push_rows("pwc", &a.control);
                stages.push(stage_json("pwc", a, json!({})));
            }
            Stage::Sawtooth => {
                let (n, saw) = core(sawtooth_stage(&task, aux.as_ref().unwrap(), &options))?;
                push_rows("sawtooth", &saw.control);
                stages.push(stage_json("sawtooth", &saw, json!({ "n": n })));
            }
            Stage::Smooth => {
                let smooth = core(design_smooth(&task, &options))?;
                push_rows("smooth", &smooth.control);
                stages.push(stage_json("smooth", &smooth, json!({})));
            }
        }
    }
    write_csv(out, "control.csv", &header(&["stage", "t", "value", "rate"]), &rows)?;
    Ok(json!({ "dofs": family.dim(), "r": p.r, "eps": p.eps, "stages": stages }))
}

fn two_hundred() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryParams {
    chi_bar: PhaseMap,
    #[serde(default = "zero")]
    u0: f64,
    #[serde(default = "zero")]
    u1: f64,
    #[serde(default)]
    source: usize,
    #[serde(default = "level_one")]
    target: usize,
    #[serde(default = "unit")]
    r: f64,
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default = "two_hundred")]
    samples: usize,
    #[serde(default)]
    options: OptionsSpec,
}

fn boundary_control(loaded: &Loaded, p: BoundaryParams, out: &Path) -> Result<Value, RunError> {
    let s = setup(loaded, &Some(p.chi_bar))?;
    let dim = loaded.graph.edge_count() * (s.mesh.elements(0).max(1) - 1) + loaded.graph.vertex_count();
    check_task(p.r, p.eps, p.source, p.target, dim)?;
    let options = p.options.build(loaded.numerics.dt)?;
    let task = BoundaryTask {
        graph: &loaded.graph,
        mesh: &s.mesh,
        base: &s.params,
        chi_bar: &s.chi_bar,
        u0: p.u0,
        u1: p.u1,
        source_level: p.source,
        target_level: p.target,
        r: p.r,
        eps: p.eps,
    };
    let report = core(run_boundary_pipeline(&task, &options, p.samples))?;
    let rows: Vec<Vec<String>> = control_rows(&report.control.control)
        .into_iter()
        .map(|[t, u, du]| vec!["smooth".to_string(), num(t), num(u), num(du)])
        .collect();
    write_csv(out, "control.csv", &header(&["stage", "t", "value", "rate"]), &rows)?;
    let traj: Vec<Vec<String>> = report.trajectory.iter().map(|r| r.iter().map(|x| num(*x)).collect()).collect();
    write_csv(out, "trajectory.csv", &header(&["t", "u", "rate", "fidelity"]), &traj)?;
    Ok(json!({
        "dofs": dim,
        "r": p.r,
        "eps": p.eps,
        "control": stage_json("smooth", &report.control, json!({})),
        "induction_fidelity": report.induction_fidelity,
        "boundary_fidelity": report.boundary_fidelity,
        "direct_fidelity": report.direct_fidelity,
        "added_infidelity": report.added_infidelity(),
        "distance": report.distance,
        "distance_minus": report.distance_minus,
        "checkpoint_deviation": report.checkpoint_deviation,
    }))
}
