//! Population transfer between eigenstates with bounded control rate.
//!
//! Three stages: a resonant piecewise-constant auxiliary potential, its sawtooth lift,
//! and a smooth induction control with pinned endpoints.

use std::f64::consts::PI;

use faer::c64;

use crate::control::ControlFunction;
use crate::error::{Error, Result};
use crate::fem::{FormFamily, Mesh};
use crate::gauge::{build_gauge, map_state, BoundaryPicture, Direction};
use crate::graph::{IncidencePhases, QuantumGraph, QuasiDelta};
use crate::potential::{theta_from_chi, EdgePotential};
use crate::propagator::{evolve_with, Drive, Driven, HamiltonianPath};
use crate::spectral::{family_eigen, semibound, GeneralizedEigen, ScaleSpace, ZERO_COUPLING_TOL};
use crate::stability::lift_to_sawtooth;

/// `|⟨a, b⟩_M| / (‖a‖_M ‖b‖_M)`.
pub fn fidelity(family: &FormFamily, a: &[c64], b: &[c64]) -> f64 {
    family.inner(a, b).norm() / (family.norm(a) * family.norm(b))
}

/// `‖a - b‖₋` in a scale space.
pub fn minus_distance(space: &ScaleSpace, a: &[c64], b: &[c64]) -> f64 {
    let d: Vec<c64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    space.norm_minus(&d)
}

/// Transfer `source → target` in the induction picture of `family`.
#[derive(Debug, Clone)]
pub struct TransferTask<'a> {
    pub family: &'a FormFamily,
    pub u0: f64,
    pub u1: f64,
    pub source: Vec<c64>,
    pub target: Vec<c64>,
    /// Bound on `|u'|` and range of the auxiliary potential `v ∈ [0, r]`.
    pub r: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthesisOptions {
    pub dt: f64,
    /// Modulation depth of the auxiliary square wave, as a fraction of `r`.
    pub depth: f64,
    /// Rate amplitude of the smooth stage, as a fraction of `r`.
    pub smooth_depth: f64,
    /// Auxiliary horizon search extends to this multiple of the predicted transfer time.
    pub sweep: f64,
    /// Spectator levels within this many modes are checked for near-resonance.
    pub modes: usize,
    pub max_sawtooth: usize,
    /// Mollifier width as a fraction of the half period.
    pub smoothing: f64,
    /// Shortest end ramp of the smooth stage when `u₁ ≠ u₀`, in drive periods.
    pub ramp_periods: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { dt: 1e-3, depth: 0.4, smooth_depth: 0.2, sweep: 1.6, modes: 12, max_sawtooth: 256, smoothing: 0.1, ramp_periods: 4.0 }
    }
}

/// Outcome of a synthesis stage.
#[derive(Debug, Clone)]
pub struct SynthesizedControl {
    /// The control signal: `v` for the auxiliary stage, `u` otherwise.
    pub control: ControlFunction,
    pub drive: Drive,
    pub fidelity: f64,
    pub converged: bool,
    pub frequency: f64,
    pub coupling: f64,
    pub amplitude: f64,
}

impl SynthesizedControl {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.fidelity
    }
}

fn best_index(eig: &GeneralizedEigen, family: &FormFamily, state: &[c64]) -> usize {
    let n = eig.values.len();
    (0..n)
        .map(|k| (k, family.inner(&eig.vector(k), state).norm()))
        .fold((0, -1.0), |best, (k, o)| if o > best.1 { (k, o) } else { best })
        .0
}

fn diag_element(eig: &GeneralizedEigen, diag: &[f64], a: usize, b: usize) -> c64 {
    (0..diag.len()).map(|i| eig.vectors[(i, a)].conj() * eig.vectors[(i, b)] * diag[i]).sum()
}

fn pattern_element(family: &FormFamily, values: &[c64], eig: &GeneralizedEigen, a: usize, b: usize) -> c64 {
    family.pattern().form(values, &eig.vector(a), &eig.vector(b))
}

/// Largest Rabi rate keeping every other level at least five times detuned.
fn spectator_cap(eig: &GeneralizedEigen, s: usize, t: usize, omega: f64, modes: usize) -> f64 {
    let mut margin = f64::INFINITY;
    for k in 0..modes.min(eig.values.len()) {
        if k == s || k == t {
            continue;
        }
        for level in [s, t] {
            let detuning = ((eig.values[k] - eig.values[level]).abs() - omega).abs();
            margin = margin.min(detuning);
        }
    }
    margin / 5.0
}

/// Square wave `centre ± depth` switching every half period `π/ω`, starting high.
pub fn square_wave(centre: f64, depth: f64, omega: f64, horizon: f64) -> Result<ControlFunction> {
    let half = PI / omega;
    let pieces = (horizon / half).ceil().max(1.0) as usize;
    let mut bps: Vec<f64> = (0..pieces).map(|k| k as f64 * half).collect();
    bps.push(horizon);
    let values = (0..pieces).map(|k| if k % 2 == 0 { centre + depth } else { centre - depth }).collect();
    ControlFunction::piecewise_constant(bps, values)
}

fn simulate<P: HamiltonianPath>(path: &P, family: &FormFamily, task: &TransferTask<'_>, horizon: f64, dt: f64) -> Result<f64> {
    let psi = evolve_with(path, &task.source, 0.0, horizon, dt, |_, _| {})?;
    Ok(fidelity(family, &task.target, &psi))
}

/// Resonant square-wave auxiliary potential `v ∈ [0, r]` at `(u₀, v)`, horizon chosen by sweep.
pub fn design_pwc_auxiliary(task: &TransferTask<'_>, options: &SynthesisOptions) -> Result<SynthesizedControl> {
    let family = task.family;
    let centre = 0.5 * task.r;
    if fidelity(family, &task.source, &task.target) >= 1.0 - 1e-12 {
        let control = ControlFunction::piecewise_constant(vec![0.0, options.dt], vec![centre])?.with_rate_bound(task.r)?;
        let drive = Drive::Auxiliary { base: task.u0, potential: control.clone() };
        let f = simulate(&Driven::new(family, &drive), family, task, options.dt, options.dt)?;
        return Ok(SynthesizedControl { control, drive, fidelity: f, converged: 1.0 - f <= task.eps, frequency: 0.0, coupling: 0.0, amplitude: 0.0 });
    }
    let eig = family_eigen(family, task.u0, centre)?;
    let s = best_index(&eig, family, &task.source);
    let t = best_index(&eig, family, &task.target);
    if s == t {
        return Err(Error::Numerical("source and target resolve to the same level".into()));
    }
    let omega = (eig.values[t] - eig.values[s]).abs();
    let coupling = diag_element(&eig, family.potential(), t, s).norm();
    if coupling < ZERO_COUPLING_TOL {
        return Err(Error::ZeroCoupling(coupling));
    }
    let mut depth = options.depth * task.r;
    let cap = spectator_cap(&eig, s, t, omega, options.modes);
    let rabi = 2.0 * depth * coupling / PI;
    if rabi > cap {
        depth *= cap / rabi;
    }
    let predicted = PI * PI / (4.0 * depth * coupling);
    let t_max = options.sweep * predicted;
    let v = square_wave(centre, depth, omega, t_max)?.with_rate_bound(task.r)?;
    let drive = Drive::Auxiliary { base: task.u0, potential: v.clone() };
    let mut best = (0.0, -1.0);
    evolve_with(&Driven::new(family, &drive), &task.source, 0.0, t_max, options.dt, |time, psi| {
        if time >= 0.25 * predicted {
            let f = fidelity(family, &task.target, psi);
            if f > best.1 {
                best = (time, f);
            }
        }
    })?;
    let control = v.truncated(best.0)?;
    let drive = Drive::Auxiliary { base: task.u0, potential: control.clone() };
    let f = simulate(&Driven::new(family, &drive), family, task, control.horizon(), options.dt)?;
    Ok(SynthesizedControl { control, drive, fidelity: f, converged: 1.0 - f <= task.eps, frequency: omega, coupling, amplitude: depth })
}

/// Sawtooth lifts of the auxiliary control for `n = 4, 8, …`; returns the first that
/// meets the tolerance, or the best one tried.
pub fn sawtooth_stage(task: &TransferTask<'_>, auxiliary: &SynthesizedControl, options: &SynthesisOptions) -> Result<(usize, SynthesizedControl)> {
    let mut best: Option<(usize, SynthesizedControl)> = None;
    let mut n = 4;
    while n <= options.max_sawtooth {
        let u = lift_to_sawtooth(&auxiliary.control, task.u0, n)?;
        let drive = Drive::Induction(u.clone());
        let f = simulate(&Driven::new(task.family, &drive), task.family, task, u.horizon(), options.dt)?;
        let stage = SynthesizedControl {
            control: u,
            drive,
            fidelity: f,
            converged: 1.0 - f <= task.eps,
            frequency: auxiliary.frequency,
            coupling: auxiliary.coupling,
            amplitude: auxiliary.amplitude,
        };
        let done = stage.converged;
        if best.as_ref().map_or(true, |(_, b)| stage.fidelity > b.fidelity) {
            best = Some((n, stage));
        }
        if done {
            break;
        }
        n *= 2;
    }
    best.ok_or_else(|| Error::schema("max_sawtooth", "no partition size tried"))
}

const BUMP_MASS: f64 = 0.443_993_816_168_079_4;

fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp() / BUMP_MASS
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// C^∞ step: 0 for `s ≤ 0`, 1 for `s ≥ 1`, flat at both ends. Returns value and derivative.
pub fn smooth_step(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0);
    }
    let f = (-1.0 / s).exp();
    let g = (-1.0 / (1.0 - s)).exp();
    let df = f / (s * s);
    let dg = -g / ((1.0 - s) * (1.0 - s));
    let sum = f + g;
    (f / sum, (df * g - f * dg) / (sum * sum))
}

/// Continuous lift `U = u₀ + ∫v` of a piecewise-constant `v`, mollified with a bump of half-width
/// `sigma`. Beyond the ends the lift is continued by point reflection through `(0, U(0))` and
/// `(T, U(T))`, so the mollified control keeps both endpoint values, stays inside the range of
/// `U` and satisfies `|u'| ≤ sup|v|`.
pub fn lift_and_smooth(v: &ControlFunction, u0: f64, sigma: f64) -> Result<ControlFunction> {
    let values = v.constant_values().ok_or_else(|| Error::schema("v", "piecewise-constant control expected"))?;
    let bps = v.breakpoints().to_vec();
    let horizon = v.horizon();
    let shortest = bps.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(sigma > 0.0) || 2.0 * sigma > shortest {
        return Err(Error::MollifierTooWide { sigma, piece: shortest });
    }
    let mut lift = vec![u0];
    for (j, w) in bps.windows(2).enumerate() {
        lift.push(lift[j] + values[j] * (w[1] - w[0]));
    }
    let end = *lift.last().unwrap();
    let raw = |t: f64| -> (f64, f64) {
        let j = bps.partition_point(|&b| b <= t).saturating_sub(1).min(values.len() - 1);
        (lift[j] + values[j] * (t - bps[j]), values[j])
    };
    let extended = |t: f64| -> (f64, f64) {
        if t < 0.0 {
            let (u, du) = raw(-t);
            (2.0 * u0 - u, du)
        } else if t > horizon {
            let (u, du) = raw(2.0 * horizon - t);
            (2.0 * end - u, du)
        } else {
            raw(t)
        }
    };
    let rule = gauss_legendre(16);
    let mollify = |t: f64| -> (f64, f64) {
        let mut cuts = vec![-sigma, -0.5 * sigma, 0.0, 0.5 * sigma, sigma];
        cuts.extend(bps.iter().map(|k| t - k).filter(|s| s.abs() < sigma));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let (mut u, mut du, mut mass) = (0.0, 0.0, 0.0);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            for &(x, wt) in &rule {
                let s = a + half * (x + 1.0);
                let weight = wt * half * bump(s / sigma);
                let (val, rate) = extended(t - s);
                u += weight * val;
                du += weight * rate;
                mass += weight;
            }
        }
        (u / mass, du / mass)
    };
    let step = sigma / 8.0;
    let count = (horizon / step).ceil() as usize;
    let mut times = Vec::with_capacity(count + 1);
    let mut us = Vec::with_capacity(count + 1);
    let mut rates = Vec::with_capacity(count + 1);
    for k in 0..=count {
        let t = if k == count { horizon } else { horizon * k as f64 / count as f64 };
        let (u, du) = mollify(t);
        times.push(t);
        us.push(u);
        rates.push(du);
    }
    us[0] = u0;
    *us.last_mut().unwrap() = end;
    ControlFunction::sampled(times, us, rates)
}

/// Ends `control` at `u1`: a C^∞ ramp from the current value and rate, at rate at most `r` and
/// lasting at least `min_ramp`, followed by a hold of length `hold`.
pub fn append_holds(control: &ControlFunction, u1: f64, hold: f64, r: f64, min_ramp: f64) -> Result<ControlFunction> {
    let (start, rate0) = control.eval(control.horizon())?;
    let delta = u1 - start;
    let mut out = control.clone();
    if delta.abs() > 1e-12 || rate0.abs() > 1e-12 {
        let times = control.sample_times().ok_or_else(|| Error::schema("control", "ramps need a smooth control"))?;
        let spacing = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let profile = |s: f64, duration: f64| -> (f64, f64) {
            let (b, db) = smooth_step(s);
            let carry = rate0 * duration;
            (delta * b + carry * s * (1.0 - b), (delta * db + carry * (1.0 - b - s * db)) / duration)
        };
        let mut duration = (2.2 * delta.abs() / r).max(min_ramp).max(4.0 * rate0.abs() * spacing);
        let count = |d: f64| (d / spacing).ceil().max(16.0) as usize;
        loop {
            let n = count(duration);
            let worst = (0..=4 * n).map(|k| profile(k as f64 / (4 * n) as f64, duration).1.abs()).fold(0.0, f64::max);
            if worst <= r {
                break;
            }
            duration *= 1.25;
            if duration > 1e6 {
                return Err(Error::Numerical("ramp cannot meet the rate bound".into()));
            }
        }
        let n = count(duration);
        let t0 = control.horizon();
        let mut ts = times.to_vec();
        let mut vs = Vec::with_capacity(ts.len() + n);
        let mut rs = Vec::with_capacity(ts.len() + n);
        for &t in times {
            let (u, du) = control.eval(t)?;
            vs.push(u);
            rs.push(du);
        }
        *rs.last_mut().unwrap() = rate0;
        for k in 1..=n {
            let s = k as f64 / n as f64;
            let (p, dp) = profile(s, duration);
            ts.push(t0 + duration * s);
            vs.push(start + p);
            rs.push(dp);
        }
        *vs.last_mut().unwrap() = u1;
        *rs.last_mut().unwrap() = 0.0;
        out = ControlFunction::sampled(ts, vs, rs)?;
    }
    if hold > 0.0 {
        out = out.append_constant(hold, u1)?;
    }
    out.with_rate_bound(r)
}

/// Zero-mean resonant square-wave rate lifted to a smooth control `u` with `u(0) = u₀`,
/// `|u'| ≤ r`, and endpoints at `u₁` (closing ramp appended).
pub fn design_smooth(task: &TransferTask<'_>, options: &SynthesisOptions) -> Result<SynthesizedControl> {
    let family = task.family;
    let eig = family_eigen(family, task.u0, 0.0)?;
    let s = best_index(&eig, family, &task.source);
    let t = best_index(&eig, family, &task.target);
    if s == t {
        return Err(Error::Numerical("source and target resolve to the same level".into()));
    }
    let signed = eig.values[t] - eig.values[s];
    let omega = signed.abs();
    let k1 = family.magnetic_derivative(task.u0, 1);
    let w = diag_element(&eig, family.potential(), t, s);
    let m = pattern_element(family, &k1, &eig, t, s);
    let coupling = (w + c64::new(0.0, signed.signum() / omega) * m).norm();
    if coupling < ZERO_COUPLING_TOL {
        return Err(Error::ZeroCoupling(coupling));
    }
    let mut depth = options.smooth_depth * task.r;
    let cap = spectator_cap(&eig, s, t, omega, options.modes);
    if 2.0 * depth * coupling / PI > cap {
        depth *= cap / (2.0 * depth * coupling / PI);
    }
    let predicted = PI * PI / (4.0 * depth * coupling);
    let period = 2.0 * PI / omega;
    let periods = (predicted / period).ceil().max(1.0);
    let horizon = periods * period;
    let nominal = depth * predicted / horizon;
    let sigma = options.smoothing * 0.5 * period;

    let build = |amplitude: f64| -> Result<ControlFunction> {
        let rate = square_wave(0.0, amplitude, omega, horizon)?;
        let u = lift_and_smooth(&rate, task.u0, sigma)?;
        let ramp = if (task.u1 - task.u0).abs() > 1e-12 { options.ramp_periods } else { 0.5 };
        append_holds(&u, task.u1, 0.0, task.r, ramp * period)
    };
    let score = |amplitude: f64| -> Result<(f64, ControlFunction)> {
        let u = build(amplitude)?;
        let drive = Drive::Induction(u.clone());
        let f = simulate(&Driven::new(family, &drive), family, task, u.horizon(), options.dt)?;
        Ok((f, u))
    };
    let mut best: Option<(f64, f64, ControlFunction)> = None;
    let consider = |factor: f64, best: &mut Option<(f64, f64, ControlFunction)>| -> Result<()> {
        let amplitude = (nominal * factor).min(0.8 * task.r);
        let (f, u) = score(amplitude)?;
        if best.as_ref().map_or(true, |b| f > b.0) {
            *best = Some((f, factor, u));
        }
        Ok(())
    };
    for k in 0..7 {
        consider(0.7 + 0.1 * k as f64, &mut best)?;
    }
    let centre = best.as_ref().unwrap().1;
    for offset in [-0.05, -0.025, 0.025, 0.05] {
        consider(centre + offset, &mut best)?;
    }
    let (f, factor, control) = best.unwrap();
    Ok(SynthesizedControl {
        drive: Drive::Induction(control.clone()),
        control,
        fidelity: f,
        converged: 1.0 - f <= task.eps,
        frequency: omega,
        coupling,
        amplitude: nominal * factor,
    })
}

/// Input of [`run_boundary_pipeline`]: a circuit whose vertex phases move as `χ + u(t) χ̄`.
#[derive(Debug, Clone)]
pub struct BoundaryTask<'a> {
    pub graph: &'a QuantumGraph,
    pub mesh: &'a Mesh,
    /// Couplings `δ` and static phases `χ`.
    pub base: &'a QuasiDelta,
    pub chi_bar: &'a IncidencePhases,
    pub u0: f64,
    pub u1: f64,
    pub source_level: usize,
    pub target_level: usize,
    pub r: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub control: SynthesizedControl,
    /// Fidelity in the induction picture.
    pub induction_fidelity: f64,
    /// Fidelity of `J(T)† U(T, 0) J(0) Ψ₀` against `Ψ₁`.
    pub boundary_fidelity: f64,
    /// Fidelity of the boundary picture integrated directly with moving vertex phases.
    pub direct_fidelity: f64,
    /// `min_φ ‖Ψ₁ - e^{iφ} J(T)† U(T, 0) Φ₀‖_M`.
    pub distance: f64,
    /// The same distance in the `‖·‖₋` norm of the boundary Hamiltonian at `u₁`.
    pub distance_minus: f64,
    /// `max ‖J(t)† φ(t) - ψ(t)‖_M` over the sampled checkpoints, with `φ` integrated in the
    /// induction picture and `ψ` in the boundary picture.
    pub checkpoint_deviation: f64,
    /// `(t, u, u', fidelity)` samples along the induction trajectory.
    pub trajectory: Vec<[f64; 4]>,
}

impl PipelineReport {
    /// Extra infidelity of the directly integrated boundary picture.
    pub fn added_infidelity(&self) -> f64 {
        (self.induction_fidelity - self.direct_fidelity).max(0.0)
    }
}

/// Boundary-controlled transfer solved through the induction picture and mapped back.
pub fn run_boundary_pipeline(task: &BoundaryTask<'_>, options: &SynthesisOptions, samples: usize) -> Result<PipelineReport> {
    let graph = task.graph;
    let theta = theta_from_chi(graph, task.chi_bar);
    let static_params = task.base.clone();
    let induction = FormFamily::assemble(graph, task.mesh, &static_params, &theta)?;
    let boundary_at = |u: f64| -> Result<FormFamily> {
        let params = task.base.with_chi(task.base.chi().plus(&task.chi_bar.scaled(u)));
        FormFamily::assemble(graph, task.mesh, &params, &EdgePotential::zero(graph))
    };
    let b0 = boundary_at(task.u0)?;
    let b1 = boundary_at(task.u1)?;
    let e0 = family_eigen(&b0, 0.0, 0.0)?;
    let e1 = family_eigen(&b1, 0.0, 0.0)?;
    if task.source_level >= e0.values.len() || task.target_level >= e1.values.len() {
        return Err(Error::schema("levels", "requested level exceeds the discrete spectrum"));
    }
    let psi0 = e0.vector(task.source_level);
    let psi1 = e1.vector(task.target_level);
    let phases_at = |u: f64| task.base.chi().plus(&task.chi_bar.scaled(u));
    let j0 = build_gauge(graph, task.mesh, &phases_at(task.u0), task.base.chi(), &theta, task.u0)?;
    let j1 = build_gauge(graph, task.mesh, &phases_at(task.u1), task.base.chi(), &theta, task.u1)?;
    let phi0 = map_state(&j0, &psi0, Direction::Forward);
    let phi1 = map_state(&j1, &psi1, Direction::Forward);
    let transfer = TransferTask { family: &induction, u0: task.u0, u1: task.u1, source: phi0.clone(), target: phi1, r: task.r, eps: task.eps };
    let control = design_smooth(&transfer, options)?;
    let u = control.control.clone();
    let horizon = u.horizon();
    let drive = Drive::Induction(u.clone());
    let every = ((horizon / options.dt) as usize / samples.max(1)).max(1);
    let mut trajectory = Vec::new();
    let mut checkpoints = Vec::new();
    let mut k = 0usize;
    let final_state = evolve_with(&Driven::new(&induction, &drive), &phi0, 0.0, horizon, options.dt, |t, psi| {
        if k % every == 0 {
            let (val, rate) = u.eval(t).unwrap_or((f64::NAN, f64::NAN));
            trajectory.push([t, val, rate, fidelity(&induction, &transfer.target, psi)]);
            checkpoints.push((val, psi.to_vec()));
        }
        k += 1;
    })?;
    let induction_fidelity = fidelity(&induction, &transfer.target, &final_state);
    let back = map_state(&j1, &final_state, Direction::Backward);
    let overlap = b1.inner(&psi1, &back);
    let boundary_fidelity = overlap.norm() / (b1.norm(&psi1) * b1.norm(&back));
    let aligned: Vec<c64> = back.iter().map(|z| z * (overlap.conj() / overlap.norm().max(f64::MIN_POSITIVE))).collect();
    let diff: Vec<c64> = psi1.iter().zip(&aligned).map(|(a, b)| a - b).collect();
    let distance = b1.norm(&diff);
    let space = ScaleSpace::from_family(&b1, 0.0, 0.0, semibound(&b1, &[0.0], &[0.0])?)?;
    let distance_minus = minus_distance(&space, &psi1, &aligned);
    let picture = BoundaryPicture::new(graph, task.mesh, task.base, task.chi_bar, &u)?;
    let mut checkpoint_deviation: f64 = 0.0;
    let mut failure = None;
    let mut k = 0usize;
    let direct = evolve_with(&picture, &psi0, 0.0, horizon, options.dt, |_, psi| {
        if k % every == 0 && failure.is_none() {
            let (val, phi) = &checkpoints[k / every];
            match build_gauge(graph, task.mesh, &phases_at(*val), task.base.chi(), &theta, *val) {
                Ok(j) => {
                    let mapped = map_state(&j, phi, Direction::Backward);
                    let d: Vec<c64> = mapped.iter().zip(psi).map(|(a, b)| a - b).collect();
                    checkpoint_deviation = checkpoint_deviation.max(b1.norm(&d));
                }
                Err(e) => failure = Some(e),
            }
        }
        k += 1;
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let direct_fidelity = b1.inner(&psi1, &direct).norm() / (b1.norm(&psi1) * b1.norm(&direct));
    Ok(PipelineReport {
        control,
        induction_fidelity,
        boundary_fidelity,
        direct_fidelity,
        distance,
        distance_minus,
        checkpoint_deviation,
        trajectory,
    })
}
