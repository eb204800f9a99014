//! Crank–Nicolson propagation of `i M ψ' = H(t) ψ` for time-dependent forms.

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef};

use crate::control::ControlFunction;
use crate::error::{Error, Result};
use crate::fem::{FormFamily, SparsePattern};
use crate::spectral::ScaleSpace;

/// Dense propagators are refused above this many unknowns.
pub const DENSE_PROPAGATOR_LIMIT: usize = 4000;

/// How the coefficients `(a, b)` of `K(a, b)` depend on time.
#[derive(Debug, Clone, PartialEq)]
pub enum Drive {
    /// Induction picture: `a = u(t)`, `b = u'(t)`.
    Induction(ControlFunction),
    /// Auxiliary system: `a = u₀` fixed, `b = v(t)`.
    Auxiliary { base: f64, potential: ControlFunction },
    /// Time-independent coefficients on `[0, horizon]`.
    Static { u: f64, v: f64, horizon: f64 },
}

impl Drive {
    pub fn horizon(&self) -> f64 {
        match self {
            Drive::Induction(c) => c.horizon(),
            Drive::Auxiliary { potential, .. } => potential.horizon(),
            Drive::Static { horizon, .. } => *horizon,
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Drive::Induction(c) => c.breakpoints().to_vec(),
            Drive::Auxiliary { potential, .. } => potential.breakpoints().to_vec(),
            Drive::Static { horizon, .. } => vec![0.0, *horizon],
        }
    }

    /// `(a, b)` at time `t` (right limits at breakpoints).
    pub fn coefficients(&self, t: f64) -> Result<(f64, f64)> {
        match self {
            Drive::Induction(c) => c.eval(t),
            Drive::Auxiliary { base, potential } => Ok((*base, potential.value(t)?)),
            Drive::Static { u, v, horizon } => {
                if t < -1e-12 || t > horizon + 1e-12 * horizon.max(1.0) {
                    return Err(Error::OutOfHorizon { t, horizon: *horizon });
                }
                Ok((*u, *v))
            }
        }
    }

    /// `(a', b')` at time `t`.
    pub fn rates(&self, t: f64) -> Result<(f64, f64)> {
        match self {
            Drive::Induction(c) => Ok((c.eval(t)?.1, c.second_rate(t)?)),
            Drive::Auxiliary { potential, .. } => Ok((0.0, potential.eval(t)?.1)),
            Drive::Static { .. } => Ok((0.0, 0.0)),
        }
    }

    /// Interior points where `(a, b)` fails to be continuously differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Drive::Induction(c) => c.kinks(),
            Drive::Auxiliary { potential, .. } => potential.kinks(),
            Drive::Static { .. } => Vec::new(),
        }
    }

    fn constant_on_piece(&self, t_mid: f64) -> bool {
        match self {
            Drive::Static { .. } => true,
            Drive::Auxiliary { potential, .. } => potential.constant_values().is_some() && t_mid.is_finite(),
            Drive::Induction(c) => match c.kind() {
                crate::control::ControlKind::PiecewiseConstant => true,
                crate::control::ControlKind::PiecewiseLinear => {
                    c.eval(t_mid).map(|(_, slope)| slope == 0.0).unwrap_or(false)
                }
                crate::control::ControlKind::Smooth => false,
            },
        }
    }
}

/// A time-dependent Hermitian form on a fixed sparsity pattern with lumped mass.
pub trait HamiltonianPath {
    fn pattern(&self) -> &SparsePattern;
    fn mass(&self) -> &[f64];
    /// Points where the coefficients may be discontinuous; steps never straddle them.
    fn breakpoints(&self) -> Vec<f64>;
    fn values_at(&self, t: f64) -> Result<Vec<c64>>;
    /// True when the form is constant between the breakpoints around `t`.
    fn constant_near(&self, _t: f64) -> bool {
        false
    }
}

/// A [`FormFamily`] driven by a [`Drive`].
#[derive(Debug, Clone, Copy)]
pub struct Driven<'a> {
    pub family: &'a FormFamily,
    pub drive: &'a Drive,
}

impl<'a> Driven<'a> {
    pub fn new(family: &'a FormFamily, drive: &'a Drive) -> Self {
        Self { family, drive }
    }
}

impl HamiltonianPath for Driven<'_> {
    fn pattern(&self) -> &SparsePattern {
        self.family.pattern()
    }

    fn mass(&self) -> &[f64] {
        self.family.mass()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.drive.breakpoints()
    }

    fn values_at(&self, t: f64) -> Result<Vec<c64>> {
        let (a, b) = self.drive.coefficients(t)?;
        Ok(self.family.evaluate(a, b))
    }

    fn constant_near(&self, t: f64) -> bool {
        self.drive.constant_on_piece(t)
    }
}

/// Steps `(t_k, t_{k+1})` covering `[s, t]`, uniform within each piece, never crossing a breakpoint.
pub fn step_grid(breakpoints: &[f64], s: f64, t: f64, dt: f64) -> Vec<(f64, f64)> {
    let mut marks = vec![s];
    marks.extend(breakpoints.iter().copied().filter(|&b| b > s && b < t));
    marks.push(t);
    let mut steps = Vec::new();
    for w in marks.windows(2) {
        let len = w[1] - w[0];
        if len <= 1e-14 * t.abs().max(1.0) {
            continue;
        }
        let count = (len / dt).ceil().max(1.0) as usize;
        for k in 0..count {
            let a = w[0] + len * k as f64 / count as f64;
            let b = if k + 1 == count { w[1] } else { w[0] + len * (k + 1) as f64 / count as f64 };
            steps.push((a, b));
        }
    }
    steps
}

/// Crank–Nicolson integrator bound to one sparsity pattern.
pub struct CrankNicolson<'p, P: HamiltonianPath + ?Sized> {
    path: &'p P,
    symbolic: SymbolicLu<usize>,
    cached: Option<(f64, f64, Lu<usize, c64>, Vec<c64>)>,
}

impl<'p, P: HamiltonianPath + ?Sized> CrankNicolson<'p, P> {
    pub fn new(path: &'p P) -> Result<Self> {
        let symbolic = SymbolicLu::try_new(path.pattern().symbolic().as_ref())
            .map_err(|e| Error::Numerical(format!("symbolic factorisation failed: {e:?}")))?;
        Ok(Self { path, symbolic, cached: None })
    }

    fn factor(&mut self, t0: f64, t1: f64) -> Result<()> {
        let h = t1 - t0;
        let mid = 0.5 * (t0 + t1);
        if let Some((ch, cmid, _, _)) = &self.cached {
            let same_len = (ch - h).abs() <= 1e-14 * h.abs().max(1.0);
            if same_len && (*cmid == mid || (self.path.constant_near(mid) && self.path.constant_near(*cmid) && self.same_piece(*cmid, mid))) {
                return Ok(());
            }
        }
        let k = self.path.values_at(mid)?;
        let pattern = self.path.pattern();
        let mass = self.path.mass();
        let scale = c64::new(0.0, 0.5 * h);
        let mut plus: Vec<c64> = k.iter().map(|z| scale * z).collect();
        let minus: Vec<c64> = k.iter().map(|z| -scale * z).collect();
        for (i, m) in mass.iter().enumerate() {
            plus[pattern.diag_index(i)] += m;
        }
        let mut minus = minus;
        for (i, m) in mass.iter().enumerate() {
            minus[pattern.diag_index(i)] += m;
        }
        let matrix = pattern.sparse(plus);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), matrix.as_ref())
            .map_err(|e| Error::Numerical(format!("Crank–Nicolson factorisation failed: {e:?}")))?;
        self.cached = Some((h, mid, lu, minus));
        Ok(())
    }

    fn same_piece(&self, a: f64, b: f64) -> bool {
        let bps = self.path.breakpoints();
        let ia = bps.partition_point(|&x| x <= a);
        let ib = bps.partition_point(|&x| x <= b);
        ia == ib
    }

    /// Advances `psi` from `t0` to `t1` in one step.
    pub fn step(&mut self, psi: &mut [c64], t0: f64, t1: f64) -> Result<()> {
        self.factor(t0, t1)?;
        let (_, _, lu, minus) = self.cached.as_ref().expect("factored");
        let rhs = self.path.pattern().matvec(minus, psi);
        let mut col = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        lu.solve_in_place(col.as_mut());
        for (i, p) in psi.iter_mut().enumerate() {
            *p = col[(i, 0)];
        }
        if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("non-finite state at t = {t1}")));
        }
        Ok(())
    }

    /// Advances every column of `states` from `t0` to `t1`.
    pub fn step_columns(&mut self, states: &mut Mat<c64>, t0: f64, t1: f64) -> Result<()> {
        self.factor(t0, t1)?;
        let (_, _, lu, minus) = self.cached.as_ref().expect("factored");
        let mut rhs = apply_columns(self.path.pattern(), minus, states.as_ref());
        lu.solve_in_place(rhs.as_mut());
        *states = rhs;
        Ok(())
    }
}

fn apply_columns(pattern: &SparsePattern, values: &[c64], x: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::<c64>::zeros(x.nrows(), x.ncols());
    for (k, (r, c)) in pattern.entries().enumerate() {
        let v = values[k];
        for j in 0..x.ncols() {
            out[(r, j)] += v * x[(c, j)];
        }
    }
    out
}

fn mass_norm(mass: &[f64], x: &[c64]) -> f64 {
    x.iter().zip(mass).map(|(z, m)| z.norm_sqr() * m).sum::<f64>().sqrt()
}

/// Propagates `psi0` over `[s, t]`, calling `observe(time, state)` at `s` and after every step.
pub fn evolve_with<P: HamiltonianPath + ?Sized>(
    path: &P,
    psi0: &[c64],
    s: f64,
    t: f64,
    dt: f64,
    mut observe: impl FnMut(f64, &[c64]),
) -> Result<Vec<c64>> {
    if psi0.len() != path.mass().len() {
        return Err(Error::schema("state", "dimension does not match the discretisation"));
    }
    if !(dt > 0.0) || !(t >= s) {
        return Err(Error::schema("dt", "time step must be positive and t ≥ s"));
    }
    let mut cn = CrankNicolson::new(path)?;
    let mut psi = psi0.to_vec();
    observe(s, &psi);
    for (a, b) in step_grid(&path.breakpoints(), s, t, dt) {
        cn.step(&mut psi, a, b)?;
        observe(b, &psi);
    }
    Ok(psi)
}

/// Trajectory record of [`evolve`].
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<Vec<c64>>,
    /// `max_k |‖ψ_k‖_M - ‖ψ_0‖_M|`.
    pub norm_drift: f64,
}

impl EvolutionResult {
    pub fn last(&self) -> &[c64] {
        self.states.last().expect("non-empty trajectory")
    }
}

/// Propagates and records every `record_every`-th step (and the final state).
pub fn evolve<P: HamiltonianPath + ?Sized>(
    path: &P,
    psi0: &[c64],
    s: f64,
    t: f64,
    dt: f64,
    record_every: usize,
) -> Result<EvolutionResult> {
    let mass = path.mass();
    let n0 = mass_norm(mass, psi0);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut drift: f64 = 0.0;
    let mut k = 0usize;
    let every = record_every.max(1);
    let last = evolve_with(path, psi0, s, t, dt, |time, psi| {
        drift = drift.max((mass_norm(mass, psi) - n0).abs());
        if k % every == 0 {
            times.push(time);
            states.push(psi.to_vec());
        }
        k += 1;
    })?;
    if times.last() != Some(&t) {
        times.push(t);
        states.push(last);
    }
    Ok(EvolutionResult { times, states, norm_drift: drift })
}

/// Dense propagator `U(t, s)` column by column.
pub fn propagator_matrix<P: HamiltonianPath + ?Sized>(path: &P, s: f64, t: f64, dt: f64) -> Result<Mat<c64>> {
    let n = path.mass().len();
    if n > DENSE_PROPAGATOR_LIMIT {
        return Err(Error::MemoryBudget { dofs: n, limit: DENSE_PROPAGATOR_LIMIT });
    }
    let mut cn = CrankNicolson::new(path)?;
    let mut u = Mat::<c64>::identity(n, n);
    for (a, b) in step_grid(&path.breakpoints(), s, t, dt) {
        cn.step_columns(&mut u, a, b)?;
    }
    Ok(u)
}

/// Dense propagator on an explicit step grid.
pub fn propagator_on_grid<P: HamiltonianPath + ?Sized>(path: &P, steps: &[(f64, f64)]) -> Result<Mat<c64>> {
    let n = path.mass().len();
    if n > DENSE_PROPAGATOR_LIMIT {
        return Err(Error::MemoryBudget { dofs: n, limit: DENSE_PROPAGATOR_LIMIT });
    }
    let mut cn = CrankNicolson::new(path)?;
    let mut u = Mat::<c64>::identity(n, n);
    for &(a, b) in steps {
        cn.step_columns(&mut u, a, b)?;
    }
    Ok(u)
}

/// Energy-norm growth along a trajectory against the exponential bounds
/// `‖ψ(t)‖₊ ≤ e^{(3/2)∫C} ‖ψ₀‖₊` and `‖ψ(t)‖₋ ≤ e^{(1/2)∫C} ‖ψ₀‖₋`.
#[derive(Debug, Clone)]
pub struct SimonReport {
    pub times: Vec<f64>,
    /// `C(τ) = ‖Â^{-1/2} Ȧ Â^{-1/2}‖₂` at each sample.
    pub rate: Vec<f64>,
    pub integral: Vec<f64>,
    pub plus_lhs: Vec<f64>,
    pub plus_rhs: Vec<f64>,
    pub minus_lhs: Vec<f64>,
    pub minus_rhs: Vec<f64>,
    /// `min (rhs - lhs) / rhs` over samples after the first, for each norm.
    pub plus_margin: f64,
    pub minus_margin: f64,
}

pub fn simon_bound_check(
    family: &FormFamily,
    drive: &Drive,
    psi0: &[c64],
    s: f64,
    t: f64,
    m: f64,
    dt: f64,
    samples: usize,
) -> Result<SimonReport> {
    if let Some(k) = drive.kinks().into_iter().find(|&k| k > s && k < t) {
        return Err(Error::NotDifferentiable(k));
    }
    let samples = samples.max(2);
    let times: Vec<f64> = (0..=samples).map(|k| s + (t - s) * k as f64 / samples as f64).collect();
    let path = Driven::new(family, drive);
    let w = family.potential_values();
    let mut psi = psi0.to_vec();
    let mut rate = Vec::with_capacity(times.len());
    let mut plus_lhs = Vec::new();
    let mut minus_lhs = Vec::new();
    for (k, &tau) in times.iter().enumerate() {
        if k > 0 {
            psi = evolve_with(&path, &psi, times[k - 1], tau, dt, |_, _| {})?;
        }
        let (a, b) = drive.coefficients(tau)?;
        let (da, db) = drive.rates(tau)?;
        let space = ScaleSpace::new(family.dense(&family.evaluate(a, b)).as_ref(), family.mass(), m)?;
        let dk = family.magnetic_derivative(a, 1);
        let adot: Vec<c64> = dk.iter().zip(&w).map(|(x, y)| x * da + y * db).collect();
        rate.push(if da == 0.0 && db == 0.0 { 0.0 } else { space.opnorm_hermitian(family.dense(&adot).as_ref())? });
        plus_lhs.push(space.norm_plus(&psi));
        minus_lhs.push(space.norm_minus(&psi));
    }
    let mut integral = vec![0.0; times.len()];
    for k in 1..times.len() {
        integral[k] = integral[k - 1] + 0.5 * (rate[k] + rate[k - 1]) * (times[k] - times[k - 1]);
    }
    let plus_rhs: Vec<f64> = integral.iter().map(|i| (1.5 * i).exp() * plus_lhs[0]).collect();
    let minus_rhs: Vec<f64> = integral.iter().map(|i| (0.5 * i).exp() * minus_lhs[0]).collect();
    let margin = |lhs: &[f64], rhs: &[f64]| lhs.iter().zip(rhs).skip(1).map(|(l, r)| (r - l) / r).fold(f64::INFINITY, f64::min);
    Ok(SimonReport {
        plus_margin: margin(&plus_lhs, &plus_rhs),
        minus_margin: margin(&minus_lhs, &minus_rhs),
        times,
        rate,
        integral,
        plus_lhs,
        plus_rhs,
        minus_lhs,
        minus_rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Mesh;
    use crate::graph::{QuantumGraph, QuasiDelta};
    use crate::potential::EdgePotential;
    use crate::spectral::family_eigen;

    fn interval(n: usize) -> FormFamily {
        let g = QuantumGraph::interval(std::f64::consts::PI).unwrap();
        FormFamily::assemble(&g, &Mesh::uniform(&g, n).unwrap(), &QuasiDelta::uniform(&g, 0.0).unwrap(), &EdgePotential::zero(&g))
            .unwrap()
    }

    #[test]
    fn grid_respects_breakpoints() {
        let steps = step_grid(&[0.0, 0.3, 1.0], 0.0, 1.0, 0.25);
        assert!(steps.iter().any(|&(a, _)| a == 0.3));
        assert!(steps.iter().all(|&(a, b)| b - a <= 0.25 + 1e-15));
        assert_eq!(steps.last().unwrap().1, 1.0);
        assert!(step_grid(&[0.0, 1.0], 0.5, 0.5, 0.1).is_empty());
    }

    #[test]
    fn zero_time_is_identity() {
        let f = interval(10);
        let d = Drive::Static { u: 0.0, v: 0.0, horizon: 1.0 };
        let u = propagator_matrix(&Driven::new(&f, &d), 0.4, 0.4, 0.01).unwrap();
        assert!((u - Mat::<c64>::identity(f.dim(), f.dim())).norm_max() == 0.0);
    }

    #[test]
    fn static_eigenstate_acquires_phase() {
        let f = interval(80);
        let eig = family_eigen(&f, 0.0, 0.0).unwrap();
        let psi0 = eig.vector(0);
        let d = Drive::Static { u: 0.0, v: 0.0, horizon: 1.0 };
        let dt = 1e-3;
        let out = evolve(&Driven::new(&f, &d), &psi0, 0.0, 1.0, dt, 1000).unwrap();
        let lambda = eig.values[0];
        let theta = 2.0 * (0.5 * dt * lambda).atan() * 1000.0;
        let expected = c64::new(theta.cos(), -theta.sin());
        let overlap = f.inner(&psi0, out.last());
        assert!((overlap - expected).norm() < 1e-10);
        assert!(out.norm_drift < 1e-12);
    }

    #[test]
    fn rejects_kinked_controls_for_energy_bounds() {
        let f = interval(10);
        let c = ControlFunction::piecewise_linear(vec![0.0, 0.5, 1.0], vec![0.0, 0.5], vec![1.0, 0.0]).unwrap();
        let psi = vec![c64::new(1.0, 0.0); f.dim()];
        let err = simon_bound_check(&f, &Drive::Induction(c), &psi, 0.0, 1.0, 0.0, 0.01, 4).unwrap_err();
        assert!(matches!(err, Error::NotDifferentiable(_)));
    }
}
