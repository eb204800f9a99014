//! Convergence of sawtooth-lifted induction dynamics to the auxiliary dynamics.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{ControlFunction, ControlKind};
use crate::error::{Error, Result};
use crate::fem::FormFamily;
use crate::propagator::{propagator_on_grid, step_grid, Drive, Driven};
use crate::spectral::{equivalence_constant, family_eigen, semibound, ScaleSpace};

/// `‖H_a(t) - H_b(t)‖_{+,-}` for two drives of the same family.
pub fn hamiltonian_distance(family: &FormFamily, a: &Drive, b: &Drive, t: f64, space: &ScaleSpace) -> Result<f64> {
    let (a1, b1) = a.coefficients(t)?;
    let (a2, b2) = b.coefficients(t)?;
    let x = family.evaluate(a1, b1);
    let y = family.evaluate(a2, b2);
    let d: Vec<c64> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
    space.opnorm_hermitian(family.dense(&d).as_ref())
}

/// Pieces of the coarsest common refinement of `{kT/n}` and the breakpoints of `v`.
pub fn refinement(v: &ControlFunction, n: usize) -> Vec<f64> {
    let horizon = v.horizon();
    let tol = 1e-12 * horizon.max(1.0);
    let mut points: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
    points.extend_from_slice(v.breakpoints());
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() <= tol);
    *points.last_mut().unwrap() = horizon;
    points
}

/// Sawtooth `u_n = u₀ + ∫_{t_j}^t v` on each piece `[t_j, t_{j+1})` of the refinement.
pub fn lift_to_sawtooth(v: &ControlFunction, u0: f64, n: usize) -> Result<ControlFunction> {
    if v.kind() != ControlKind::PiecewiseConstant {
        return Err(Error::schema("v", "sawtooth lift needs a piecewise-constant control"));
    }
    if n == 0 {
        return Err(Error::schema("n", "partition needs at least one interval"));
    }
    let points = refinement(v, n);
    let mut slope = Vec::with_capacity(points.len() - 1);
    for w in points.windows(2) {
        slope.push(v.value(0.5 * (w[0] + w[1]))?);
    }
    let start = vec![u0; slope.len()];
    let out = ControlFunction::piecewise_linear(points, start, slope)?;
    match v.rate_bound() {
        Some(r) => out.with_rate_bound(r),
        None => Ok(out),
    }
}

/// `∫ |f - g|` over `[0, T]` by composite Simpson on the merged breakpoint grid.
pub fn l1_distance(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, breakpoints: &[f64], per_piece: usize) -> f64 {
    let m = 2 * per_piece.max(1);
    let mut total = 0.0;
    for w in breakpoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = (b - a) / m as f64;
        // one-sided evaluation keeps the integrand inside the piece
        let eval = |t: f64| (f(t) - g(t)).abs();
        let inner = |k: usize| a + h * k as f64;
        let mut s = eval(a + 1e-13 * h) + eval(b - 1e-13 * h);
        for k in 1..m {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * eval(inner(k));
        }
        total += s * h / 3.0;
    }
    total
}

fn merge(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().chain(b).copied().collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|x, y| (*x - *y).abs() <= 1e-13);
    out
}

#[derive(Debug, Clone, Copy)]
pub struct StabilityOptions {
    pub dt: f64,
    pub probes: usize,
    pub seed: u64,
    /// Probe states are drawn from this many lowest eigenmodes.
    pub probe_modes: usize,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self { dt: 1e-3, probes: 8, seed: 0, probe_modes: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub n: usize,
    /// `‖U_n - U_0‖` in `B(H₊, H₋)`.
    pub lhs: f64,
    /// `max_φ ‖(U_n - U_0) φ‖_M / ‖φ‖₊` over probes.
    pub strong: f64,
    pub rhs: f64,
    /// `‖u_n - u₀‖_{L¹}`, `‖u_n² - u₀²‖_{L¹}`, `‖u_n' - v‖_{L¹}`.
    pub coefficient_distances: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    /// `‖K₁‖`, `‖K₂‖`, `‖W‖` in `B(H₊, H₋)`.
    pub block_norms: [f64; 3],
    pub fitted_constant: f64,
    pub proof_constant: f64,
    pub equivalence: f64,
    pub rate_bound: f64,
    /// Least-squares slope of `log LHS` against `log n`.
    pub slope: f64,
    pub shift: f64,
}

impl StabilityReport {
    /// Strong distances never grow by more than `jitter` between consecutive `n`.
    pub fn strong_monotone(&self, jitter: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].strong <= (1.0 + jitter) * w[0].strong)
    }
}

/// Least-squares slope of `y` against `x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Compares `U_n` (induction drive with sawtooth `u_n`) against `U_0` (auxiliary drive `(u₀, v)`)
/// over `[0, T]` for each `n`.
pub fn stability_experiment(
    family: &FormFamily,
    u0: f64,
    v: &ControlFunction,
    ns: &[usize],
    options: &StabilityOptions,
) -> Result<StabilityReport> {
    let values = v.constant_values().ok_or_else(|| Error::schema("v", "auxiliary control must be piecewise constant"))?;
    if ns.is_empty() {
        return Err(Error::schema("n", "no partition sizes given"));
    }
    let horizon = v.horizon();
    let vmax = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let nmin = *ns.iter().min().unwrap();
    let u_span = vmax * horizon / nmin as f64;
    let us = [u0, u0 + 0.5 * u_span, u0 + u_span];
    let vs: Vec<f64> = std::iter::once(0.0).chain(values.iter().copied()).collect();
    let shift = semibound(family, &us, &vs)?;
    let space = ScaleSpace::from_family(family, u0, 0.0, shift)?;

    let k1 = space.opnorm_hermitian(family.dense(&family.k1()).as_ref())?;
    let k2 = space.opnorm_hermitian(family.dense(&family.k2()).as_ref())?;
    let w = space.opnorm_hermitian(family.dense(&family.potential_values()).as_ref())?;

    let mut forms = Vec::new();
    for &u in &us {
        for &b in &vs {
            forms.push(family.dense(&family.evaluate(u, b)));
        }
    }
    let equivalence = equivalence_constant(&space, &forms)?;
    let mut rate_bound: f64 = 0.0;
    for &u in &us {
        let d = family.magnetic_derivative(u, 1);
        rate_bound = rate_bound.max(vmax * space.opnorm_hermitian(family.dense(&d).as_ref())?);
    }
    let proof_constant = 2.0 * equivalence.powi(4) * (equivalence * equivalence * rate_bound * horizon / 4.0).exp();

    let eig = family_eigen(family, u0, 0.0)?;
    let modes = options.probe_modes.min(family.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let probes: Vec<Vec<c64>> = (0..options.probes.max(1))
        .map(|_| {
            let coef: Vec<c64> = (0..modes).map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let mut x = vec![c64::new(0.0, 0.0); family.dim()];
            for (k, c) in coef.iter().enumerate() {
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi += c * eig.vectors[(i, k)];
                }
            }
            let s = space.norm_plus(&x);
            x.into_iter().map(|z| z / s).collect()
        })
        .collect();

    let aux = Drive::Auxiliary { base: u0, potential: v.clone() };
    let mass = family.mass();
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let saw = lift_to_sawtooth(v, u0, n)?;
        let grid = step_grid(&merge(saw.breakpoints(), v.breakpoints()), 0.0, horizon, options.dt);
        let induction = Drive::Induction(saw.clone());
        let un = propagator_on_grid(&Driven::new(family, &induction), &grid)?;
        let uz = propagator_on_grid(&Driven::new(family, &aux), &grid)?;
        let diff = &un - &uz;
        let form = Mat::from_fn(diff.nrows(), diff.ncols(), |i, j| diff[(i, j)] * mass[i]);
        let lhs = space.opnorm(form.as_ref())?;
        let mut strong: f64 = 0.0;
        for p in &probes {
            let y = &diff * Mat::from_fn(p.len(), 1, |i, _| p[i]);
            let yv: Vec<c64> = (0..y.nrows()).map(|i| y[(i, 0)]).collect();
            strong = strong.max(family.norm(&yv));
        }
        let bps = saw.breakpoints();
        let d1 = l1_distance(|t| saw.value(t).unwrap(), |_| u0, bps, 4);
        let d2 = l1_distance(|t| saw.value(t).unwrap().powi(2), |_| u0 * u0, bps, 4);
        let d3 = l1_distance(|t| saw.eval(t).unwrap().1, |t| v.value(t).unwrap(), bps, 4);
        let rhs = (k1 * d1 + k2 * d2 + w * d3).sqrt();
        rows.push(StabilityRow { n, lhs, strong, rhs, coefficient_distances: [d1, d2, d3] });
    }
    let fitted_constant = rows.iter().map(|r| r.lhs / r.rhs).fold(0.0, f64::max);
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.lhs).collect();
    let slope = if rows.len() > 1 { loglog_slope(&xs, &ys) } else { f64::NAN };
    Ok(StabilityReport {
        rows,
        block_norms: [k1, k2, w],
        fitted_constant,
        proof_constant,
        equivalence,
        rate_bound,
        slope,
        shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> ControlFunction {
        ControlFunction::piecewise_constant(vec![0.0, 0.3, 1.0], vec![0.5, 0.2]).unwrap()
    }

    #[test]
    fn sawtooth_matches_pieces() {
        let v = square();
        let u = lift_to_sawtooth(&v, 0.1, 4).unwrap();
        assert_eq!(u.breakpoints(), &[0.0, 0.25, 0.3, 0.5, 0.75, 1.0]);
        let (val, rate) = u.eval(0.28).unwrap();
        assert!((val - (0.1 + 0.5 * 0.03)).abs() < 1e-14);
        assert_eq!(rate, 0.5);
        assert!((u.value(0.3).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sawtooth_l1_bound() {
        let v = square();
        for n in [1, 3, 8, 64] {
            let u = lift_to_sawtooth(&v, 0.0, n).unwrap();
            let d = l1_distance(|t| u.value(t).unwrap(), |_| 0.0, u.breakpoints(), 2);
            let tau = 1.0 / n as f64;
            assert!(d <= 0.5 * 0.5 * tau * tau * (n + 1) as f64 + 1e-14);
        }
    }

    #[test]
    fn one_interval_is_the_plain_lift() {
        let v = ControlFunction::piecewise_constant(vec![0.0, 2.0], vec![0.3]).unwrap();
        let u = lift_to_sawtooth(&v, 1.0, 1).unwrap();
        assert!((u.end_value() - 1.6).abs() < 1e-14);
    }

    #[test]
    fn simpson_is_exact_on_quadratics() {
        let d = l1_distance(|t| t * t, |_| 0.0, &[0.0, 0.5, 2.0], 1);
        assert!((d - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [4.0, 8.0, 16.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.0)).collect();
        assert!((loglog_slope(&x, &y) + 1.0).abs() < 1e-12);
    }
}
