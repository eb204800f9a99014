//! Generalized eigenproblems, scale norms `‖·‖_±` and operator norms in `B(H₊, H₋)`.

use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::fem::FormFamily;

/// Eigenpairs of `K x = λ M x`, ascending, with `M`-orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<c64>,
}

impl GeneralizedEigen {
    pub fn vector(&self, k: usize) -> Vec<c64> {
        (0..self.vectors.nrows()).map(|i| self.vectors[(i, k)]).collect()
    }
}

fn hermitian_part(a: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

fn symmetric_eig(a: Mat<c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))?;
    let values = (0..eig.S().dim()).map(|k| eig.S()[k].re).collect();
    Ok((values, eig.U().to_owned()))
}

fn check_mass(mass: &[f64]) -> Result<()> {
    match mass.iter().position(|m| !(*m > 0.0)) {
        Some(i) => Err(Error::NotPositiveDefinite(format!("mass entry {i} is {}", mass[i]))),
        None => Ok(()),
    }
}

/// Dense route for a general Hermitian positive definite `M` (Cholesky whitening).
pub fn generalized_eig(k: MatRef<'_, c64>, m: MatRef<'_, c64>) -> Result<GeneralizedEigen> {
    let n = k.nrows();
    if k.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::schema("matrix", "dimension mismatch"));
    }
    let m = hermitian_part(m);
    let llt = m.llt(Side::Lower).map_err(|e| Error::NotPositiveDefinite(format!("{e:?}")))?;
    let l = llt.L();
    let mut tmp = hermitian_part(k);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, tmp.as_mut(), faer::Par::Seq);
    let mut c = tmp.adjoint().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), faer::Par::Seq);
    let (values, w) = symmetric_eig(hermitian_part(c.as_ref()))?;
    let mut vectors = w;
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(l.adjoint(), vectors.as_mut(), faer::Par::Seq);
    Ok(GeneralizedEigen { values, vectors })
}

/// Same problem for a diagonal (lumped) mass.
pub fn generalized_eig_lumped(k: MatRef<'_, c64>, mass: &[f64]) -> Result<GeneralizedEigen> {
    check_mass(mass)?;
    let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let a = Mat::from_fn(k.nrows(), k.ncols(), |i, j| (k[(i, j)] + k[(j, i)].conj()) * (0.5 * s[i] * s[j]));
    let (values, mut vectors) = symmetric_eig(a)?;
    for j in 0..vectors.ncols() {
        for i in 0..vectors.nrows() {
            vectors[(i, j)] *= s[i];
        }
    }
    Ok(GeneralizedEigen { values, vectors })
}

/// Eigenvalues only, diagonal mass.
pub fn generalized_eigenvalues_lumped(k: MatRef<'_, c64>, mass: &[f64]) -> Result<Vec<f64>> {
    check_mass(mass)?;
    let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let a = Mat::from_fn(k.nrows(), k.ncols(), |i, j| (k[(i, j)] + k[(j, i)].conj()) * (0.5 * s[i] * s[j]));
    let values = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))?;
    Ok(values)
}

/// Spectrum of `K(u, v)` for a family.
pub fn family_eigen(family: &FormFamily, u: f64, v: f64) -> Result<GeneralizedEigen> {
    generalized_eig_lumped(family.dense(&family.evaluate(u, v)).as_ref(), family.mass())
}

pub fn family_eigenvalues(family: &FormFamily, u: f64, v: f64) -> Result<Vec<f64>> {
    generalized_eigenvalues_lumped(family.dense(&family.evaluate(u, v)).as_ref(), family.mass())
}

/// Shift `m ≥ 0` with `K(u, v) + m M ≥ 0` on the sampled grid, padded by `1e-6`.
pub fn semibound(family: &FormFamily, us: &[f64], vs: &[f64]) -> Result<f64> {
    let mut lowest = f64::INFINITY;
    for &u in us {
        for &v in vs {
            let values = family_eigenvalues(family, u, v)?;
            lowest = lowest.min(values[0]);
        }
    }
    if lowest < -1e6 {
        return Err(Error::NotSemibounded(lowest));
    }
    Ok((-lowest).max(0.0) + 1e-6)
}

/// Scale of spaces `H₊ ⊂ H ⊂ H₋` built from `A = K_ref + (m + 1) M`.
#[derive(Debug, Clone)]
pub struct ScaleSpace {
    mass: Vec<f64>,
    shift: f64,
    /// Eigenvalues of `Â = M^{-1/2} A M^{-1/2}`, all `≥ 1`.
    values: Vec<f64>,
    vectors: Mat<c64>,
}

impl ScaleSpace {
    pub fn new(k_ref: MatRef<'_, c64>, mass: &[f64], m: f64) -> Result<Self> {
        check_mass(mass)?;
        let s: Vec<f64> = mass.iter().map(|x| 1.0 / x.sqrt()).collect();
        let a = Mat::from_fn(k_ref.nrows(), k_ref.ncols(), |i, j| {
            let shift = if i == j { c64::new(m + 1.0, 0.0) } else { c64::new(0.0, 0.0) };
            (k_ref[(i, j)] + k_ref[(j, i)].conj()) * (0.5 * s[i] * s[j]) + shift
        });
        let (values, vectors) = symmetric_eig(a)?;
        if values[0] <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!("reference operator has eigenvalue {}", values[0])));
        }
        Ok(Self { mass: mass.to_vec(), shift: m, values, vectors })
    }

    /// Scale space of `K(u, v)` from a family.
    pub fn from_family(family: &FormFamily, u: f64, v: f64, m: f64) -> Result<Self> {
        Self::new(family.dense(&family.evaluate(u, v)).as_ref(), family.mass(), m)
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    fn coordinates(&self, x: &[c64]) -> Vec<c64> {
        let y: Vec<c64> = x.iter().zip(&self.mass).map(|(a, m)| a * m.sqrt()).collect();
        (0..self.dim())
            .map(|k| (0..self.dim()).map(|i| self.vectors[(i, k)].conj() * y[i]).sum())
            .collect()
    }

    /// `‖x‖₊ = (x† A x)^{1/2}`.
    pub fn norm_plus(&self, x: &[c64]) -> f64 {
        self.coordinates(x).iter().zip(&self.values).map(|(c, a)| c.norm_sqr() * a).sum::<f64>().sqrt()
    }

    /// `‖x‖₋ = (x† M A^{-1} M x)^{1/2}`.
    pub fn norm_minus(&self, x: &[c64]) -> f64 {
        self.coordinates(x).iter().zip(&self.values).map(|(c, a)| c.norm_sqr() / a).sum::<f64>().sqrt()
    }

    /// `Â^{-1/2} V† M^{-1/2} X M^{-1/2} V Â^{-1/2}` for a form matrix `X`.
    pub fn whiten(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        let n = self.dim();
        let s: Vec<f64> = self.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let scaled = Mat::from_fn(n, n, |i, j| x[(i, j)] * (s[i] * s[j]));
        let mut out = self.vectors.adjoint() * &scaled * &self.vectors;
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] *= 1.0 / (self.values[i] * self.values[j]).sqrt();
            }
        }
        out
    }

    /// `‖X‖_{+,-}`: the largest singular value of the whitened form.
    pub fn opnorm(&self, x: MatRef<'_, c64>) -> Result<f64> {
        let w = self.whiten(x);
        let sv = w.singular_values().map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
        Ok(sv.into_iter().fold(0.0, f64::max))
    }

    /// Operator norm of a Hermitian form (cheaper than the general route).
    pub fn opnorm_hermitian(&self, x: MatRef<'_, c64>) -> Result<f64> {
        let w = hermitian_part(self.whiten(x).as_ref());
        let values = w
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))?;
        Ok(values.into_iter().fold(0.0, |m, v| m.max(v.abs())))
    }

    /// Smallest `c ≥ 1` with `c^{-1} ‖·‖₊ ≤ ‖·‖_{+,K} ≤ c ‖·‖₊` for `A_K = K + (m + 1) M`.
    pub fn equivalence_with(&self, k: MatRef<'_, c64>) -> Result<f64> {
        let n = self.dim();
        let shifted = Mat::from_fn(n, n, |i, j| {
            let d = if i == j { c64::new((self.shift + 1.0) * self.mass[i], 0.0) } else { c64::new(0.0, 0.0) };
            k[(i, j)] + d
        });
        let w = hermitian_part(self.whiten(shifted.as_ref()).as_ref());
        let values = w
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))?;
        let lo = values[0];
        let hi = *values.last().unwrap();
        if lo <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!("shifted form has eigenvalue {lo}")));
        }
        Ok(hi.max(1.0 / lo).sqrt())
    }
}

/// Largest equivalence constant of a list of forms against the reference scale.
pub fn equivalence_constant(space: &ScaleSpace, forms: &[Mat<c64>]) -> Result<f64> {
    forms.iter().try_fold(1.0f64, |c, k| Ok(c.max(space.equivalence_with(k.as_ref())?)))
}

/// Per-index diagnostics of a spectrum for bilinear controllability.
#[derive(Debug, Clone, PartialEq)]
pub struct NonresonanceReport {
    /// Consecutive gaps `λ_{k+1} - λ_k`.
    pub gaps: Vec<f64>,
    /// Flags attached to each eigenvalue index.
    pub flags: Vec<Vec<&'static str>>,
    pub min_coupling: f64,
    pub pass: bool,
}

pub const ZERO_COUPLING_TOL: f64 = 1e-8;

/// Flags degenerate levels, consecutive gap ratios close to `p/q` with `q ≤ 8`,
/// and vanishing nearest-neighbour couplings `b_k = |⟨Φ_k, B Φ_{k+1}⟩|`.
pub fn nonresonance_report(eigenvalues: &[f64], couplings: &[f64], tol: f64) -> NonresonanceReport {
    let n = eigenvalues.len();
    let gaps: Vec<f64> = eigenvalues.windows(2).map(|w| w[1] - w[0]).collect();
    let mut flags = vec![Vec::new(); n];
    for (k, g) in gaps.iter().enumerate() {
        if g.abs() <= tol * eigenvalues[k].abs().max(1.0) {
            flags[k].push("degenerate");
            flags[k + 1].push("degenerate");
        }
    }
    for k in 0..gaps.len().saturating_sub(1) {
        if gaps[k + 1].abs() <= f64::MIN_POSITIVE {
            continue;
        }
        let ratio = gaps[k] / gaps[k + 1];
        let rational = (1..=8u32).any(|q| {
            let p = (ratio * q as f64).round();
            p >= 1.0 && (ratio - p / q as f64).abs() <= tol
        });
        if rational {
            flags[k + 1].push("rational_gap");
        }
    }
    let mut min_coupling = f64::INFINITY;
    for (k, b) in couplings.iter().enumerate().take(n.saturating_sub(1)) {
        min_coupling = min_coupling.min(b.abs());
        if b.abs() < ZERO_COUPLING_TOL {
            flags[k].push("zero_coupling");
        }
    }
    let pass = flags.iter().all(|f| f.is_empty());
    NonresonanceReport { gaps, flags, min_coupling, pass }
}

/// `|⟨Φ_k, B Φ_{k+1}⟩|` for the first `count` eigenvectors, `B` given as a diagonal.
pub fn neighbour_couplings(eig: &GeneralizedEigen, b_diag: &[f64], count: usize) -> Vec<f64> {
    let count = count.min(eig.values.len());
    (0..count.saturating_sub(1))
        .map(|k| {
            (0..b_diag.len())
                .map(|i| eig.vectors[(i, k)].conj() * eig.vectors[(i, k + 1)] * b_diag[i])
                .sum::<c64>()
                .norm()
        })
        .collect()
}
