//! Vertex unitaries of quasi-delta type and their partial Cayley transform.

use faer::{c64, Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Eigenvalues closer than this to `-1` are treated as exactly `-1`.
pub const CAYLEY_GAP_TOL: f64 = 1e-8;

/// Eigenvalues at distance in `[gap_tol, GAP_BAND * gap_tol)` from `-1` are rejected as ill-conditioned.
pub const GAP_BAND: f64 = 1e3;

fn phase(x: f64) -> c64 {
    c64::new(x.cos(), x.sin())
}

/// Rank-one projector `(P⊥)_{ee'} = e^{i(χ_e - χ_e')} / d`.
pub fn vertex_projector(chi: &[f64]) -> Mat<c64> {
    let d = chi.len() as f64;
    Mat::from_fn(chi.len(), chi.len(), |i, j| phase(chi[i] - chi[j]) / d)
}

/// Quasi-delta unitary `U = (e^{iδ} + 1) P⊥ - I`.
pub fn vertex_unitary(chi: &[f64], delta: f64) -> Mat<c64> {
    let p = vertex_projector(chi);
    let scale = phase(delta) + c64::new(1.0, 0.0);
    Mat::from_fn(chi.len(), chi.len(), |i, j| {
        let id = if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) };
        scale * p[(i, j)] - id
    })
}

/// `D U D†` with `D = diag(e^{iχ})`.
pub fn gauge_conjugate(u: MatRef<'_, c64>, chi: &[f64]) -> Mat<c64> {
    Mat::from_fn(u.nrows(), u.ncols(), |i, j| phase(chi[i]) * u[(i, j)] * phase(-chi[j]))
}

/// Range projector and Hermitian Cayley block of a vertex unitary.
#[derive(Debug, Clone)]
pub struct CayleyBlocks {
    /// Orthogonal projector onto `ker(U + I)^⊥`.
    pub range: Mat<c64>,
    /// `i P (U - I)(U + I)^{-1}` on the range, zero on `ker(U + I)`.
    pub cayley: Mat<c64>,
    /// Eigenvalues of `U` paired with their Cayley value (`None` on the kernel).
    pub spectrum: Vec<(c64, Option<f64>)>,
}

/// Partial Cayley transform through a unitary eigendecomposition of `U`.
pub fn partial_cayley(u: MatRef<'_, c64>, gap_tol: f64) -> Result<CayleyBlocks> {
    let n = u.nrows();
    if u.ncols() != n {
        return Err(Error::schema("unitary", "matrix must be square"));
    }
    let defect = (u.adjoint() * u - Mat::<c64>::identity(n, n)).norm_max();
    if defect > 1e-10 {
        return Err(Error::schema("unitary", format!("matrix is not unitary (defect {defect:e})")));
    }
    // U is normal, so a generic real combination of its Hermitian and skew parts
    // shares its eigenvectors and yields an orthonormal basis.
    for gamma in [0.577_215_664_901_532_9, 1.324_717_957_244_746, -2.718_281_828_459_045] {
        let herm = Mat::from_fn(n, n, |i, j| {
            let a = u[(i, j)];
            let b = u[(j, i)].conj();
            (a + b) * 0.5 + (a - b) * c64::new(0.0, -0.5 * gamma)
        });
        let eig = herm
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("vertex eigendecomposition failed: {e:?}")))?;
        let v = eig.U();
        let mut ok = true;
        let mut spectrum = Vec::with_capacity(n);
        for k in 0..n {
            let col = v.col(k);
            let uv = u * col;
            let lambda = col.adjoint() * &uv;
            let residual = (0..n).map(|i| (uv[i] - lambda * col[i]).norm()).fold(0.0, f64::max);
            if residual > 1e-9 {
                ok = false;
                break;
            }
            spectrum.push(lambda);
        }
        if !ok {
            continue;
        }
        let mut range = Mat::<c64>::zeros(n, n);
        let mut cayley = Mat::<c64>::zeros(n, n);
        let mut out = Vec::with_capacity(n);
        for (k, &lambda) in spectrum.iter().enumerate() {
            let distance = (lambda + 1.0).norm();
            if distance < gap_tol {
                out.push((c64::new(-1.0, 0.0), None));
                continue;
            }
            if distance < GAP_BAND * gap_tol {
                return Err(Error::GapViolation { distance });
            }
            let value = (c64::new(0.0, 1.0) * (lambda - 1.0) / (lambda + 1.0)).re;
            out.push((lambda, Some(value)));
            let col = v.col(k);
            for i in 0..n {
                for j in 0..n {
                    let outer = col[i] * col[j].conj();
                    range[(i, j)] += outer;
                    cayley[(i, j)] += outer * value;
                }
            }
        }
        return Ok(CayleyBlocks { range, cayley, spectrum: out });
    }
    Err(Error::Numerical("could not separate the eigenvalues of the vertex unitary".into()))
}
