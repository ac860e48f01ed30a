//! Dense complex decompositions. Storage stays in nalgebra; the SVD and the
//! eigenvalue solver run on faer.

use std::sync::Once;

use faer::Mat;
use num_complex::Complex64;

use crate::error::{DoaError, Result};
use crate::CMatrix;

fn to_faer(m: &CMatrix) -> Mat<Complex64> {
    // decompositions run inside already-parallel trials; internal threading
    // would make rounding depend on the pool size
    static SEQUENTIAL: Once = Once::new();
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, Complex64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD `m = U diag(s) V^H`, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    /// Number of singular values above `rcond * sigma_max`.
    pub fn rank(&self, rcond: f64) -> usize {
        let cutoff = rcond * self.s.first().copied().unwrap_or(0.0);
        self.s.iter().take_while(|&&s| s > cutoff && s > 0.0).count()
    }
}

pub fn svd(m: &CMatrix, context: &str) -> Result<Svd> {
    if m.is_empty() {
        return Ok(Svd {
            u: CMatrix::zeros(m.nrows(), 0),
            s: Vec::new(),
            v: CMatrix::zeros(m.ncols(), 0),
        });
    }
    let f = to_faer(m);
    let dec = small_svd(&f, context)?;
    Ok(Svd {
        u: from_faer(dec.U()),
        s: singular_values(&dec, context)?,
        v: from_faer(dec.V()),
    })
}

fn small_svd(f: &Mat<Complex64>, context: &str) -> Result<faer::linalg::solvers::Svd<Complex64>> {
    f.thin_svd()
        .map_err(|e| DoaError::Numerical(format!("{context}: SVD failed ({e:?})")))
}

fn singular_values(dec: &faer::linalg::solvers::Svd<Complex64>, context: &str) -> Result<Vec<f64>> {
    let s: Vec<f64> = dec.S().column_vector().iter().map(|v| v.re).collect();
    if s.windows(2).any(|w| w[0] < w[1]) || s.iter().any(|v| !v.is_finite()) {
        return Err(DoaError::Numerical(format!("{context}: singular values not ordered")));
    }
    Ok(s)
}

/// Moore-Penrose pseudo-inverse with relative cutoff `rcond`.
pub fn pinv(m: &CMatrix, rcond: f64) -> Result<CMatrix> {
    let d = svd(m, "pinv")?;
    let r = d.rank(rcond);
    let mut out = CMatrix::zeros(m.ncols(), m.nrows());
    for i in 0..r {
        out += d.v.column(i) * (d.u.column(i).adjoint() / Complex64::new(d.s[i], 0.0));
    }
    Ok(out)
}

/// `I - B pinv(B)`, the projector onto the orthogonal complement of `range(B)`.
pub fn orthogonal_projector(b: &CMatrix, rcond: f64) -> Result<CMatrix> {
    let n = b.nrows();
    Ok(CMatrix::identity(n, n) - b * pinv(b, rcond)?)
}

/// Eigenvalues of a square complex matrix.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(DoaError::shape("eigenvalues", "square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    if m.nrows() == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    to_faer(m)
        .eigenvalues()
        .map_err(|e| DoaError::Numerical(format!("eigenvalue solver failed ({e:?})")))
}
