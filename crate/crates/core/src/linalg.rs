//! Complex matrix helpers and the [`HermitianMatrix`] covariance container.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use nalgebra::Complex;

use crate::error::{dim_err, Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance used when checking Hermitian symmetry.
pub const HERMITIAN_REL_TOL: f64 = 1e-10;
/// PSD tolerance: eigenvalues down to `-PSD_REL_TOL * trace` are accepted.
pub const PSD_REL_TOL: f64 = 1e-8;

/// A complex Hermitian matrix, used for every covariance in the pipeline.
///
/// Construction symmetrizes the input, so the stored matrix is Hermitian to
/// the last bit; PSD is checked separately where a contract requires it.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Wraps `m` after checking it is square and Hermitian to
    /// [`HERMITIAN_REL_TOL`] relative to its largest entry.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(dim_err("HermitianMatrix::new", "square", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let n = m.nrows();
        for i in 0..n {
            for j in i..n {
                let d = (m[(i, j)] - m[(j, i)].conj()).norm();
                if d > HERMITIAN_REL_TOL * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::Numerical(format!(
                        "matrix is not Hermitian at ({i},{j}): deviation {d:e}"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Builds `(m + m^H) / 2` without checking.
    pub fn symmetrized(m: CMatrix) -> Self {
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            out[(i, i)] = C64::new(out[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let v = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        Self(out)
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self(CMatrix::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { C64::new(0.0, 0.0) }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    /// Real diagonal entries.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Checks `lambda_min >= -PSD_REL_TOL * |trace|` using a shifted Cholesky
    /// factorization (cheaper than a full eigen-decomposition).
    pub fn is_psd(&self) -> bool {
        let n = self.dim();
        if n == 0 {
            return true;
        }
        let shift = (PSD_REL_TOL * self.trace().abs()).max(f64::MIN_POSITIVE.sqrt());
        let mut m = self.0.clone();
        for i in 0..n {
            m[(i, i)] += shift;
        }
        hpd_cholesky(m).is_some()
    }

    pub fn ensure_psd(&self, what: &str) -> Result<()> {
        if self.is_psd() {
            Ok(())
        } else {
            let min = self.eigenvalues().first().copied().unwrap_or(0.0);
            Err(Error::Numerical(format!(
                "{what} is not PSD: min eigenvalue {min:e}, trace {:e}",
                self.trace()
            )))
        }
    }

    /// `self + other`.
    pub fn add(&self, other: &HermitianMatrix) -> Result<HermitianMatrix> {
        if self.dim() != other.dim() {
            return Err(dim_err("HermitianMatrix::add", self.dim(), other.dim()));
        }
        Ok(Self(&self.0 + &other.0))
    }

    /// `D * self * D` for a real diagonal `D`.
    pub fn scale_diag(&self, d: &[f64]) -> Result<HermitianMatrix> {
        if d.len() != self.dim() {
            return Err(dim_err("HermitianMatrix::scale_diag", self.dim(), d.len()));
        }
        let n = self.dim();
        Ok(Self(CMatrix::from_fn(n, n, |i, j| self.0[(i, j)] * (d[i] * d[j]))))
    }

    /// `A^H * self * A`.
    pub fn congruence(&self, a: &CMatrix) -> Result<HermitianMatrix> {
        if a.nrows() != self.dim() {
            return Err(dim_err("HermitianMatrix::congruence", self.dim(), a.nrows()));
        }
        Ok(Self::symmetrized(a.adjoint() * &self.0 * a))
    }
}

/// Cholesky factorization, retrying once with a `1e-12 * trace` ridge when the
/// matrix is numerically singular. The flag reports whether the ridge was used.
pub fn cholesky_with_ridge(m: &CMatrix) -> Result<(Cholesky<C64, Dyn>, bool)> {
    if let Some(c) = hpd_cholesky(m.clone()) {
        return Ok((c, false));
    }
    let n = m.nrows();
    let tr: f64 = (0..n).map(|i| m[(i, i)].re).sum();
    let ridge = 1e-12 * tr.abs().max(1.0);
    let mut r = m.clone();
    for i in 0..n {
        r[(i, i)] += ridge;
    }
    match hpd_cholesky(r) {
        Some(c) => {
            log::warn!("covariance numerically singular; added ridge {ridge:e}");
            Ok((c, true))
        }
        None => Err(Error::Numerical("Cholesky factorization failed even with ridge".into())),
    }
}

/// Cholesky factorization of a Hermitian matrix that fails on any pivot that
/// is not real and positive.
pub fn hpd_cholesky(m: CMatrix) -> Option<Cholesky<C64, Dyn>> {
    let c = Cholesky::new(m)?;
    let l = c.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.im.abs() <= 1e-12 * d.re && d.re.is_finite()
    });
    ok.then_some(c)
}

/// Natural-log determinant of a Hermitian PD matrix from its Cholesky factor.
pub fn ln_det_from_cholesky(c: &Cholesky<C64, Dyn>) -> f64 {
    let l = c.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Unnormalized DFT matrix `W[k, l] = exp(-j 2 pi k l / n)`.
pub fn dft_matrix(n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |k, l| {
        let phase = -2.0 * std::f64::consts::PI * ((k * l) % n) as f64 / n as f64;
        C64::from_polar(1.0, phase)
    })
}

/// Squared Frobenius norm.
pub fn frob_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.1), c(0.5, 0.1), c(1.0, 0.0)]);
        assert!(HermitianMatrix::new(m).is_err());
    }

    #[test]
    fn psd_detection() {
        let good = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        assert!(HermitianMatrix::new(good).unwrap().is_psd());
        let bad = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        let bad = HermitianMatrix::new(bad).unwrap();
        assert!(!bad.is_psd());
        assert!(bad.ensure_psd("test").is_err());
        assert!(HermitianMatrix::zeros(3).is_psd());
    }

    #[test]
    fn kron_shape_and_entries() {
        let a = CMatrix::from_row_slice(2, 1, &[c(1.0, 0.0), c(2.0, 0.0)]);
        let b = CMatrix::from_row_slice(1, 2, &[c(0.0, 1.0), c(3.0, 0.0)]);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (2, 2));
        assert_eq!(k[(1, 0)], c(0.0, 2.0));
        assert_eq!(k[(1, 1)], c(6.0, 0.0));
    }

    #[test]
    fn log_det_matches_product_of_eigenvalues() {
        let m = CMatrix::from_row_slice(2, 2, &[c(3.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(2.0, 0.0)]);
        let (ch, ridge) = cholesky_with_ridge(&m).unwrap();
        assert!(!ridge);
        // det = 6 - 2 = 4
        assert!((ln_det_from_cholesky(&ch) - 4f64.ln()).abs() < 1e-14);
    }
}
