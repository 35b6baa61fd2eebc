use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_ridge, CMatrix, C64};

/// Wiener interpolator `R[:, P] (R[P, P] + noise_var I)^-1` embedded in an
/// `n x n` matrix with zero columns off the pilot set `P`.
pub fn wiener_matrix(r: &CMatrix, noise_var: f64, pilots: &[usize]) -> Result<CMatrix> {
    let n = r.nrows();
    if pilots.iter().any(|&p| p >= n) {
        return Err(Error::Parameter(format!("pilot index out of range for dimension {n}")));
    }
    let mut out = CMatrix::zeros(n, n);
    if pilots.is_empty() {
        return Ok(out);
    }
    let np = pilots.len();
    let mut rpp = CMatrix::from_fn(np, np, |i, j| r[(pilots[i], pilots[j])]);
    for i in 0..np {
        rpp[(i, i)] += C64::new(noise_var, 0.0);
    }
    let (chol, _) = cholesky_with_ridge(&rpp)?;
    // A_P = R[:, P] Rpp^-1  <=>  Rpp A_P^H = R[P, :]  (Rpp Hermitian)
    let rp_all = CMatrix::from_fn(np, n, |i, j| r[(pilots[i], j)]);
    let ah = chol.solve(&rp_all);
    for (c, &p) in pilots.iter().enumerate() {
        for i in 0..n {
            out[(i, p)] = ah[(c, i)].conj();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanest::{freq_corr, exponential_pdp};

    #[test]
    fn scalar_and_noiseless() {
        let r = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let a = wiener_matrix(&r, 0.25, &[0]).unwrap();
        assert!((a[(0, 0)].re - 0.8).abs() < 1e-15);
        let r = freq_corr(&exponential_pdp(4, 0.3), 8).unwrap();
        let all: Vec<usize> = (0..8).collect();
        let a = wiener_matrix(&(&r + CMatrix::identity(8, 8)), 1e-12, &all).unwrap();
        assert!((a - CMatrix::identity(8, 8)).norm() < 1e-9);
    }

    #[test]
    fn zero_columns_off_pilots() {
        let r = freq_corr(&exponential_pdp(3, 0.5), 8).unwrap();
        let a = wiener_matrix(&r, 0.1, &[0, 4]).unwrap();
        for j in [1, 2, 3, 5, 6, 7] {
            assert!(a.column(j).iter().all(|z| *z == C64::new(0.0, 0.0)));
        }
        assert!(wiener_matrix(&r, 0.1, &[9]).is_err());
    }

    #[test]
    fn spectral_radius_at_most_one() {
        let r = freq_corr(&exponential_pdp(6, 0.2), 16).unwrap();
        for sigma in [1e-3, 0.1, 1.0, 10.0] {
            let pilots: Vec<usize> = (0..16).step_by(2).collect();
            let a = wiener_matrix(&r, sigma, &pilots).unwrap();
            let (_, t) = a.schur().unpack();
            assert!(t.diagonal().iter().all(|z| z.norm() <= 1.0 + 1e-9), "{sigma}");
        }
    }
}
