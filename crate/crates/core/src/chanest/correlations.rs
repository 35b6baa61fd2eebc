use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{dft_matrix, CMatrix, C64};
use crate::special::bessel_j0;

/// Jakes time correlation `J0(2 pi f_D (l1 - l2))` over `l_sym` symbols.
pub fn time_corr(doppler_norm: f64, l_sym: usize) -> CMatrix {
    CMatrix::from_fn(l_sym, l_sym, |a, b| {
        C64::new(bessel_j0(2.0 * PI * doppler_norm * (a as f64 - b as f64)), 0.0)
    })
}

/// Frequency correlation `W diag(pdp) W^H` over `k` subcarriers.
pub fn freq_corr(pdp: &[f64], k: usize) -> Result<CMatrix> {
    if k < pdp.len() {
        return Err(Error::Parameter(format!("{k} subcarriers cannot resolve {} taps", pdp.len())));
    }
    let w = dft_matrix(k).columns(0, pdp.len()).into_owned();
    let mut wd = w.clone();
    for (l, &v) in pdp.iter().enumerate() {
        wd.column_mut(l).scale_mut(v);
    }
    Ok(wd * w.adjoint())
}

/// Uniform-DOA spatial correlation `J0(pi (m1 - m2))`; identity when the
/// streams come from separate analog sub-arrays.
pub fn spatial_corr(m: usize, digital: bool) -> CMatrix {
    if !digital {
        return CMatrix::identity(m, m);
    }
    CMatrix::from_fn(m, m, |a, b| C64::new(bessel_j0(PI * (a as f64 - b as f64)), 0.0))
}

/// Exponential PDP `exp(-beta l)` over all `l` taps, normalized to unit sum.
pub fn exponential_pdp(l: usize, beta: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..l).map(|i| (-beta * i as f64).exp()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}
