use std::sync::Arc;

use crate::config::Resolution;
use crate::error::{dim_err, Result};
use crate::linalg::{CMatrix, HermitianMatrix, C64};

use super::corrmap::{CorrelationMap, MapCache};
use super::design::QuantizerSpec;

/// Quantizers of every RF chain together with the correlation maps of every
/// chain pair.
#[derive(Debug, Clone)]
pub struct QuantizerBank {
    pub specs: Vec<Arc<QuantizerSpec>>,
    kind: Vec<usize>,
    /// `maps[ka][kb]` for distinct resolution indices.
    maps: Vec<Vec<Arc<CorrelationMap>>>,
}

impl QuantizerBank {
    /// Builds the bank for one resolution per chain, filling `cache` as needed.
    pub fn new(resolutions: &[Resolution], cache: &MapCache) -> Result<Self> {
        let mut distinct: Vec<Resolution> = resolutions.to_vec();
        distinct.sort();
        distinct.dedup();
        let kind = resolutions.iter().map(|r| distinct.binary_search(r).expect("present")).collect();
        let mut maps = Vec::with_capacity(distinct.len());
        for &a in &distinct {
            let row = distinct.iter().map(|&b| cache.map(a, b)).collect::<Result<Vec<_>>>()?;
            maps.push(row);
        }
        let specs = resolutions.iter().map(|&r| cache.spec(r)).collect::<Result<Vec<_>>>()?;
        Ok(QuantizerBank { specs, kind, maps })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn map(&self, i: usize, j: usize) -> &CorrelationMap {
        &self.maps[self.kind[i]][self.kind[j]]
    }

    pub fn resolutions(&self) -> Vec<Resolution> {
        self.specs.iter().map(|s| s.resolution).collect()
    }
}

/// Diagonal of the Bussgang gain matrix `F`.
pub fn bussgang_gains(specs: &[Arc<QuantizerSpec>]) -> Vec<f64> {
    specs.iter().map(|s| s.gain).collect()
}

/// Covariance of the quantized signal for proper complex Gaussian input.
///
/// Each chain is normalized by its own power (AGC). Diagonal entries scale by
/// the quantizer output power; for `i != j` the normalized correlation `c` is
/// split into the real and imaginary cross terms, which pass through the
/// pair's correlation map:
/// `[R_rr]_ij = sqrt(R_ii R_jj) (m(Re c) + j m(Im c))`.
pub fn transform_cov(r_yy: &HermitianMatrix, bank: &QuantizerBank) -> Result<HermitianMatrix> {
    let n = r_yy.dim();
    if bank.len() != n {
        return Err(dim_err("transform_cov", n, bank.len()));
    }
    r_yy.ensure_psd("R_yy")?;
    let d = r_yy.diagonal();
    let mut out = CMatrix::zeros(n, n);
    let mut clamped = 0usize;
    for i in 0..n {
        out[(i, i)] = C64::new(bank.specs[i].output_power * d[i], 0.0);
        for j in (i + 1)..n {
            let scale = (d[i] * d[j]).sqrt();
            if scale <= 0.0 {
                continue;
            }
            let mut c = r_yy.get(i, j) / scale;
            let mag = c.norm();
            if mag > 1.0 {
                clamped += 1;
                c /= mag;
            }
            let m = bank.map(i, j);
            let v = C64::new(m.eval(c.re), m.eval(c.im)) * scale;
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
    }
    if clamped > 0 {
        log::warn!("transform_cov: clamped {clamped} correlation coefficient(s) with magnitude above 1");
    }
    Ok(HermitianMatrix::symmetrized(out))
}

/// `R_ee = R_rr - F R_yy F` for a real diagonal `F`, checked to be PSD.
pub fn quant_error_cov(r_rr: &HermitianMatrix, gains: &[f64], r_yy: &HermitianMatrix) -> Result<HermitianMatrix> {
    if r_rr.dim() != r_yy.dim() {
        return Err(dim_err("quant_error_cov", r_rr.dim(), r_yy.dim()));
    }
    let frf = r_yy.scale_diag(gains)?;
    let r_ee = HermitianMatrix::symmetrized(r_rr.as_matrix() - frf.as_matrix());
    r_ee.ensure_psd("R_ee")?;
    Ok(r_ee)
}
