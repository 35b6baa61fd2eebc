use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{dim_err, Error, Result};
use crate::exec::Exec;
use crate::linalg::{CMatrix, HermitianMatrix, C64};

use super::correlations::{exponential_pdp, freq_corr, spatial_corr, time_corr};
use super::mse::{analytic_mse_separable, SeparableCovariance};
use super::pattern::dmrs_pattern;
use super::wiener::wiener_matrix;

/// Channel-estimation MSE as a function of SNR, linearly interpolated in dB
/// and clamped to the end values outside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseTable {
    pub snr_db: Vec<f64>,
    pub mse: Vec<f64>,
}

impl MseTable {
    pub fn new(snr_db: Vec<f64>, mse: Vec<f64>) -> Result<Self> {
        if snr_db.is_empty() || snr_db.len() != mse.len() {
            return Err(Error::Parameter("MSE table needs matching, nonempty columns".into()));
        }
        if snr_db.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("MSE table SNR grid must be strictly increasing".into()));
        }
        if mse.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Parameter("MSE table entries must be finite and nonnegative".into()));
        }
        Ok(MseTable { snr_db, mse })
    }

    /// The default grid: -30 dB to 30 dB in 1 dB steps.
    pub fn default_grid() -> Vec<f64> {
        (-30..=30).map(f64::from).collect()
    }

    pub fn lookup(&self, snr_db: f64) -> f64 {
        let x = &self.snr_db;
        let n = x.len();
        if snr_db.is_nan() {
            return self.mse[0];
        }
        if snr_db <= x[0] {
            return self.mse[0];
        }
        if snr_db >= x[n - 1] {
            return self.mse[n - 1];
        }
        let i = x.partition_point(|&v| v <= snr_db) - 1;
        let t = (snr_db - x[i]) / (x[i + 1] - x[i]);
        self.mse[i] + t * (self.mse[i + 1] - self.mse[i])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "snr_db,mse")?;
        for (s, m) in self.snr_db.iter().zip(&self.mse) {
            writeln!(f, "{s:e},{m:e}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["snr_db", "mse"] {
            return Err(Error::Format { kind: "MSE table", reason: format!("expected header snr_db,mse, got {headers:?}") });
        }
        let (mut s, mut m) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| {
                rec.get(i).and_then(|v| v.trim().parse::<f64>().ok()).ok_or_else(|| Error::Format {
                    kind: "MSE table",
                    reason: format!("bad record {rec:?}"),
                })
            };
            s.push(parse(0)?);
            m.push(parse(1)?);
        }
        Self::new(s, m)
    }
}

/// Builds the SNR to MSE table for a configuration.
///
/// The grid has `n_f` subcarriers, `ofdm_symbols` symbols and one antenna per
/// converter chain. True covariances use the exponential PDP over all
/// `max_taps` delays and the configured Doppler; the interpolators are
/// designed with the mismatched model (delay spread and Doppler scaled by the
/// mismatch factors). Each one-dimensional filter assumes noise
/// `(1 + sigma^2)^(1/3) - 1`; the three factors multiply to the total SNR. The
/// result is averaged over the users' pilot sets.
pub fn build_mse_table(cfg: &SystemConfig, snr_grid_db: &[f64], exec: Exec) -> Result<MseTable> {
    let k = cfg.n_f;
    let l_sym = cfg.ofdm_symbols;
    let digital = cfg.mode.is_digital();
    let m = if digital { cfg.m_r } else { cfg.m_rfe };
    let pattern = dmrs_pattern(cfg.users, k, l_sym)?;

    let rs = spatial_corr(m, digital);
    let rt = time_corr(cfg.doppler_norm, l_sym);
    let rf = freq_corr(&exponential_pdp(cfg.max_taps, cfg.beta), k)?;
    let rt_model = time_corr(cfg.doppler_norm * cfg.doppler_mismatch, l_sym);
    let rf_model = freq_corr(&exponential_pdp(cfg.max_taps, cfg.beta / cfg.delay_spread_mismatch), k)?;
    let all_antennas: Vec<usize> = (0..m).collect();

    let values = exec.try_map(snr_grid_db.len(), |i| -> Result<f64> {
        let sigma2 = 10f64.powf(-snr_grid_db[i] / 10.0);
        let per_dim = (1.0 + sigma2).cbrt() - 1.0;
        let cov = SeparableCovariance {
            rs: rs.clone(),
            rt: rt.clone(),
            rf: rf.clone(),
            ns: CMatrix::identity(m, m) * C64::new(sigma2, 0.0),
            nt: CMatrix::identity(l_sym, l_sym),
            nf: CMatrix::identity(k, k),
        };
        let a_s = wiener_matrix(&rs, per_dim, &all_antennas)?;
        let mut acc = 0.0;
        for u in 0..pattern.users() {
            let a_t = wiener_matrix(&rt_model, per_dim, &pattern.symbols[u])?;
            let a_f = wiener_matrix(&rf_model, per_dim, &pattern.subcarriers[u])?;
            acc += analytic_mse_separable(&a_s, &a_t, &a_f, &cov, [&all_antennas, &pattern.symbols[u], &pattern.subcarriers[u]])?;
        }
        Ok(acc / pattern.users() as f64)
    })?;
    MseTable::new(snr_grid_db.to_vec(), values)
}

/// Diagonal of the estimation-error covariance `sum_u diag(|h_u|^2 w_u)` for
/// one frequency bin; `weights[c]` applies to column `c` of `h`.
pub fn est_error_diag(h: &CMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != h.ncols() {
        return Err(dim_err("est_error_cov", h.ncols(), weights.len()));
    }
    Ok((0..h.nrows())
        .map(|r| (0..h.ncols()).map(|c| h[(r, c)].norm_sqr() * weights[c]).sum())
        .collect())
}

/// Spatially white estimation-error covariance for one frequency bin.
pub fn est_error_cov(h: &CMatrix, weights: &[f64]) -> Result<HermitianMatrix> {
    Ok(HermitianMatrix::from_real_diagonal(&est_error_diag(h, weights)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Resolution;

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            m_r: 2,
            m_rfe: 2,
            adc_bits: vec![Resolution::Bits(4); 2],
            users: 2,
            max_taps: 4,
            taps: 2,
            n_f: 16,
            f2_bin: Some(15),
            ..SystemConfig::example()
        }
    }

    #[test]
    fn table_is_decreasing() {
        let t = build_mse_table(&small_cfg(), &MseTable::default_grid(), Exec::Parallel).unwrap();
        assert!(t.mse.windows(2).all(|w| w[1] < w[0]));
        assert!(t.mse.iter().all(|&m| m > 0.0));
        assert!(t.mse[0] < 1.0 + 1e-12);
    }

    #[test]
    fn scalar_grid_matches_closed_form() {
        let cfg = SystemConfig {
            m_r: 1,
            m_rfe: 1,
            adc_bits: vec![Resolution::Bits(4)],
            users: 1,
            max_taps: 1,
            taps: 1,
            n_f: 2,
            f2_bin: Some(1),
            ofdm_symbols: 3,
            doppler_norm: 0.0,
            ..SystemConfig::example()
        };
        // flat, static channel observed on one subcarrier of one symbol: the
        // interpolation is exact and only the scalar noise error remains
        let t = build_mse_table(&cfg, &[-10.0, 0.0, 10.0], Exec::Sequential).unwrap();
        for (s, m) in t.snr_db.iter().zip(&t.mse) {
            let s2 = 10f64.powf(-s / 10.0);
            assert!((m - s2 / (1.0 + s2)).abs() < 1e-12, "{s}: {m}");
        }
    }

    #[test]
    fn lookup_interpolates_and_clamps() {
        let t = MseTable::new(vec![0.0, 10.0], vec![0.5, 0.1]).unwrap();
        assert!((t.lookup(5.0) - 0.3).abs() < 1e-15);
        assert_eq!(t.lookup(-40.0), 0.5);
        assert_eq!(t.lookup(40.0), 0.1);
        assert!(MseTable::new(vec![1.0, 0.0], vec![0.1, 0.2]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t = MseTable::new(vec![-3.0, 0.5, 7.25], vec![0.9, 0.123456789012345, 1e-3]).unwrap();
        t.write_csv(&p).unwrap();
        assert_eq!(MseTable::read_csv(&p).unwrap(), t);
    }

    #[test]
    fn error_cov_examples() {
        let h = CMatrix::from_element(3, 1, C64::new(1.0, 0.0));
        let r = est_error_cov(&h, &[0.1]).unwrap();
        assert!((r.as_matrix() - CMatrix::identity(3, 3) * C64::new(0.1, 0.0)).norm() < 1e-15);
        assert_eq!(est_error_cov(&h, &[0.0]).unwrap(), HermitianMatrix::zeros(3));
        let h2 = CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 1.0), C64::new(0.0, 2.0), C64::new(0.5, 0.0), C64::new(1.0, 0.0)]);
        let d = est_error_diag(&h2, &[0.1, 0.2]).unwrap();
        let d1 = est_error_diag(&h2.columns(0, 1).into_owned(), &[0.1]).unwrap();
        let d2 = est_error_diag(&h2.columns(1, 1).into_owned(), &[0.2]).unwrap();
        for i in 0..2 {
            assert!((d[i] - d1[i] - d2[i]).abs() < 1e-15);
        }
        assert!(est_error_diag(&h2, &[0.1]).is_err());
    }
}
