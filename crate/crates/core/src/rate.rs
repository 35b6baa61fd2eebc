//! End-to-end achievable sum rate: effective channel, effective noise
//! covariance, per-bin mutual information and the band average.

use std::sync::Arc;

use serde::Serialize;

use crate::beamforming::combiner_for;
use crate::chanest::{build_mse_table, est_error_diag, MseTable};
use crate::channel::{band_gram, evm_ratio, receive_cov, sample_channel, snr_to_power, to_frequency, ChannelRealization};
use crate::config::{ChannelEstimation, SystemConfig};
use crate::error::{dim_err, Error, Result};
use crate::exec::Exec;
use crate::linalg::{cholesky_with_ridge, ln_det_from_cholesky, CMatrix, HermitianMatrix, C64};
use crate::quantization::{bussgang_gains, quant_error_cov, transform_cov, MapCache, QuantizerBank};
use crate::seed::{rng_for, stream};

/// Rate of one channel realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationRate {
    /// Mean of `per_bin`, in bits/s/Hz.
    pub sum_rate: f64,
    /// Mutual information of every bin in `f1..=f2`.
    pub per_bin: Vec<f64>,
}

/// Sum rate averaged over realizations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResult {
    pub sum_rate: f64,
    /// Standard error of `sum_rate` over realizations.
    pub stderr: f64,
    pub per_realization: Vec<f64>,
    /// Per-bin mutual information averaged over realizations.
    pub per_bin: Vec<f64>,
}

impl RateResult {
    pub fn from_realizations(rates: &[RealizationRate]) -> Result<Self> {
        let Some(first) = rates.first() else {
            return Err(Error::Parameter("no realizations".into()));
        };
        let n = rates.len() as f64;
        let per_realization: Vec<f64> = rates.iter().map(|r| r.sum_rate).collect();
        let mean = per_realization.iter().sum::<f64>() / n;
        let stderr = if rates.len() > 1 {
            let var = per_realization.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        let mut per_bin = vec![0.0; first.per_bin.len()];
        for r in rates {
            for (acc, v) in per_bin.iter_mut().zip(&r.per_bin) {
                *acc += v;
            }
        }
        per_bin.iter_mut().for_each(|v| *v /= n);
        Ok(RateResult { sum_rate: mean, stderr, per_realization, per_bin })
    }
}

/// `H'[f]`: the taps `F W^H H[l]` transformed to `n_f` frequency bins.
pub fn effective_channel(gains: &[f64], w: &CMatrix, h_taps: &[CMatrix], n_f: usize) -> Result<Vec<CMatrix>> {
    if gains.len() != w.ncols() {
        return Err(dim_err("effective_channel", w.ncols(), gains.len()));
    }
    let taps = h_taps
        .iter()
        .map(|h| {
            if h.nrows() != w.nrows() {
                return Err(dim_err("effective_channel", w.nrows(), h.nrows()));
            }
            let mut g = w.adjoint() * h;
            for (i, &f) in gains.iter().enumerate() {
                g.row_mut(i).scale_mut(f);
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    to_frequency(&taps, n_f)
}

/// `R_n'n' = F W^H R W F + R_ee` with `R` the antenna-level noise covariance
/// (thermal noise plus transmit impairments through the channel).
pub fn effective_noise_cov(gains: &[f64], w: &CMatrix, r_noise: &HermitianMatrix, r_ee: &HermitianMatrix) -> Result<HermitianMatrix> {
    if gains.len() != r_ee.dim() {
        return Err(dim_err("effective_noise_cov", r_ee.dim(), gains.len()));
    }
    let out = r_noise.congruence(w)?.scale_diag(gains)?.add(r_ee)?;
    out.ensure_psd("R_n'n'")?;
    Ok(out)
}

/// `log2 det(I + R^-1 H diag(p) H^H)` for one bin, via the Cholesky factor
/// `L` of `R`: with `B = L^-1 H diag(p)^(1/2)` it equals `log2 det(I + B^H B)`.
pub fn per_bin_mutual_info(h: &CMatrix, tx_power: &[f64], noise: &HermitianMatrix) -> Result<f64> {
    if h.nrows() != noise.dim() {
        return Err(dim_err("per_bin_mutual_info", noise.dim(), h.nrows()));
    }
    if tx_power.len() != h.ncols() {
        return Err(dim_err("per_bin_mutual_info", h.ncols(), tx_power.len()));
    }
    let (chol, _) = cholesky_with_ridge(noise.as_matrix())?;
    let mut b = h.clone();
    for (c, &p) in tx_power.iter().enumerate() {
        b.column_mut(c).scale_mut(p.max(0.0).sqrt());
    }
    let b = chol
        .l()
        .solve_lower_triangular(&b)
        .ok_or_else(|| Error::Numerical("singular noise covariance factor".into()))?;
    let mut a = b.adjoint() * &b;
    for i in 0..a.nrows() {
        a[(i, i)] += C64::new(1.0, 0.0);
    }
    let a = HermitianMatrix::symmetrized(a);
    let (ca, _) = cholesky_with_ridge(a.as_matrix())?;
    Ok((ln_det_from_cholesky(&ca) / std::f64::consts::LN_2).max(0.0))
}

/// Effective SNR each user's channel estimator sees: received signal power
/// per chain over the combined noise power per chain.
pub fn estimation_snr(w: &CMatrix, ch: &ChannelRealization, tx_power: &[f64]) -> Vec<f64> {
    let noise = w.iter().map(|z| z.norm_sqr()).sum::<f64>();
    (0..ch.num_users())
        .map(|u| {
            let energy: f64 = (0..ch.len()).map(|l| (w.adjoint() * ch.user_tap(u, l)).norm_squared()).sum();
            tx_power[u] * energy / noise
        })
        .collect()
}

/// Rate of one realization with a prepared quantizer bank.
///
/// `mse` supplies the estimation-error variance per user; `None` means
/// perfect channel knowledge.
pub fn sum_rate(cfg: &SystemConfig, ch: &ChannelRealization, bank: &QuantizerBank, mse: Option<&MseTable>, exec: Exec) -> Result<RealizationRate> {
    let w = combiner_for(cfg, ch, exec)?;
    if bank.len() != w.ncols() {
        return Err(dim_err("sum_rate: quantizer bank", w.ncols(), bank.len()));
    }
    let p_user = snr_to_power(cfg, ch)?;
    let p_col: Vec<f64> = p_user.iter().flat_map(|&p| std::iter::repeat_n(p, ch.m_t)).collect();
    let evm = evm_ratio(cfg.evm_db);
    let bins = cfg.f1_bin..=cfg.f2();

    let h_f = to_frequency(&ch.h, cfg.n_f)?;
    let thermal = HermitianMatrix::identity(ch.m_r);
    let r_yy = receive_cov(&h_f, bins.clone(), &p_col, evm, &thermal)?.congruence(&w)?;
    let evm_w: Vec<f64> = p_col.iter().map(|p| p * evm).collect();
    let r_noise = HermitianMatrix::symmetrized(band_gram(&h_f, bins.clone(), &evm_w)? + thermal.as_matrix());

    let gains = bussgang_gains(&bank.specs);
    let r_rr = transform_cov(&r_yy, bank)?;
    let r_ee = quant_error_cov(&r_rr, &gains, &r_yy)?;
    let r_nn = effective_noise_cov(&gains, &w, &r_noise, &r_ee)?;
    let h_eff = effective_channel(&gains, &w, &ch.h, cfg.n_f)?;

    let est_w: Vec<f64> = match mse {
        Some(table) => {
            let snr = estimation_snr(&w, ch, &p_user);
            let sigma2: Vec<f64> = snr.iter().map(|&s| table.lookup(10.0 * s.log10())).collect();
            (0..p_col.len()).map(|c| p_col[c] * sigma2[c / ch.m_t]).collect()
        }
        None => vec![0.0; p_col.len()],
    };

    let bin_list: Vec<usize> = bins.collect();
    let per_bin = exec.try_map(bin_list.len(), |i| {
        let h = &h_eff[bin_list[i]];
        let ww = est_error_diag(h, &est_w)?;
        let mut r = r_nn.as_matrix().clone();
        for (k, v) in ww.iter().enumerate() {
            r[(k, k)] += C64::new(*v, 0.0);
        }
        per_bin_mutual_info(h, &p_col, &HermitianMatrix::symmetrized(r))
    })?;
    let sum_rate = per_bin.iter().sum::<f64>() / per_bin.len() as f64;
    Ok(RealizationRate { sum_rate, per_bin })
}

/// A configuration prepared for repeated rate evaluation: quantizer bank and
/// channel-estimation table are built once.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SystemConfig,
    bank: QuantizerBank,
    mse: Option<Arc<MseTable>>,
}

impl Simulator {
    /// Prepares `cfg`. With analytic channel estimation and no `mse` table
    /// supplied, the table is built from `cfg`.
    pub fn new(cfg: SystemConfig, cache: &MapCache, mse: Option<Arc<MseTable>>, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        if cache.family != cfg.quantizer {
            return Err(Error::Parameter(format!(
                "map cache holds {:?} quantizers but the configuration asks for {:?}",
                cache.family, cfg.quantizer
            )));
        }
        let bank = QuantizerBank::new(&cfg.adc_bits, cache)?;
        let mse = match cfg.channel_estimation {
            ChannelEstimation::Perfect => None,
            ChannelEstimation::Analytic => match mse {
                Some(t) => Some(t),
                None => Some(Arc::new(build_mse_table(&cfg, &MseTable::default_grid(), exec)?)),
            },
        };
        Ok(Simulator { cfg, bank, mse })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn bank(&self) -> &QuantizerBank {
        &self.bank
    }

    pub fn mse_table(&self) -> Option<&MseTable> {
        self.mse.as_deref()
    }

    /// Channel realization `r`; it depends only on the seed and the channel
    /// geometry, so every configuration sharing those sees the same draws.
    pub fn channel(&self, r: usize) -> Result<ChannelRealization> {
        sample_channel(&self.cfg, &mut rng_for(self.cfg.seed, stream::CHANNEL, r as u64))
    }

    pub fn realization(&self, r: usize, exec: Exec) -> Result<RealizationRate> {
        let ch = self.channel(r)?;
        sum_rate(&self.cfg, &ch, &self.bank, self.mse.as_deref(), exec)
    }

    /// Runs every realization, in parallel under `exec`.
    pub fn run(&self, exec: Exec) -> Result<RateResult> {
        let rates = exec.try_map(self.cfg.realizations, |r| self.realization(r, exec))?;
        RateResult::from_realizations(&rates)
    }
}
