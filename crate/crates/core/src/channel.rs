//! Multiuser multipath channel generation, SNR scaling and frequency transforms.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::config::{SnrScaling, SystemConfig};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{frob_sq, CMatrix, CVector, HermitianMatrix, C64};

/// One nonzero tap of a user's channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay: usize,
    pub gain: C64,
    pub phi_r: f64,
    pub phi_t: f64,
}

/// One user's channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub pdp: Vec<f64>,
    pub taps: Vec<Tap>,
}

/// One draw of the multiuser channel.
///
/// `h[l]` is the `M_R x (U * M_T)` matrix of delay `l` with user `u` occupying
/// columns `u*M_T .. (u+1)*M_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub m_r: usize,
    pub m_t: usize,
    pub users: Vec<UserChannel>,
    pub h: Vec<CMatrix>,
}

impl ChannelRealization {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// `H_u[l]` as an `M_R x M_T` matrix.
    pub fn user_tap(&self, u: usize, l: usize) -> CMatrix {
        self.h[l].columns(u * self.m_t, self.m_t).into_owned()
    }

    /// `sum_l ||H_u[l]||_F^2`.
    pub fn user_energy(&self, u: usize) -> f64 {
        self.h.iter().map(|hl| frob_sq(&hl.columns(u * self.m_t, self.m_t).into_owned())).sum()
    }

    /// Builds a realization directly from dense per-tap matrices.
    pub fn from_taps(h: Vec<CMatrix>, m_t: usize) -> Result<Self> {
        let first = h.first().ok_or_else(|| Error::Parameter("channel needs at least one tap".into()))?;
        let (m_r, cols) = first.shape();
        if m_t == 0 || cols % m_t != 0 {
            return Err(dim_err("ChannelRealization::from_taps", format!("multiple of m_t = {m_t}"), cols));
        }
        if h.iter().any(|m| m.shape() != (m_r, cols)) {
            return Err(dim_err("ChannelRealization::from_taps", format!("{m_r}x{cols}"), "ragged taps"));
        }
        let users = (0..cols / m_t).map(|_| UserChannel { pdp: Vec::new(), taps: Vec::new() }).collect();
        Ok(Self { m_r, m_t, users, h })
    }
}

/// Exponential power-delay profile with `p` nonzero taps among `l` delays.
///
/// Delay 0 is always present; the other `p - 1` delays are a uniform random
/// subset of `1..l`. Nonzero entries follow `exp(-beta * delay)` and sum to 1.
pub fn gen_pdp<R: Rng + ?Sized>(l: usize, p: usize, beta: f64, rng: &mut R) -> Result<Vec<f64>> {
    if p == 0 || p > l {
        return Err(Error::Parameter(format!("need 1 <= P <= L (P = {p}, L = {l})")));
    }
    let mut v = vec![0.0; l];
    v[0] = 1.0;
    for d in sample(rng, l - 1, p - 1) {
        v[d + 1] = (-beta * (d + 1) as f64).exp();
    }
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    Ok(v)
}

/// Uniform linear array response `[1, e^{j phi}, ..., e^{j (M-1) phi}]`.
pub fn steering_vector(phi: f64, m: usize) -> CVector {
    CVector::from_fn(m, |i, _| C64::from_polar(1.0, i as f64 * phi))
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let theta = rng.random_range(-PI..PI);
    PI * theta.sin()
}

/// Draws one multiuser channel.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelRealization> {
    let (m_r, m_t, l) = (cfg.m_r, cfg.m_t, cfg.max_taps);
    let mut h = vec![CMatrix::zeros(m_r, cfg.users * m_t); l];
    let scale = 1.0 / (m_t as f64).sqrt();
    let mut users = Vec::with_capacity(cfg.users);
    for u in 0..cfg.users {
        let pdp = gen_pdp(l, cfg.taps, cfg.beta, rng)?;
        let mut taps = Vec::with_capacity(cfg.taps);
        for (delay, &v) in pdp.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let tap = Tap {
                delay,
                gain: complex_normal(rng, v),
                phi_r: random_direction(rng),
                phi_t: random_direction(rng),
            };
            let ar = steering_vector(tap.phi_r, m_r);
            let at = steering_vector(tap.phi_t, m_t);
            let block = &ar * at.transpose() * (tap.gain * scale);
            h[delay].columns_mut(u * m_t, m_t).copy_from(&block);
            taps.push(tap);
        }
        users.push(UserChannel { pdp, taps });
    }
    Ok(ChannelRealization { m_r, m_t, users, h })
}

/// Zero-padded element-wise DFT of a tap sequence (`X[f] = sum_l x[l] e^{-j 2 pi f l / N_f}`).
pub fn to_frequency(taps: &[CMatrix], n_f: usize) -> Result<Vec<CMatrix>> {
    if n_f < taps.len() {
        return Err(Error::Parameter(format!("N_f = {n_f} is smaller than the channel length {}", taps.len())));
    }
    let Some(first) = taps.first() else {
        return Ok(vec![CMatrix::zeros(0, 0); n_f]);
    };
    let (rows, cols) = first.shape();
    let fft = FftPlanner::new().plan_fft_forward(n_f);
    let mut out = vec![CMatrix::zeros(rows, cols); n_f];
    let mut buf = vec![C64::new(0.0, 0.0); n_f];
    for c in 0..cols {
        for r in 0..rows {
            buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            let mut any = false;
            for (l, t) in taps.iter().enumerate() {
                buf[l] = t[(r, c)];
                any |= buf[l] != C64::new(0.0, 0.0);
            }
            if !any {
                continue;
            }
            fft.process(&mut buf);
            for (f, z) in buf.iter().enumerate() {
                out[f][(r, c)] = *z;
            }
        }
    }
    Ok(out)
}

/// Transmit power `P_u` per user reaching the configured per-antenna SNR with
/// unit noise variance.
pub fn snr_to_power(cfg: &SystemConfig, ch: &ChannelRealization) -> Result<Vec<f64>> {
    let gamma = 10f64.powf(cfg.snr_db / 10.0);
    (0..ch.num_users())
        .map(|u| {
            let energy = ch.user_energy(u);
            if energy <= 0.0 {
                return Err(Error::Numerical(format!("user {u} has a zero-energy channel")));
            }
            Ok(match cfg.snr_scaling {
                SnrScaling::PerRealization => gamma * ch.m_r as f64 / energy,
                SnrScaling::Ensemble => gamma,
            })
        })
        .collect()
}

/// EVM noise-to-signal ratio (0 when EVM is disabled).
pub fn evm_ratio(evm_db: Option<f64>) -> f64 {
    evm_db.map_or(0.0, |e| 10f64.powf(e / 10.0))
}

/// `(1/B) sum_f H[f] diag(p_x * (1 + evm)) H[f]^H + noise` over `bins`.
///
/// `tx_power` holds one entry per column of `H[f]`.
pub fn receive_cov(
    h_f: &[CMatrix],
    bins: std::ops::RangeInclusive<usize>,
    tx_power: &[f64],
    evm: f64,
    noise: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    let weights: Vec<f64> = tx_power.iter().map(|p| p * (1.0 + evm)).collect();
    let signal = band_gram(h_f, bins, &weights)?;
    if signal.nrows() != noise.dim() {
        return Err(dim_err("receive_cov", noise.dim(), signal.nrows()));
    }
    Ok(HermitianMatrix::symmetrized(signal + noise.as_matrix()))
}

/// `(1/B) sum_{f in bins} H[f] diag(w) H[f]^H`, formed as one stacked product.
pub fn band_gram(h_f: &[CMatrix], bins: std::ops::RangeInclusive<usize>, w: &[f64]) -> Result<CMatrix> {
    let (lo, hi) = (*bins.start(), *bins.end());
    if hi >= h_f.len() || lo > hi {
        return Err(dim_err("band_gram", format!("bins within 0..{}", h_f.len()), format!("{lo}..={hi}")));
    }
    let (rows, cols) = h_f[lo].shape();
    if w.len() != cols {
        return Err(dim_err("band_gram", cols, w.len()));
    }
    let b = (hi - lo + 1) as f64;
    let sw: Vec<f64> = w.iter().map(|x| (x.max(0.0) / b).sqrt()).collect();
    let mut stacked = CMatrix::zeros(rows, cols * (hi - lo + 1));
    for (k, f) in (lo..=hi).enumerate() {
        if h_f[f].shape() != (rows, cols) {
            return Err(dim_err("band_gram", format!("{rows}x{cols}"), format!("{:?}", h_f[f].shape())));
        }
        for c in 0..cols {
            stacked.column_mut(k * cols + c).copy_from(&(h_f[f].column(c) * C64::new(sw[c], 0.0)));
        }
    }
    Ok(&stacked * stacked.adjoint())
}
