//! Monte-Carlo oracles for the analytic quantities: quantizer distortion and
//! output correlation, Bussgang gain and orthogonality, quantization-error
//! covariance and the channel-estimation MSE.
//!
//! Samples are drawn in fixed-size batches; batch `i` uses the generator
//! `rng_for(seed, stream, i)` and partial sums are combined in batch order, so
//! every estimate is independent of the thread count.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::chanest::SeparableCovariance;
use crate::error::{dim_err, Error, Result};
use crate::exec::Exec;
use crate::linalg::{kron, CMatrix, CVector, HermitianMatrix, C64};
use crate::quantization::{bussgang_gains, QuantizerBank, QuantizerSpec};
use crate::seed::{rng_for, stream};

/// Samples per batch.
pub const BATCH: usize = 1 << 15;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl McEstimate {
    /// Distance from `value` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.stderr > 0.0 {
            (self.mean - value).abs() / self.stderr
        } else if self.mean == value {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, value: f64, k: f64) -> bool {
        self.z_score(value) <= k
    }
}

/// Running first and second moments of one scalar.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn estimate(&self) -> McEstimate {
        let n = self.n as f64;
        if self.n == 0 {
            return McEstimate { mean: f64::NAN, stderr: f64::NAN, samples: 0 };
        }
        let mean = self.sum / n;
        let var = if self.n > 1 { ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        McEstimate { mean, stderr: (var / n).sqrt(), samples: self.n }
    }
}

/// Splits `n` samples into batches, runs `f(rng, batch_len)` for each and
/// merges the returned accumulators in batch order.
fn batched<T, F>(seed: u64, stream_id: u64, n: usize, exec: Exec, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync + Send,
{
    let batches = n.div_ceil(BATCH);
    exec.map(batches, |b| {
        let len = if b + 1 == batches { n - b * BATCH } else { BATCH };
        f(&mut rng_for(seed, stream_id, b as u64), len)
    })
}

fn merge_all(parts: Vec<Moments>) -> Moments {
    let mut acc = Moments::default();
    for p in &parts {
        acc.merge(p);
    }
    acc
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn check_samples(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return Err(Error::Parameter(format!("{what} needs at least {min} samples (got {n})")));
    }
    Ok(())
}

/// Mean squared error `E[(Q(x) - x)^2]` for `x ~ N(0, 1)`.
pub fn mc_distortion(spec: &QuantizerSpec, n: usize, seed: u64, exec: Exec) -> Result<McEstimate> {
    check_samples(n, 2, "mc_distortion")?;
    let parts = batched(seed, stream::MC_DISTORTION, n, exec, |rng, len| {
        let mut m = Moments::default();
        for _ in 0..len {
            let x = normal(rng);
            m.push((spec.quantize(x) - x).powi(2));
        }
        m
    });
    Ok(merge_all(parts).estimate())
}

/// `E[Q_a(x) Q_b(y)]` for unit-variance Gaussians with correlation `rho`.
pub fn mc_output_corr(qa: &QuantizerSpec, qb: &QuantizerSpec, rho: f64, n: usize, seed: u64, exec: Exec) -> Result<McEstimate> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::Parameter(format!("correlation {rho} outside [-1, 1]")));
    }
    check_samples(n, 100_000, "mc_output_corr")?;
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let parts = batched(seed, stream::MC_CORRELATION, n, exec, |rng, len| {
        let mut m = Moments::default();
        for _ in 0..len {
            let x = normal(rng);
            let y = rho * x + s * normal(rng);
            m.push(qa.quantize(x) * qb.quantize(y));
        }
        m
    });
    Ok(merge_all(parts).estimate())
}

/// Bussgang gain estimate and orthogonality residual for one quantizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BussgangEstimate {
    /// `Re E[Q(y) y*] / E[|y|^2]`.
    pub gain: McEstimate,
    /// `|E[e y*]|` with `e = Q(y) - g y` and `g` the analytic gain.
    pub residual: f64,
    /// Standard error of `residual`.
    pub residual_stderr: f64,
}

/// Bussgang oracle on proper complex Gaussian input with unit power.
pub fn mc_bussgang(spec: &QuantizerSpec, n: usize, seed: u64, exec: Exec) -> Result<BussgangEstimate> {
    check_samples(n, 2, "mc_bussgang")?;
    let agc = std::f64::consts::FRAC_1_SQRT_2;
    let g = spec.gain;
    // [Re(Q y*), |y|^2, Re(e y*), Im(e y*)]
    let parts = batched(seed, stream::MC_BUSSGANG, n, exec, |rng, len| {
        let mut m = [Moments::default(); 4];
        for _ in 0..len {
            let y = C64::new(agc * normal(rng), agc * normal(rng));
            let q = C64::new(agc * spec.quantize(y.re / agc), agc * spec.quantize(y.im / agc));
            let qy = q * y.conj();
            let ey = (q - y * g) * y.conj();
            m[0].push(qy.re);
            m[1].push(y.norm_sqr());
            m[2].push(ey.re);
            m[3].push(ey.im);
        }
        m
    });
    let mut acc = [Moments::default(); 4];
    for p in &parts {
        for (a, b) in acc.iter_mut().zip(p) {
            a.merge(b);
        }
    }
    let (qy, yy, er, ei) = (acc[0].estimate(), acc[1].estimate(), acc[2].estimate(), acc[3].estimate());
    let ratio = qy.mean / yy.mean;
    // delta-method standard error of the ratio
    let gain = McEstimate { mean: ratio, stderr: er.stderr / yy.mean, samples: n };
    let residual = er.mean.hypot(ei.mean);
    let residual_stderr = if residual > 0.0 {
        ((er.mean * er.stderr).powi(2) + (ei.mean * ei.stderr).powi(2)).sqrt() / residual
    } else {
        er.stderr.hypot(ei.stderr) / std::f64::consts::SQRT_2
    };
    Ok(BussgangEstimate { gain, residual, residual_stderr })
}

/// Entrywise Monte-Carlo estimate of a complex matrix expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    pub mean: CMatrix,
    /// Standard errors of the real parts.
    pub stderr_re: DMatrix<f64>,
    /// Standard errors of the imaginary parts.
    pub stderr_im: DMatrix<f64>,
}

impl MatrixEstimate {
    fn from_moments(n: usize, re: &[Moments], im: &[Moments]) -> Self {
        let mean = CMatrix::from_fn(n, n, |i, j| C64::new(re[i * n + j].estimate().mean, im[i * n + j].estimate().mean));
        let stderr_re = DMatrix::from_fn(n, n, |i, j| re[i * n + j].estimate().stderr);
        let stderr_im = DMatrix::from_fn(n, n, |i, j| im[i * n + j].estimate().stderr);
        MatrixEstimate { mean, stderr_re, stderr_im }
    }

    /// Largest deviation from `m` in standard errors over all real and
    /// imaginary parts with a nonzero standard error; parts with zero
    /// standard error must match exactly.
    pub fn max_z_score(&self, m: &CMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                for (est, val, se) in [
                    (self.mean[(i, j)].re, m[(i, j)].re, self.stderr_re[(i, j)]),
                    (self.mean[(i, j)].im, m[(i, j)].im, self.stderr_im[(i, j)]),
                ] {
                    let z = if se > 0.0 {
                        (est - val).abs() / se
                    } else if (est - val).abs() <= 1e-12 * val.abs().max(1.0) {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    worst = worst.max(z);
                }
            }
        }
        worst
    }
}

/// Monte-Carlo quantization-error statistics for a correlated input.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCovEstimate {
    /// `E[e e^H]`.
    pub r_ee: MatrixEstimate,
    /// `E[e y^H]`, zero by the Bussgang construction.
    pub cross: MatrixEstimate,
}

/// Draws `y ~ CN(0, R_yy)`, quantizes every chain with AGC at its exact
/// power and accumulates the error `e = r - F y`.
pub fn mc_error_cov(r_yy: &HermitianMatrix, bank: &QuantizerBank, n: usize, seed: u64, exec: Exec) -> Result<ErrorCovEstimate> {
    let dim = r_yy.dim();
    if bank.len() != dim {
        return Err(dim_err("mc_error_cov", dim, bank.len()));
    }
    check_samples(n, 2, "mc_error_cov")?;
    let l = matrix_sqrt(r_yy.as_matrix());
    let agc: Vec<f64> = r_yy.diagonal().iter().map(|d| (0.5 * d).sqrt()).collect();
    let gains = bussgang_gains(&bank.specs);
    let cells = dim * dim;
    let parts = batched(seed, stream::MC_ERROR_COV, n, exec, |rng, len| {
        let mut acc = vec![Moments::default(); 4 * cells];
        let mut z = CVector::zeros(dim);
        let mut e = vec![C64::new(0.0, 0.0); dim];
        for _ in 0..len {
            for v in z.iter_mut() {
                *v = C64::new(normal(rng), normal(rng)) * std::f64::consts::FRAC_1_SQRT_2;
            }
            let y = &l * &z;
            for i in 0..dim {
                let s = agc[i];
                let q = if s > 0.0 {
                    let spec = &bank.specs[i];
                    C64::new(s * spec.quantize(y[i].re / s), s * spec.quantize(y[i].im / s))
                } else {
                    C64::new(0.0, 0.0)
                };
                e[i] = q - y[i] * gains[i];
            }
            for i in 0..dim {
                for j in 0..dim {
                    let ee = e[i] * e[j].conj();
                    let ey = e[i] * y[j].conj();
                    let k = i * dim + j;
                    acc[k].push(ee.re);
                    acc[cells + k].push(ee.im);
                    acc[2 * cells + k].push(ey.re);
                    acc[3 * cells + k].push(ey.im);
                }
            }
        }
        acc
    });
    let mut acc = vec![Moments::default(); 4 * cells];
    for p in &parts {
        for (a, b) in acc.iter_mut().zip(p) {
            a.merge(b);
        }
    }
    Ok(ErrorCovEstimate {
        r_ee: MatrixEstimate::from_moments(dim, &acc[..cells], &acc[cells..2 * cells]),
        cross: MatrixEstimate::from_moments(dim, &acc[2 * cells..3 * cells], &acc[3 * cells..]),
    })
}

/// Hermitian PSD square root via the eigen-decomposition (negative
/// eigenvalues from rounding are clipped).
pub fn matrix_sqrt(m: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(m.clone());
    let mut v = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        v.column_mut(j).scale_mut(lam.max(0.0).sqrt());
    }
    v * eig.eigenvectors.adjoint()
}

/// Largest grid the channel-estimation oracle accepts.
pub const MC_GRID_CAP: usize = 8 * 4 * 2;

/// Simulates pilot observations of a channel with separable covariance,
/// applies `A_s (x) A_t (x) A_f` to the noisy pilots and returns the
/// normalized squared error `||h_hat - h||^2 / (K L M)`.
pub fn mc_channel_est(
    a_s: &CMatrix,
    a_t: &CMatrix,
    a_f: &CMatrix,
    cov: &SeparableCovariance,
    pilots: &[usize],
    n_draws: usize,
    seed: u64,
    exec: Exec,
) -> Result<McEstimate> {
    let (m, l, k) = cov.dims();
    let n = m * l * k;
    if n > MC_GRID_CAP {
        return Err(Error::Parameter(format!("grid of size {n} exceeds the oracle cap {MC_GRID_CAP}")));
    }
    for (x, d, what) in [(a_s, m, "A_s"), (a_t, l, "A_t"), (a_f, k, "A_f")] {
        if x.shape() != (d, d) {
            return Err(dim_err("mc_channel_est", format!("{what} {d}x{d}"), format!("{:?}", x.shape())));
        }
    }
    check_samples(n_draws, 2, "mc_channel_est")?;
    let mut mask = vec![false; n];
    for &p in pilots {
        if p >= n {
            return Err(Error::Parameter(format!("pilot index outside grid of size {n}")));
        }
        mask[p] = true;
    }
    let a = kron(a_s, &kron(a_t, a_f));
    let sh = matrix_sqrt(&cov.full_channel());
    let sn = matrix_sqrt(&cov.full_noise());
    let parts = batched(seed, stream::MC_CHANNEL_EST, n_draws, exec, |rng, len| {
        let mut acc = Moments::default();
        let draw = |rng: &mut ChaCha8Rng| {
            CVector::from_fn(n, |_, _| C64::new(normal(rng), normal(rng)) * std::f64::consts::FRAC_1_SQRT_2)
        };
        for _ in 0..len {
            let h = &sh * draw(rng);
            let noise = &sn * draw(rng);
            let mut y = &h + noise;
            for (i, keep) in mask.iter().enumerate() {
                if !keep {
                    y[i] = C64::new(0.0, 0.0);
                }
            }
            let err = &a * y - &h;
            acc.push(err.norm_squared() / n as f64);
        }
        acc
    });
    Ok(merge_all(parts).estimate())
}

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl OracleCheck {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        OracleCheck { name: name.into(), passed, detail }
    }
}

/// Sample counts for [`verify_suite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub distortion_samples: usize,
    pub correlation_samples: usize,
    pub bussgang_samples: usize,
    pub error_cov_samples: usize,
    pub channel_draws: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 2024,
            distortion_samples: 10_000_000,
            correlation_samples: 1_000_000,
            bussgang_samples: 1_000_000,
            error_cov_samples: 1_000_000,
            channel_draws: 10_000,
        }
    }
}

impl VerifyOptions {
    /// Sample counts divided by `factor` (kept above each oracle's minimum).
    pub fn reduced(self, factor: usize) -> Self {
        let f = factor.max(1);
        VerifyOptions {
            distortion_samples: (self.distortion_samples / f).max(100_000),
            correlation_samples: (self.correlation_samples / f).max(100_000),
            bussgang_samples: (self.bussgang_samples / f).max(100_000),
            error_cov_samples: (self.error_cov_samples / f).max(100_000),
            channel_draws: (self.channel_draws / f).max(1_000),
            ..self
        }
    }
}

/// Small separable channel-estimation setup used by the oracle suite: the
/// grid, its covariances at `snr_db` and matched Wiener filters.
pub fn small_estimation_setup(snr_db: f64) -> Result<(CMatrix, CMatrix, CMatrix, SeparableCovariance, Vec<usize>)> {
    use crate::chanest::{exponential_pdp, freq_corr, spatial_corr, time_corr, wiener_matrix};
    let (m, l, k) = (2, 4, 8);
    let sigma2 = 10f64.powf(-snr_db / 10.0);
    let per_dim = (1.0 + sigma2).cbrt() - 1.0;
    let rs = spatial_corr(m, true);
    let rt = time_corr(0.05, l);
    let rf = freq_corr(&exponential_pdp(4, 0.5), k)?;
    let (ps, pt, pf): (Vec<usize>, Vec<usize>, Vec<usize>) = ((0..m).collect(), vec![1], (0..k).step_by(2).collect());
    let a_s = wiener_matrix(&rs, per_dim, &ps)?;
    let a_t = wiener_matrix(&rt, per_dim, &pt)?;
    let a_f = wiener_matrix(&rf, per_dim, &pf)?;
    let mut pilots = Vec::new();
    for &s in &ps {
        for &t in &pt {
            pilots.extend(pf.iter().map(|&f| s * l * k + t * k + f));
        }
    }
    let cov = SeparableCovariance {
        rs,
        rt,
        rf,
        ns: CMatrix::identity(m, m) * C64::new(sigma2, 0.0),
        nt: CMatrix::identity(l, l),
        nf: CMatrix::identity(k, k),
    };
    Ok((a_s, a_t, a_f, cov, pilots))
}

/// Runs every oracle against its analytic counterpart.
pub fn verify_suite(opts: VerifyOptions, exec: Exec) -> Result<Vec<OracleCheck>> {
    use crate::chanest::analytic_mse_kron;
    use crate::config::{QuantizerFamily, Resolution};
    use crate::quantization::{quant_error_cov, transform_cov, MapCache};

    let cache = MapCache::new(QuantizerFamily::LloydMax, 1e-3, exec);
    let mut out = Vec::new();
    let seed = opts.seed;

    for b in 1..=6u8 {
        let spec = cache.spec(Resolution::Bits(b))?;
        let est = mc_distortion(&spec, opts.distortion_samples, seed ^ b as u64, exec)?;
        let err = (est.mean - spec.distortion).abs();
        out.push(OracleCheck::new(
            format!("distortion b={b}"),
            err < 1e-3,
            format!("analytic {:.6} mc {:.6} +- {:.1e}", spec.distortion, est.mean, est.stderr),
        ));
    }

    let one = Resolution::Bits(1);
    let map = cache.map(one, one)?;
    let q1 = cache.spec(one)?;
    for (i, rho) in [0.1, 0.5, 0.9].into_iter().enumerate() {
        let est = mc_output_corr(&q1, &q1, rho, opts.correlation_samples, seed.wrapping_add(i as u64), exec)?;
        let v = map.eval(rho);
        out.push(OracleCheck::new(
            format!("output correlation 1/1 bit rho={rho}"),
            est.within(v, 3.0),
            format!("map {v:.6} mc {:.6} +- {:.1e}", est.mean, est.stderr),
        ));
    }

    for b in 1..=6u8 {
        let spec = cache.spec(Resolution::Bits(b))?;
        let est = mc_bussgang(&spec, opts.bussgang_samples, seed ^ (b as u64) << 8, exec)?;
        let ok = est.gain.within(spec.gain, 3.0) && est.residual < 4.0 * est.residual_stderr.max(f64::MIN_POSITIVE);
        out.push(OracleCheck::new(
            format!("bussgang b={b}"),
            ok,
            format!(
                "gain {:.6} mc {:.6} +- {:.1e}; residual {:.2e} ({:.2} stderr)",
                spec.gain,
                est.gain.mean,
                est.gain.stderr,
                est.residual,
                est.residual / est.residual_stderr
            ),
        ));
    }

    let r_yy = correlated_test_input(seed);
    let bank = QuantizerBank::new(&[Resolution::Bits(1), Resolution::Bits(2), Resolution::Bits(3), Resolution::Bits(4)], &cache)?;
    let r_rr = transform_cov(&r_yy, &bank)?;
    let r_ee = quant_error_cov(&r_rr, &bussgang_gains(&bank.specs), &r_yy)?;
    let est = mc_error_cov(&r_yy, &bank, opts.error_cov_samples, seed, exec)?;
    let z_ee = est.r_ee.max_z_score(r_ee.as_matrix());
    let z_cross = est.cross.max_z_score(&CMatrix::zeros(4, 4));
    out.push(OracleCheck::new("error covariance 4x4 mixed bits", z_ee <= 3.0, format!("max deviation {z_ee:.2} stderr")));
    out.push(OracleCheck::new("error/input orthogonality 4x4", z_cross < 4.0, format!("max deviation {z_cross:.2} stderr")));

    for snr in [-10.0, 0.0, 10.0] {
        let (a_s, a_t, a_f, cov, pilots) = small_estimation_setup(snr)?;
        let analytic = analytic_mse_kron(&a_s, &a_t, &a_f, &cov, &pilots)?;
        let est = mc_channel_est(&a_s, &a_t, &a_f, &cov, &pilots, opts.channel_draws, seed, exec)?;
        let rel = (est.mean - analytic).abs() / analytic;
        out.push(OracleCheck::new(
            format!("channel estimation MSE {snr} dB"),
            rel < 0.03,
            format!("analytic {analytic:.5} mc {:.5} (relative {rel:.2e})", est.mean),
        ));
    }
    Ok(out)
}

/// Random 4x4 covariance with strong off-diagonal correlation and unequal
/// powers.
pub fn correlated_test_input(seed: u64) -> HermitianMatrix {
    let mut rng = rng_for(seed, stream::MC_ERROR_COV, u64::MAX);
    let a = CMatrix::from_fn(4, 4, |_, _| C64::new(normal(&mut rng), normal(&mut rng)));
    let v = CVector::from_fn(4, |_, _| C64::new(normal(&mut rng), normal(&mut rng)));
    let m = &a * a.adjoint() * C64::new(0.2, 0.0) + &v * v.adjoint() + CMatrix::identity(4, 4) * C64::new(0.1, 0.0);
    HermitianMatrix::symmetrized(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanest::{analytic_mse_kron, spatial_corr};
    use crate::config::{QuantizerFamily, Resolution};
    use crate::quantization::{design_quantizer, MapCache};
    use std::f64::consts::PI;

    fn spec(b: u8) -> QuantizerSpec {
        design_quantizer(Resolution::Bits(b), QuantizerFamily::LloydMax).unwrap()
    }

    #[test]
    fn moments_merge_and_estimate() {
        let mut a = Moments::default();
        let mut b = Moments::default();
        for x in [1.0, 2.0, 3.0] {
            a.push(x);
        }
        b.push(4.0);
        a.merge(&b);
        let e = a.estimate();
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(e.within(2.5, 0.0));
    }

    #[test]
    fn thread_count_does_not_change_estimates() {
        let q = spec(3);
        let a = mc_output_corr(&q, &q, 0.3, 200_000, 9, Exec::Sequential).unwrap();
        let b = mc_output_corr(&q, &q, 0.3, 200_000, 9, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn output_corr_examples() {
        let q = spec(1);
        let zero = mc_output_corr(&q, &q, 0.0, 400_000, 1, Exec::Parallel).unwrap();
        assert!(zero.within(0.0, 3.0));
        let full = mc_output_corr(&q, &q, 1.0, 100_000, 1, Exec::Parallel).unwrap();
        assert!((full.mean - 2.0 / PI).abs() < 1e-12);
        let half = mc_output_corr(&q, &q, 0.5, 400_000, 2, Exec::Parallel).unwrap();
        assert!(half.within((2.0 / PI) * (2.0 / PI) * 0.5f64.asin(), 3.0));
        assert!(mc_output_corr(&q, &q, 1.5, 100_000, 1, Exec::Parallel).is_err());
        assert!(mc_output_corr(&q, &q, 0.5, 10, 1, Exec::Parallel).is_err());
    }

    #[test]
    fn full_correlation_is_direct_bin_sum() {
        let (qa, qb) = (spec(2), spec(3));
        // E[Q_a(x) Q_b(x)] by summing over the merged bins
        let mut edges: Vec<f64> = qa.thresholds.iter().chain(&qb.thresholds).copied().collect();
        edges.sort_by(f64::total_cmp);
        let mut bounds = vec![f64::NEG_INFINITY];
        bounds.extend(edges);
        bounds.push(f64::INFINITY);
        let mut direct = 0.0;
        for w in bounds.windows(2) {
            let mid = if w[0].is_infinite() { w[1] - 1.0 } else if w[1].is_infinite() { w[0] + 1.0 } else { 0.5 * (w[0] + w[1]) };
            direct += crate::special::normal_interval(w[0], w[1]) * qa.quantize(mid) * qb.quantize(mid);
        }
        let est = mc_output_corr(&qa, &qb, 1.0, 400_000, 4, Exec::Parallel).unwrap();
        assert!(est.within(direct, 3.0), "{est:?} {direct}");
    }

    #[test]
    fn bussgang_examples() {
        let q = spec(1);
        let est = mc_bussgang(&q, 1_000_000, 5, Exec::Parallel).unwrap();
        assert!(est.gain.within(2.0 / PI, 3.0), "{est:?}");
        assert!(est.residual < 4.0 * est.residual_stderr);
        let ideal = QuantizerSpec::ideal(QuantizerFamily::LloydMax);
        let est = mc_bussgang(&ideal, 100_000, 5, Exec::Parallel).unwrap();
        assert!((est.gain.mean - 1.0).abs() < 1e-12);
        assert!(est.residual < 1e-12);
    }

    #[test]
    fn distortion_matches_design() {
        for b in [1u8, 3] {
            let q = spec(b);
            let est = mc_distortion(&q, 1_000_000, 6, Exec::Parallel).unwrap();
            assert!(est.within(q.distortion, 4.0), "{b}: {est:?} vs {}", q.distortion);
        }
    }

    #[test]
    fn error_cov_of_diagonal_input() {
        let cache = MapCache::new(QuantizerFamily::LloydMax, 1e-3, Exec::Sequential);
        let bank = QuantizerBank::new(&[Resolution::Bits(1), Resolution::Bits(2)], &cache).unwrap();
        let r = HermitianMatrix::from_real_diagonal(&[1.0, 3.0]);
        let est = mc_error_cov(&r, &bank, 300_000, 7, Exec::Parallel).unwrap();
        let s1 = bank.specs[0].distortion;
        let s2 = bank.specs[1].distortion;
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![
            C64::new(s1 * (1.0 - s1), 0.0),
            C64::new(3.0 * s2 * (1.0 - s2), 0.0),
        ]));
        assert!(est.r_ee.max_z_score(&expected) < 4.0);
        assert!(est.cross.max_z_score(&CMatrix::zeros(2, 2)) < 4.5);
    }

    #[test]
    fn channel_oracle_trivial_cases() {
        let (_, _, _, cov, pilots) = small_estimation_setup(0.0).unwrap();
        let (m, l, k) = cov.dims();
        let zero = |d: usize| CMatrix::zeros(d, d);
        let est = mc_channel_est(&zero(m), &zero(l), &zero(k), &cov, &pilots, 4000, 3, Exec::Parallel).unwrap();
        assert!(est.within(1.0, 4.0), "{est:?}");

        let quiet = SeparableCovariance { ns: CMatrix::zeros(m, m), ..cov.clone() };
        let eye = |d: usize| CMatrix::identity(d, d);
        let all: Vec<usize> = (0..m * l * k).collect();
        let est = mc_channel_est(&eye(m), &eye(l), &eye(k), &quiet, &all, 100, 3, Exec::Parallel).unwrap();
        assert!(est.mean < 1e-20);

        let big = SeparableCovariance { rs: spatial_corr(4, true), ns: CMatrix::identity(4, 4), ..cov };
        assert!(mc_channel_est(&eye(4), &eye(l), &eye(k), &big, &pilots, 100, 3, Exec::Parallel).is_err());
    }

    #[test]
    fn channel_oracle_agrees_at_moderate_snr() {
        let (a_s, a_t, a_f, cov, pilots) = small_estimation_setup(5.0).unwrap();
        let analytic = analytic_mse_kron(&a_s, &a_t, &a_f, &cov, &pilots).unwrap();
        let est = mc_channel_est(&a_s, &a_t, &a_f, &cov, &pilots, 4000, 11, Exec::Parallel).unwrap();
        assert!(est.within(analytic, 4.0), "{est:?} vs {analytic}");
    }

    #[test]
    fn matrix_sqrt_squares_back() {
        let r = correlated_test_input(1);
        let s = matrix_sqrt(r.as_matrix());
        assert!((&s * &s - r.as_matrix()).norm() < 1e-10 * r.trace());
    }
}
