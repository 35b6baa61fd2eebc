use crate::error::{dim_err, Error, Result};
use crate::linalg::{kron, CMatrix, C64};

/// Largest grid (`M * L * K`) accepted by [`analytic_mse_direct`].
pub const DIRECT_SIZE_CAP: usize = 1024;

/// Separable channel and noise covariances: the full covariances are
/// `R_s ⊗ R_t ⊗ R_f` and `N_s ⊗ N_t ⊗ N_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableCovariance {
    pub rs: CMatrix,
    pub rt: CMatrix,
    pub rf: CMatrix,
    pub ns: CMatrix,
    pub nt: CMatrix,
    pub nf: CMatrix,
}

impl SeparableCovariance {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rs.nrows(), self.rt.nrows(), self.rf.nrows())
    }

    pub fn full_channel(&self) -> CMatrix {
        kron(&self.rs, &kron(&self.rt, &self.rf))
    }

    pub fn full_noise(&self) -> CMatrix {
        kron(&self.ns, &kron(&self.nt, &self.nf))
    }
}

fn check_dims(a: [&CMatrix; 3], cov: &SeparableCovariance) -> Result<(usize, usize, usize)> {
    let (m, l, k) = cov.dims();
    for (x, n, what) in [(a[0], m, "A_s"), (a[1], l, "A_t"), (a[2], k, "A_f")] {
        if x.shape() != (n, n) {
            return Err(dim_err("analytic MSE", format!("{what} {n}x{n}"), format!("{:?}", x.shape())));
        }
    }
    for (x, n) in [(&cov.ns, m), (&cov.nt, l), (&cov.nf, k)] {
        if x.shape() != (n, n) {
            return Err(dim_err("analytic MSE", format!("noise factor {n}x{n}"), format!("{:?}", x.shape())));
        }
    }
    Ok((m, l, k))
}

fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Analytic MSE `(C1 - 2 Re C2 + C3) / (K L M)` of the separable interpolator
/// `A_s ⊗ A_t ⊗ A_f` for an arbitrary pilot set (space-time-frequency
/// indices). Cost is quadratic in the number of pilots.
pub fn analytic_mse_kron(a_s: &CMatrix, a_t: &CMatrix, a_f: &CMatrix, cov: &SeparableCovariance, pilots: &[usize]) -> Result<f64> {
    let (m, l, k) = check_dims([a_s, a_t, a_f], cov)?;
    let n = m * l * k;
    if pilots.iter().any(|&p| p >= n) {
        return Err(Error::Parameter(format!("pilot index outside grid of size {n}")));
    }
    let (gs, gt, gf) = (a_s.adjoint() * a_s, a_t.adjoint() * a_t, a_f.adjoint() * a_f);
    let (ras, rat, raf) = (&cov.rs * a_s, &cov.rt * a_t, &cov.rf * a_f);
    let split = |p: usize| (p / (l * k), (p / k) % l, p % k);
    let idx: Vec<(usize, usize, usize)> = pilots.iter().map(|&p| split(p)).collect();
    let mut c1 = C64::new(0.0, 0.0);
    let mut c2 = C64::new(0.0, 0.0);
    for &(m1, l1, k1) in &idx {
        for &(m2, l2, k2) in &idx {
            let r = cov.rs[(m1, m2)] * cov.rt[(l1, l2)] * cov.rf[(k1, k2)]
                + cov.ns[(m1, m2)] * cov.nt[(l1, l2)] * cov.nf[(k1, k2)];
            c1 += r * gs[(m2, m1)] * gt[(l2, l1)] * gf[(k2, k1)];
        }
        c2 += ras[(m1, m1)] * rat[(l1, l1)] * raf[(k1, k1)];
    }
    let c3 = trace(&cov.rs) * trace(&cov.rt) * trace(&cov.rf);
    Ok((c1.re - 2.0 * c2.re + c3.re) / n as f64)
}

/// Same quantity as [`analytic_mse_kron`] when the pilot set is the product
/// `P_s x P_t x P_f`; every sum then factorizes per dimension.
pub fn analytic_mse_separable(
    a_s: &CMatrix,
    a_t: &CMatrix,
    a_f: &CMatrix,
    cov: &SeparableCovariance,
    sets: [&[usize]; 3],
) -> Result<f64> {
    let (m, l, k) = check_dims([a_s, a_t, a_f], cov)?;
    let factor = |a: &CMatrix, r: &CMatrix, nz: &CMatrix, set: &[usize]| -> (C64, C64, C64) {
        let g = a.adjoint() * a;
        let ra = r * a;
        let (mut s1, mut s2, mut s3) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for &i in set {
            for &j in set {
                s1 += r[(i, j)] * g[(j, i)];
                s2 += nz[(i, j)] * g[(j, i)];
            }
            s3 += ra[(i, i)];
        }
        (s1, s2, s3)
    };
    let fs = factor(a_s, &cov.rs, &cov.ns, sets[0]);
    let ft = factor(a_t, &cov.rt, &cov.nt, sets[1]);
    let ff = factor(a_f, &cov.rf, &cov.nf, sets[2]);
    let c1 = fs.0 * ft.0 * ff.0 + fs.1 * ft.1 * ff.1;
    let c2 = fs.2 * ft.2 * ff.2;
    let c3 = trace(&cov.rs) * trace(&cov.rt) * trace(&cov.rf);
    Ok((c1.re - 2.0 * c2.re + c3.re) / (m * l * k) as f64)
}

/// Brute-force MSE `tr(A_P (R + N) A_P^H) - 2 Re tr(A_P R) + tr R` with
/// materialized matrices; `A_P` is `a_stf` with the columns off the pilot set
/// zeroed.
pub fn analytic_mse_direct(a_stf: &CMatrix, r_hh: &CMatrix, r_nn: &CMatrix, pilots: &[usize]) -> Result<f64> {
    let n = r_hh.nrows();
    if n > DIRECT_SIZE_CAP {
        return Err(Error::Parameter(format!("grid of size {n} exceeds the direct-evaluation cap {DIRECT_SIZE_CAP}")));
    }
    for (x, what) in [(a_stf, "A"), (r_hh, "R_hh"), (r_nn, "R_nn")] {
        if x.shape() != (n, n) {
            return Err(dim_err("analytic_mse_direct", format!("{what} {n}x{n}"), format!("{:?}", x.shape())));
        }
    }
    let mut mask = vec![false; n];
    for &p in pilots {
        if p >= n {
            return Err(Error::Parameter(format!("pilot index outside grid of size {n}")));
        }
        mask[p] = true;
    }
    let mut ap = a_stf.clone();
    for (j, keep) in mask.iter().enumerate() {
        if !keep {
            ap.column_mut(j).fill(C64::new(0.0, 0.0));
        }
    }
    let t1 = trace(&(&ap * (r_hh + r_nn) * ap.adjoint()));
    let t2 = trace(&(&ap * r_hh));
    let t3 = trace(r_hh);
    Ok((t1.re - 2.0 * t2.re + t3.re) / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanest::{exponential_pdp, freq_corr, spatial_corr, time_corr, wiener_matrix};
    use crate::seed::rng_for;
    use proptest::prelude::*;
    use rand::Rng;

    fn scalar(x: f64) -> CMatrix {
        CMatrix::from_element(1, 1, C64::new(x, 0.0))
    }

    fn random_psd(rng: &mut impl Rng, n: usize) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let r = &a * a.adjoint();
        // unit diagonal
        let d: Vec<f64> = (0..n).map(|i| r[(i, i)].re.sqrt()).collect();
        CMatrix::from_fn(n, n, |i, j| r[(i, j)] / (d[i] * d[j]))
    }

    #[test]
    fn scalar_wiener_mse() {
        for s2 in [0.01, 0.5, 3.0] {
            let cov = SeparableCovariance {
                rs: scalar(1.0), rt: scalar(1.0), rf: scalar(1.0),
                ns: scalar(s2), nt: scalar(1.0), nf: scalar(1.0),
            };
            let a = scalar(1.0 / (1.0 + s2));
            let one = scalar(1.0);
            let kr = analytic_mse_kron(&a, &one, &one, &cov, &[0]).unwrap();
            assert!((kr - s2 / (1.0 + s2)).abs() < 1e-15);
            let sep = analytic_mse_separable(&a, &one, &one, &cov, [&[0], &[0], &[0]]).unwrap();
            assert!((sep - kr).abs() < 1e-15);
            let d = analytic_mse_direct(&a, &cov.full_channel(), &cov.full_noise(), &[0]).unwrap();
            assert!((d - kr).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_estimator_gives_unit_mse() {
        let cov = SeparableCovariance {
            rs: spatial_corr(2, true), rt: time_corr(0.05, 4), rf: freq_corr(&exponential_pdp(3, 0.5), 8).unwrap(),
            ns: CMatrix::identity(2, 2), nt: CMatrix::identity(4, 4), nf: CMatrix::identity(8, 8),
        };
        let z = CMatrix::zeros(64, 64);
        let all: Vec<usize> = (0..64).collect();
        assert!((analytic_mse_direct(&z, &cov.full_channel(), &cov.full_noise(), &all).unwrap() - 1.0).abs() < 1e-12);
        let a = CMatrix::identity(64, 64);
        assert!((analytic_mse_direct(&a, &cov.full_channel(), &cov.full_noise(), &[]).unwrap() - 1.0).abs() < 1e-12);
        let (zs, zt, zf) = (CMatrix::zeros(2, 2), CMatrix::zeros(4, 4), CMatrix::zeros(8, 8));
        assert!((analytic_mse_kron(&zs, &zt, &zf, &cov, &all).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_full_pilots_vanish() {
        let r = freq_corr(&exponential_pdp(8, 0.1), 8).unwrap() + CMatrix::identity(8, 8) * C64::new(1e-3, 0.0);
        let cov = SeparableCovariance {
            rs: scalar(1.0), rt: scalar(1.0), rf: r.clone(),
            ns: scalar(0.0), nt: scalar(0.0), nf: CMatrix::zeros(8, 8),
        };
        let all: Vec<usize> = (0..8).collect();
        let af = wiener_matrix(&r, 1e-14, &all).unwrap();
        let mse = analytic_mse_kron(&scalar(1.0), &scalar(1.0), &af, &cov, &all).unwrap();
        assert!(mse.abs() < 1e-9, "{mse}");
    }

    #[test]
    fn direct_size_cap() {
        let big = CMatrix::zeros(DIRECT_SIZE_CAP + 1, DIRECT_SIZE_CAP + 1);
        assert!(analytic_mse_direct(&big, &big, &big, &[]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn kron_matches_direct_and_separable(seed in any::<u64>(), s2 in 0.01f64..5.0) {
            let mut rng = rng_for(seed, 0, 0);
            let cov = SeparableCovariance {
                rs: random_psd(&mut rng, 2), rt: random_psd(&mut rng, 4), rf: random_psd(&mut rng, 8),
                ns: CMatrix::identity(2, 2) * C64::new(s2, 0.0), nt: CMatrix::identity(4, 4), nf: CMatrix::identity(8, 8),
            };
            let ps = [0usize, 1];
            let pt = [1usize, 3];
            let pf = [0usize, 3, 6];
            let a_s = wiener_matrix(&cov.rs, 0.3, &ps).unwrap();
            let a_t = wiener_matrix(&cov.rt, 0.3, &pt).unwrap();
            let a_f = wiener_matrix(&cov.rf, 0.3, &pf).unwrap();
            let mut pilots = Vec::new();
            for &m in &ps { for &l in &pt { for &k in &pf { pilots.push(m * 32 + l * 8 + k); } } }
            let kr = analytic_mse_kron(&a_s, &a_t, &a_f, &cov, &pilots).unwrap();
            let a = kron(&a_s, &kron(&a_t, &a_f));
            let d = analytic_mse_direct(&a, &cov.full_channel(), &cov.full_noise(), &pilots).unwrap();
            let sep = analytic_mse_separable(&a_s, &a_t, &a_f, &cov, [&ps, &pt, &pf]).unwrap();
            prop_assert!((kr - d).abs() <= 1e-10 * d.abs());
            prop_assert!((sep - d).abs() <= 1e-10 * d.abs());
        }
    }
}
