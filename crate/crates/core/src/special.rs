//! Scalar special functions: standard normal density/CDF and Bessel J0.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(x)`, accurate for large `x`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `P(a <= X < b)` for a standard normal, computed on the side that avoids
/// cancellation.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_sf(b)
    }
}

/// Inverse standard normal CDF by bracketed Newton iteration.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability must be in (0, 1)");
    if p < 0.5 {
        return -normal_quantile(1.0 - p);
    }
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    let mut x = (-2.0 * (1.0 - p).ln()).sqrt().min(38.0);
    for _ in 0..200 {
        let f = normal_sf(x) - (1.0 - p);
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = f / normal_pdf(x).max(1e-300);
        let mut next = x + step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() < 1e-15 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// Zeroth-order Bessel function of the first kind.
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// Bivariate standard normal density with correlation `rho`.
pub fn bivariate_normal_pdf(a: f64, c: f64, rho: f64) -> f64 {
    let one_m = 1.0 - rho * rho;
    (-(a * a + c * c - 2.0 * rho * a * c) / (2.0 * one_m)).exp() / (2.0 * PI * one_m.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// J0(x) = (1/pi) * int_0^pi cos(x sin t) dt; the trapezoid rule is
    /// spectrally accurate for this periodic integrand.
    fn j0_by_integral(x: f64) -> f64 {
        let n = 400;
        let h = PI / n as f64;
        let mut s = 0.5 * ((x * 0.0f64.sin()).cos() + (x * PI.sin()).cos());
        for k in 1..n {
            s += (x * (k as f64 * h).sin()).cos();
        }
        s * h / PI
    }

    #[test]
    fn j0_matches_integral_representation() {
        for &x in &[0.0, 0.5, PI, 2.404_825_557_695_773, 10.0, 63.0 * PI, 200.0] {
            assert!((bessel_j0(x) - j0_by_integral(x)).abs() < 1e-12, "x={x}");
        }
        assert!((bessel_j0(PI) + 0.304_242_177_644_093_9).abs() < 1e-12);
    }

    #[test]
    fn cdf_and_tail_are_consistent() {
        for &x in &[-6.0, -1.0, 0.0, 0.3, 5.0] {
            assert!((normal_cdf(x) + normal_sf(x) - 1.0).abs() < 1e-15);
        }
        assert!((normal_interval(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-14);
        assert!(normal_interval(8.0, 9.0) > 0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.9, 0.999_999] {
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-13 * p.max(1e-3), "p={p}");
        }
    }
}
