//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

// Abscissae and weights of the 15-point Kronrod rule and its embedded 7-point
// Gauss rule on [-1, 1] (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol` by recursive
/// bisection; the tolerance is split between halves.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let mut evaluations = 0;
    let (value, error) = recurse(&f, a, b, abs_tol, 0, &mut evaluations)?;
    Ok(Quadrature { value, error, evaluations })
}

fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
) -> Result<(f64, f64)> {
    let (value, err) = gk15(f, a, b);
    *evals += 15;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
    }
    if err <= tol || err <= 1e-15 * value.abs() {
        return Ok((value, err));
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Numerical(format!(
            "quadrature did not reach tolerance {tol:e} on [{a}, {b}] (estimate {err:e})"
        )));
    }
    let mid = 0.5 * (a + b);
    let (l, el) = recurse(f, a, mid, 0.5 * tol, depth + 1, evals)?;
    let (r, er) = recurse(f, mid, b, 0.5 * tol, depth + 1, evals)?;
    Ok((l + r, el + er))
}
